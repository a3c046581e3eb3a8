"""Command-line front end.

    qsfm run --scenario scenario.json --out outdir [--steps N] [--seed N] [--format csv|json]
    qsfm verify [--suite NAME] [--out outdir] [--seed N]

Exit codes: 0 success, 2 validation error, 3 numerical failure (and failed
invariants for ``verify``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, bridge, fsm, quantum, verify, wannier
from .errors import NumericalError, ValidationError

log = logging.getLogger("qsfm")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

# ------------------------------------------------------------------ schemas

_num = {"type": "number"}
_cnum = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}
_matrix = {"type": "array", "minItems": 2, "maxItems": 8,
           "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 8}}
_vec = {"type": "array", "items": _num, "minItems": 2, "maxItems": 8}
_cvec4 = {"type": "array", "items": _cnum, "minItems": 4, "maxItems": 4}
_ham = {
    "type": "object",
    "required": ["E_p", "t_s"],
    "properties": {
        "E_p": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "t_s": {"type": "object", "required": ["1A2A", "1B2B"],
                "properties": {"1A2A": _cnum, "1B2B": _cnum}},
        "q": _num,
        "d": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "dissipative_im_Ep": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
    },
}
_potential = {
    "oneOf": [
        {"type": "object", "required": ["type", "barrier_height", "well_width", "separation"],
         "properties": {"type": {"const": "double_well"}, "barrier_height": _num,
                        "well_width": _num, "separation": _num}},
        {"type": "object", "required": ["type", "x", "V"],
         "properties": {"type": {"const": "table"},
                        "x": {"type": "array", "items": _num},
                        "V": {"type": "array", "items": _num}}},
    ]
}
_steps = {"type": "integer", "minimum": 1}

SCHEMAS = {
    "fsm": {
        "type": "object", "required": ["generator", "p0", "t1", "steps"],
        "properties": {"generator": _matrix, "p0": _vec, "t0": _num, "t1": _num, "steps": _steps,
                       "sir": {"type": "object", "required": ["b", "gamma"],
                               "properties": {"b": _num, "gamma": _num}}},
    },
    "quantum": {
        "type": "object", "required": ["hamiltonian", "psi0", "t1", "steps"],
        "properties": {"hamiltonian": _ham, "psi0": _cvec4, "t0": _num, "t1": _num,
                       "steps": _steps, "base": {"enum": ["e", "bits"]}},
    },
    "map-q2c": {
        "type": "object", "required": ["hamiltonian", "psi0", "t1"],
        "properties": {"hamiltonian": _ham, "psi0": _cvec4, "t1": _num,
                       "dt": {"type": "number", "exclusiveMinimum": 0},
                       "samples": {"type": "integer", "minimum": 2}},
    },
    "map-c2q": {
        "type": "object", "required": ["generator", "p0"],
        "properties": {"generator": _matrix, "p0": _vec, "t1": _num, "steps": _steps},
    },
    "wannier-1d": {
        "type": "object", "required": ["potential", "grid"],
        "properties": {"potential": _potential,
                       "grid": {"type": "object", "required": ["half_width", "n_points"],
                                "properties": {"half_width": _num,
                                               "n_points": {"type": "integer", "minimum": 64}}}},
    },
    "wannier-2d": {
        "type": "object", "required": ["E"],
        "properties": {"E": {"type": "array", "items": _cnum, "minItems": 4, "maxItems": 4},
                       "theta1": _num, "theta2": _num,
                       "overlaps": {"oneOf": [{"const": "box"}, _matrix]}},
    },
    "entropy": {
        "type": "object",
        "oneOf": [{"required": ["psi"]}, {"required": ["p"]}],
        "properties": {"psi": _cvec4,
                       "p": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                       "base": {"enum": ["e", "bits"]}},
    },
    "verify": {
        "type": "object",
        "properties": {"suite": {"type": "string"}, "seed": {"type": "integer"}},
    },
}

SCENARIO_SCHEMA = {
    "type": "object", "required": ["kind"],
    "properties": {"kind": {"enum": sorted(SCHEMAS)}, "parameters": {"type": "object"}},
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["kind", "inputs", "derived_parameters", "max_residuals", "wall_time"],
    "properties": {
        "kind": {"enum": sorted(SCHEMAS)},
        "inputs": {"type": "object"},
        "derived_parameters": {"type": "object"},
        "max_residuals": {"type": "object",
                          "additionalProperties": {"type": ["number", "string", "null"]}},
        "wall_time": {"type": "number", "minimum": 0},
    },
}

# ------------------------------------------------------------------ io helpers


def jsonable(x):
    """Complex as [re, im]; non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _complex_vec(v) -> np.ndarray:
    return np.array([complex(*c) if isinstance(c, list) else complex(c) for c in v])


def write_table(path: Path, header: list[str], data: np.ndarray, fmt: str) -> Path:
    data = np.asarray(data, dtype=float)
    if fmt == "json":
        path = path.with_suffix(".json")
        rows = [dict(zip(header, map(float, r))) for r in data]
        path.write_text(json.dumps(jsonable(rows), indent=1) + "\n", newline="\n")
    else:
        path = path.with_suffix(".csv")
        with open(path, "w", newline="\n") as fh:
            np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=",".join(header),
                       comments="", newline="\n")
    return path


# ------------------------------------------------------------------ pipelines


def _run_fsm(p, out, fmt, seed):
    S = np.array(p["generator"], dtype=float)
    p0 = np.array(p["p0"], dtype=float)
    t0, t1, steps = p.get("t0", 0.0), p["t1"], p["steps"]
    if S.shape != (len(p0), len(p0)):
        raise ValidationError("generator and p0 sizes differ")
    derived, resid = {}, {}
    if "sir" in p:
        b, g = p["sir"]["b"], p["sir"]["gamma"]
        tr = fsm.evolve_nonlinear(lambda t, y: fsm.sir_generator(b, g, y), p0, t0, t1, steps)
        resid["total_drift"] = float(np.abs(tr.p.sum(1) - p0.sum()).max())
    else:
        tr = fsm.evolve(S, p0, t0, t1, steps)
        if S.shape == (2, 2):
            cf = fsm.closed_form_evolve(S, p0, tr.t, t0)
            resid["closed_form"] = float(np.abs(cf - tr.p).max())
            derived["eigenvalues"] = np.array(fsm.linalg.eig2_closed_form(S))
    write_table(out / "trajectory", ["t"] + [f"p{k + 1}" for k in range(len(p0))],
                np.column_stack([tr.t, tr.p]), fmt)
    derived["final"] = tr.final
    return derived, resid


def _run_quantum(p, out, fmt, seed):
    H = quantum.hamiltonian_from_json(p["hamiltonian"])
    psi0 = _complex_vec(p["psi0"])
    tr = quantum.evolve_quantum(H, psi0, p.get("t0", 0.0), p["t1"], p["steps"])
    base = p.get("base", "e")
    ent = np.array([quantum.entanglement_entropies(s / np.linalg.norm(s), base) for s in tr.psi])
    cols = ([f"p{k}" for k in range(1, 5)] + [f"theta{k}" for k in range(1, 5)]
            + ["norm", "S_A", "S_B"])
    write_table(out / "trajectory", ["t"] + cols,
                np.column_stack([tr.t, tr.p, tr.theta, tr.norm, ent]), fmt)
    derived = {"H": H.H, "hermitian": H.is_hermitian()}
    resid = {"entropy_asymmetry": float(np.abs(ent[:, 0] - ent[:, 1]).max())}
    if not H.dissipative:
        resid["norm_drift"] = float(np.abs(tr.norm - 1).max())
    return derived, resid


def _run_q2c(p, out, fmt, seed):
    H = quantum.hamiltonian_from_json(p["hamiltonian"])
    psi0 = _complex_vec(p["psi0"])
    psi0 = psi0 / np.linalg.norm(psi0)
    dt = p.get("dt", 1e-4)
    res = bridge.quantum_to_fsm(H, psi0, p["t1"], dt)
    n = len(res.t)
    idx = np.unique(np.linspace(0, n - 1, min(p.get("samples", 1001), n)).round().astype(int))
    names = [f"{part}{k}" for k in range(1, 5) for part in ("pR", "pI")]
    write_table(out / "trajectory",
                ["t"] + [f"fsm_{c}" for c in names] + [f"quantum_{c}" for c in names],
                np.column_stack([res.t, res.P_fsm, res.P_quantum])[idx], fmt)
    derived = {"S_hat_t0": bridge.synthesize_S(H, psi0), "max_deviation": res.max_deviation,
               "steps": n - 1}
    return derived, {"max_deviation": res.max_deviation}


def _run_c2q(p, out, fmt, seed):
    S = np.array(p["generator"], dtype=float)
    p0 = np.array(p["p0"], dtype=float)
    m = bridge.fsm_to_quantum(S, p0)
    derived = {"H_c": m.H_c, "psi0": m.psi0, "note": m.note}
    resid = {}
    if "t1" in p:
        steps = p.get("steps", 1000)
        t, x = bridge.evolve_sqrt(S, p0, 0.0, p["t1"], steps)
        tr = fsm.evolve(S, p0, 0.0, p["t1"], steps)
        resid["two_route"] = float(np.abs(x ** 2 - tr.p).max())
        N = len(p0)
        write_table(out / "trajectory",
                    ["t"] + [f"sqrt_p{k + 1}" for k in range(N)] + [f"p{k + 1}" for k in range(N)],
                    np.column_stack([t, x, tr.p]), fmt)
    (out / "classical_hamiltonian.json").write_text(json.dumps(jsonable(derived), indent=1) + "\n")
    return derived, resid


def _run_w1d(p, out, fmt, seed):
    V = wannier.potential_from_json(p["potential"])
    g = wannier.Grid1D.centered(p["grid"]["half_width"], p["grid"]["n_points"])
    rep = wannier.wannier_1d(V, g)
    pairs = wannier.solve_1d_eigen(V, g, 2)
    write_table(out / "wavefunctions", ["x", "V", "psi1", "psi2", "w_L", "w_R"],
                np.column_stack([g.x, V(g.x), pairs[0].psi, pairs[1].psi, rep.wL, rep.wR]), fmt)
    d = rep.to_dict()
    (out / "wannier_report.json").write_text(json.dumps(jsonable(d), indent=1) + "\n")
    E1, E2 = rep.E
    resid = {"orthonormality": float(rep.orthonormality_residuals.max()),
             "tb_spectrum": float(np.abs(np.linalg.eigvalsh(rep.tb_matrix) - rep.E).max()),
             "t_s_relative": float(abs(rep.tb_matrix[0, 1] / (0.5 * (E2 - E1)) - 1))}
    return d, resid


def _run_w2d(p, out, fmt, seed):
    E = _complex_vec(p["E"])
    E = E.real if np.all(E.imag == 0) else E
    derived, resid = {}, {}
    if "theta1" in p and "theta2" in p:
        th1, th2 = p["theta1"], p["theta2"]
    else:
        G = wannier.box_overlaps() if p.get("overlaps", "box") == "box" else np.array(p["overlaps"])
        sols = wannier.solve_angles_2d(G)
        th1, th2 = sols[0].theta1, sols[0].theta2
        derived["candidates"] = [{"theta1": s.theta1, "theta2": s.theta2, "mass": s.mass}
                                 for s in sols]
        resid["stationarity"] = float(np.abs(wannier.stationarity_residuals(G, th1, th2)).max())
    b = wannier.wannier2d_transform(th1, th2)
    Hw = wannier.wannier_hamiltonian(E, th1, th2)
    derived.update({"theta1": th1, "theta2": th2, "W": b.W, "u": b.u, "H_w": Hw})
    resid["W_inverse"] = float(np.abs(b.W @ b.W_inv - np.eye(4)).max())
    resid["u_norm"] = float(abs((b.u ** 2).sum() - 1))
    ev = np.linalg.eigvals(Hw)
    resid["spectrum"] = float(np.abs(np.sort_complex(ev) - np.sort_complex(E.astype(complex))).max())
    return derived, resid


def _run_entropy(p, out, fmt, seed):
    base = p.get("base", "e")
    if "psi" in p:
        psi = _complex_vec(p["psi"])
        rho = quantum.density_matrix(psi / np.linalg.norm(psi))
        sa, sb = quantum.von_neumann_entropy(quantum.reduce_A(rho), base), \
            quantum.von_neumann_entropy(quantum.reduce_B(rho), base)
        return {"S_A": sa, "S_B": sb, "rho_A": quantum.reduce_A(rho),
                "rho_B": quantum.reduce_B(rho)}, {"asymmetry": abs(sa - sb)}
    rho_c = bridge.classical_density(np.array(p["p"], dtype=float))
    sa, sb = bridge.classical_reduced_entropies(rho_c, base)
    return {"S_A": sa, "S_B": sb, "difference": sa - sb}, {}


def _run_verify(p, out, fmt, seed):
    report = verify.run_suites(p.get("suite"), p.get("seed", seed))
    (out / "verify_report.json").write_text(json.dumps(jsonable(report), indent=1) + "\n")
    per_suite = {}
    for r in report:
        per_suite[r["suite"]] = max(per_suite.get(r["suite"], 0.0), r["residual"])
    failed = [f"{r['suite']}/{r['invariant']}" for r in report if r["status"] != "pass"]
    return {"failed": failed, "checks": len(report)}, per_suite


PIPELINES = {
    "fsm": _run_fsm, "quantum": _run_quantum, "map-q2c": _run_q2c, "map-c2q": _run_c2q,
    "wannier-1d": _run_w1d, "wannier-2d": _run_w2d, "entropy": _run_entropy,
    "verify": _run_verify,
}


def load_scenario(path) -> tuple[str, dict]:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read scenario: {exc}") from None
    if not isinstance(obj, dict) or obj.get("kind") not in SCHEMAS:
        raise ValidationError(f"unknown or missing kind; expected one of: {', '.join(sorted(SCHEMAS))}")
    try:
        jsonschema.validate(obj, SCENARIO_SCHEMA)
        params = obj.get("parameters", {k: v for k, v in obj.items() if k != "kind"})
        jsonschema.validate(params, SCHEMAS[obj["kind"]])
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"scenario invalid: {exc.message}") from None
    return obj["kind"], params


def run_scenario(path, out, steps=None, seed=42, fmt="csv") -> dict:
    kind, params = load_scenario(path)
    if steps is not None:
        if kind == "map-q2c":
            params["dt"] = params["t1"] / steps
        elif "steps" in SCHEMAS[kind]["properties"]:
            params["steps"] = steps
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        derived, resid = PIPELINES[kind](params, out, fmt, seed)
    summary = {"kind": kind, "inputs": params, "derived_parameters": derived,
               "max_residuals": resid, "wall_time": time.perf_counter() - start}
    if kind == "map-q2c":
        summary["max_deviation"] = derived["max_deviation"]
    summary = jsonable(summary)
    jsonschema.validate(summary, SUMMARY_SCHEMA)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", newline="\n")
    return summary


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsfm", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("--scenario", required=True, help="scenario JSON file")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--steps", type=int, help="override the scenario step count")
    r.add_argument("--seed", type=int, default=42, help="RNG seed (default: 42)")
    r.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--suite", help="one of: " + ", ".join(verify.SUITES))
    v.add_argument("--out", help="directory for verify_report.json")
    v.add_argument("--seed", type=int, default=42)
    return ap


def _setup_logging():
    level = os.environ.get("QSFM_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            summary = run_scenario(args.scenario, args.out, args.steps, args.seed, args.format)
            print(json.dumps(summary["max_residuals"]))
            if summary["kind"] == "verify" and summary["derived_parameters"]["failed"]:
                return EXIT_NUMERICAL
            return EXIT_OK
        report = verify.run_suites(args.suite, args.seed)
        text = json.dumps(jsonable(report), indent=1)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "verify_report.json").write_text(text + "\n")
        print(text)
        return EXIT_OK if verify.all_passed(report) else EXIT_NUMERICAL
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
