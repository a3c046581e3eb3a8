"""Two qubits evolved twice: directly, and through the 8-state classical FSM.

Run: python demos/two_routes.py
"""
import numpy as np

from qsfm import bridge, quantum

Ep = np.array([0.5, 0.9, 0.45, 0.85])
tb = quantum.two_qubit_hamiltonian(Ep, 0.3, 0.2, q=0.5, d=[1.0, 1.3, 0.9, 1.6])
w, V = np.linalg.eigh(tb.H)

# shifting by the ground energy leaves probabilities alone but slows the phases,
# so no amplitude crosses the real or imaginary axis during one period
H = tb.H - w[0] * np.eye(4)
psi0 = np.exp(1j * np.pi / 4) * (V[:, 0] + 0.1 * V[:, 1])
psi0 /= np.linalg.norm(psi0)

T = 2 * np.pi / (w[1] - w[0])
res = bridge.quantum_to_fsm(H, psi0, T, 1e-3)
print(f"period {T:.4f}, samples {len(res.t)}")
print(f"max |P_fsm - P_quantum| = {res.max_deviation:.3e}")

# %% entanglement along the way
for k in np.linspace(0, len(res.t) - 1, 5).astype(int):
    psi = quantum.evolve_exact(H, psi0, [res.t[k]])[0]
    SA, SB = quantum.entanglement_entropies(psi)
    print(f"t = {res.t[k]:7.3f}  S_A = {SA:.6f}  S_B = {SB:.6f}")
