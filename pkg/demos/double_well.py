"""Wannier pair of a 1D double well and the tunnelling it predicts.

Run: python demos/double_well.py
"""
import numpy as np

from qsfm import wannier

grid = wannier.Grid1D.centered(6.0, 1024)
V = wannier.double_well(barrier_height=5.0, well_width=2.0, separation=1.0)
rep = wannier.wannier_1d(V, grid)
E1, E2 = rep.E
print(f"E1 = {E1:.6f}, E2 = {E2:.6f}, gamma = {rep.gamma:.6f}")
print(f"left mass of w_L = {rep.left_mass:.5f}")
print("tight-binding matrix:")
print(np.array2string(rep.tb_matrix, precision=6))

# %% direct integration of the left-localized state
T_tb = 2 * np.pi / (E2 - E1)
t, psi = wannier.crank_nicolson(V, grid, rep.wL, 2.6 * T_tb, 0.05)
occ = np.array([wannier.left_mass(p, grid) for p in psi[::4]])
T_cn = wannier.oscillation_period(t[::4], occ)
print(f"period: tight-binding {T_tb:.3f}, Crank-Nicolson {T_cn:.3f}")
