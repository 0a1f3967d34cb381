"""Uniform disk of rotlets: the principal-value velocity diverges
logarithmically at the rim, u ~ A log(R - s) + B."""
import numpy as np

from stokeslcp.rotlet import RotletDiskModel, disk_oracle, fit_edge_log, u_theta_pv

model = RotletDiskModel(R=1.0)
for s in (0.2, 0.5, 0.8):
    print(f"s = {s}: PV {u_theta_pv(model, s): .12f}   polar oracle {disk_oracle(model, s): .12f}")

s = 1 - np.geomspace(0.05, 0.001, 20)
u = np.array([u_theta_pv(model, x) for x in s])
(A, B), res = fit_edge_log(s, u, model.R)
print(f"edge fit: A = {A:.5f} (pole coefficient -1/(4 pi) = {-1 / (4 * np.pi):.5f}), B = {B:.5f}")
print(f"residual / range = {res / np.ptp(u):.2e}")
