"""BBPGD against accelerated projected gradient on random contact-like LCPs.

Both solvers only touch M through matrix-vector products, which is what a
mobility solve costs in a simulation.  Prints MVOP counts per condition number.
"""
import warnings

import numpy as np

from stokeslcp.cqp import dense_problem, enumerate_lcp_oracle, solve_apgd, solve_bbpgd

rng = np.random.default_rng(0)
n = 10
print("cond      bbpgd  apgd   (mean MVOPs over 20 instances, tol 1e-8)")
for cond in (1e1, 1e2, 1e3, 1e4):
    counts = {"bbpgd": [], "apgd": []}
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        M = (Q * np.geomspace(1.0, cond, n)) @ Q.T
        q = rng.standard_normal(n)
        ref = enumerate_lcp_oracle(M, q)
        for name, solve in (("bbpgd", solve_bbpgd), ("apgd", solve_apgd)):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                g, st = solve(dense_problem(M, q, tol=1e-8, max_iter=50000))
            assert np.abs(g - ref).max() < 1e-5
            counts[name].append(st.mvops)
    print(f"{cond:8.0e}  {np.mean(counts['bbpgd']):5.1f}  {np.mean(counts['apgd']):5.1f}")
