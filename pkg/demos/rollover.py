"""Two spheres dragged past each other: the contact force switches on, drops
to almost nothing as they roll over the apex, and switches off again.

Uses the boundary-integral backend at the coarse step (about 10 s).  Pass
``fine`` on the command line for the 1000-step run (a minute or two).
"""
import sys

import numpy as np

from stokeslcp.bench import rollover_run

fine = "fine" in sys.argv[1:]
sig = rollover_run(backend="bi", dt=0.1 if fine else 1.0, steps=1000 if fine else 100, separation=3.0)
recs = sig.pop("records")
for k in ("approach", "contact", "apex", "separation", "peak_gamma", "apex_gamma", "min_gap"):
    print(f"{k:12s} {sig[k]}")

# crude text plot of gamma against time
g = np.array([r.gamma.max() if r.gamma.size else 0.0 for r in recs])
step = max(1, len(g) // 40)
for k in range(0, len(g), step):
    print(f"t={recs[k].time:7.2f} " + "#" * int(round(50 * g[k] / max(g.max(), 1e-300))))
