"""Bisect the default top-face traction so the nominal point deforms by a target QoI.

Usage: python scripts/calibrate_load.py [target_percent]

This was run once; the result is frozen in ``podhta.fullmodel.DEFAULT_LOAD``.
It also reports the load at which the softest grid point (E = 100) would
leave the stable branch, as a margin check.
"""

import sys

from podhta.fullmodel import LatticeConfig, ParameterPoint, solve_full

NOMINAL = ParameterPoint(1.0, 1.0, 1.0, 150.0)


def qoi_at(load, params=NOMINAL, n=2):
    res = solve_full(params, LatticeConfig(n=n, load_total=load))
    return res.qoi if res.converged else float("nan")


def bisect_load(target, lo=-1.0, hi=-60.0, iters=40):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if qoi_at(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


if __name__ == "__main__":
    target = float(sys.argv[1]) if len(sys.argv) > 1 else 16.0
    load = round(bisect_load(target), 2)
    print(f"load_total = {load}  -> nominal QoI {qoi_at(load):.4f} %")
    soft = ParameterPoint(1.0, 1.0, 1.0, 100.0)
    print(f"softest grid point E=100: QoI {qoi_at(load, soft):.4f} %")
