"""Control power against the loop margin for perturbed optimal controllers.

For each of three perturbation directions Qt, the Youla parameter is moved
to Q_opt + kappa*Qt and the loop is both analyzed and simulated.  The
theoretical power ||G||^2/(1 - margin) blows up as the margin approaches 1.
Writes ``kappa_sweep.csv``.
"""
import argparse
import csv
import math
from pathlib import Path

import numpy as np

from msnet import ChannelSpec, LoopModel, RatFn
from msnet.linalg_ss import h2_norm_sq
from msnet.mcsim import SimConfig, kappa_sweep
from msnet.synth import synthesize

QTILDES = {
    "1": RatFn.const(1.0),
    "z^-1": RatFn.delay(1),
    "0.5/(1-0.5z^-1)": RatFn.from_z([0.5], [1.0, -0.5]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--horizon", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--margins", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.8, 0.9, 0.95])
    ap.add_argument("--theory-only", action="store_true")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    m = LoopModel(RatFn.from_z([1.0, -0.2], [1.0, -2.3, 1.32]), ChannelSpec((0.6, 0.3, 0.1), (0.6, 0.4, 0.0)))
    res = synthesize(m)
    cfg = None if args.theory_only else SimConfig(horizon=args.horizon, runs=args.runs, seed=args.seed)
    print(f"index = {res.index:.6f}")

    table = []
    for name, Qt in QTILDES.items():
        # margin(kappa) = index + kappa^2 ||W N Qt||^2, so the grid is picked in margin
        gain = h2_norm_sq(m.stats.W.mul(res.pair.N, reduce=False).mul(Qt, reduce=False))
        kappas = [0.0] + [math.sqrt((t - res.index) / gain) for t in args.margins if t > res.index]
        for r in kappa_sweep(m, Qt, kappas, cfg, synthesis=res):
            table.append((name, r.kappa, r.margin, r.power_theory, r.power_sim, r.power_sim_stderr, r.diverged))
            print(f"Qt={name:<16} kappa={r.kappa:.4f} margin={r.margin:.4f} "
                  f"theory={r.power_theory:10.3f} sim={r.power_sim:10.3f} +/- {r.power_sim_stderr:.3f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kappa_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["qtilde", "kappa", "margin", "power_theory", "power_sim", "power_sim_stderr", "diverged"])
        w.writerows([(q, *[repr(v) if isinstance(v, (float, np.floating)) else v for v in rest])
                     for q, *rest in table])


if __name__ == "__main__":
    main()
