#!/usr/bin/env python3
"""Contrast gains versus training budget on one synthetic scene.

The published recipe fixes 1000 iterations of plain SGD at 1e-3. On
this repository's surrogate scenes that budget trains the denoiser to
only a few percent of its smoothing ceiling, which bounds the gCNR
gain near +0.02. This script demonstrates that the same implementation
reaches much larger contrast gains when the iteration budget grows,
and shows the speckle-preservation cost of overtraining (the KS p-value
decays as the output distribution drifts).

Runs a 96x128 scene; expect roughly a minute per 500 iterations.
"""

import argparse

import numpy as np

from pwzs import compounding as cp
from pwzs import simulator as sim
from pwzs import training as tr
from pwzs.metrics import RoiSpec, evaluate


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--budgets", type=int, nargs="+", default=[1000, 3000, 6000])
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    spec = sim.PhantomSpec(height=96, width=128, cysts=((48, 64, 20, 0.0),), seed=args.seed)
    clean = sim.make_phantom(spec)
    angles = np.linspace(-16, 16, 75)
    stack = sim.simulate_stack(clean, angles, sim.NoiseModel(), seed=args.seed)
    working = stack.subset(cp.select_angles(list(angles), 5))
    noisy = cp.full_bmode(working)
    roi = RoiSpec(
        roi_circles=((48, 64, 15),),
        background_circles=((20, 24, 14), (20, 104, 14), (76, 24, 14), (76, 104, 14)),
        speckle_rect=(4, 4, 28, 28),
    )
    kw = dict(n_windows=10, window_radius=6, seed=args.seed)
    base = evaluate(noisy, noisy, roi, **kw)
    print(f"noisy 5-angle: gCNR {base.gcnr_mean:.3f}, CNR {base.cnr_db_mean:.2f} dB")
    print(f"{'iterations':>10}  {'gCNR':>6} {'gain':>7}  {'CNR dB':>7} {'gain':>7}  {'KS p':>7}")
    for budget in args.budgets:
        params, _ = tr.train_zero_shot(
            working, tr.TrainConfig(iterations=budget, seed=args.seed)
        )
        rep = evaluate(tr.denoise(params, noisy), noisy, roi, **kw)
        print(
            f"{budget:>10}  {rep.gcnr_mean:6.3f} {rep.gcnr_mean - base.gcnr_mean:+7.3f}  "
            f"{rep.cnr_db_mean:7.2f} {rep.cnr_db_mean - base.cnr_db_mean:+7.2f}  "
            f"{rep.ks_p_value:7.3f}"
        )


if __name__ == "__main__":
    main()
