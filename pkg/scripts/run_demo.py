#!/usr/bin/env python3
"""Small end-to-end demo: simulate, denoise, evaluate, print a table.

Runs on a reduced scene; the default budget takes a minute or two
on one core.
Use configs/default.cfg with the pwzs CLI for the full-size experiment.
"""

import argparse
import time

import numpy as np

from pwzs import compounding as cp
from pwzs import simulator as sim
from pwzs import training as tr
from pwzs.metrics import RoiSpec, evaluate


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--iterations", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    spec = sim.PhantomSpec(height=96, width=128, cysts=((48, 64, 18, 0.0),), seed=args.seed)
    noise = sim.NoiseModel()
    clean = sim.make_phantom(spec)
    angles = np.linspace(-16, 16, 75)
    stack = sim.simulate_stack(clean, angles, noise, seed=args.seed)
    working = stack.subset(cp.select_angles(list(angles), 5))
    print(f"scene {spec.height}x{spec.width}, working angles "
          f"{[round(a, 2) for a in working.angles_deg]}")

    noisy = cp.full_bmode(working)
    full = cp.full_bmode(stack)
    truth = cp.log_compress(clean)

    t0 = time.perf_counter()
    params, trace = tr.train_zero_shot(
        working, tr.TrainConfig(iterations=args.iterations, seed=args.seed)
    )
    cleaned = tr.denoise(params, noisy)
    print(f"trained {args.iterations} iterations in {time.perf_counter() - t0:.1f}s "
          f"(loss {trace.total[0]:.4f} -> {trace.total[-1]:.4f})")

    roi = RoiSpec(
        roi_circles=((48, 64, 14),),
        background_circles=((20, 24, 12), (20, 104, 12), (76, 24, 12), (76, 104, 12)),
        speckle_rect=(4, 4, 28, 28),
    )
    rows = [("noisy 5-angle", noisy), ("denoised", cleaned),
            ("75-angle", full), ("ground truth", truth)]
    print(f"\n{'image':>14}  {'gCNR':>6}  {'CNR dB':>7}  {'KS p':>7}")
    for name, img in rows:
        rep = evaluate(img, noisy, roi, n_windows=10, window_radius=5, seed=args.seed)
        print(f"{name:>14}  {rep.gcnr_mean:6.3f}  {rep.cnr_db_mean:7.2f}  {rep.ks_p_value:7.3f}")


if __name__ == "__main__":
    main()
