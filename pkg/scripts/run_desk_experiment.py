"""Train SelfDB, Ambient-DB and C-Ambient-DDM on simulated phantoms and compare.

    python3 scripts/run_desk_experiment.py --iterations 600 --sweep 2,4,8 --out results/desk.json
"""

import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

from selfdb.experiment import DeskConfig, run_desk_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    defaults = DeskConfig()
    ap.add_argument("--iterations", type=int, default=defaults.iterations)
    ap.add_argument("--n-train", type=int, default=defaults.n_train)
    ap.add_argument("--n-test", type=int, default=defaults.n_test)
    ap.add_argument("--steps", type=int, default=defaults.steps)
    ap.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    ap.add_argument("--noise-std", type=float, default=defaults.noise_std)
    ap.add_argument("--coils", type=int, default=defaults.coils)
    ap.add_argument("--seed", type=int, default=defaults.seed)
    ap.add_argument("--methods", default=",".join(defaults.methods))
    ap.add_argument("--sweep", default="2,4,8", help="extra SelfDB step counts; empty to skip")
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = DeskConfig(
        iterations=args.iterations,
        n_train=args.n_train,
        n_test=args.n_test,
        steps=args.steps,
        learning_rate=args.learning_rate,
        noise_std=args.noise_std,
        coils=args.coils,
        seed=args.seed,
        methods=tuple(args.methods.split(",")),
    )
    sweep = tuple(int(s) for s in args.sweep.split(",") if s)
    t0 = time.perf_counter()
    res = run_desk_experiment(cfg, step_sweep=sweep)
    elapsed = time.perf_counter() - t0

    print(f"zero-filled      nrmse {res.zero_filled_nrmse:.4f}")
    for k in res.nrmse:
        print(f"{k:16s} nrmse {res.nrmse[k]:.4f}  ssim {res.ssim[k]:.4f}")
    print(f"total {elapsed / 60:.1f} min")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config": dataclasses.asdict(cfg), "zero_filled_nrmse": res.zero_filled_nrmse,
                   "nrmse": res.nrmse, "ssim": res.ssim, "train_seconds": res.seconds, "total_seconds": elapsed}
        args.out.write_text(json.dumps(payload, indent=2) + "\n")


if __name__ == "__main__":
    main()
