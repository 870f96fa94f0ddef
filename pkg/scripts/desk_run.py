"""Train the C=16 eraser on 450 procedural samples and report held-out error.

    python3 scripts/desk_run.py --out runs/desk --iters 1000
"""
from __future__ import annotations

import argparse
import json

from inkstrip import experiments, trainer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--count", type=int, default=450)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--seed", type=int, default=2026, help="dataset seed")
    args = ap.parse_args()

    cfg = experiments.DeskRunConfig(data_seed=args.seed, count=args.count, channels=args.channels,
                                    train=trainer.TrainConfig(lr=args.lr, batch_size=args.batch,
                                                              iterations=args.iters, seed=1, eval_every=100))
    res = experiments.desk_run(args.out, cfg, log=print)
    first, last = res.smoothed_loss
    summary = {
        "heldout_seg_error_pct": res.heldout_seg_error,
        "trivial_seg_error_pct": res.trivial_seg_error,
        "ratio_to_trivial": res.heldout_seg_error / res.trivial_seg_error,
        "smoothed_loss_first": first,
        "smoothed_loss_last": last,
        "iterations": len(res.history.losses),
        "seconds": res.seconds,
    }
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
