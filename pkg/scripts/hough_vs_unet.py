"""Compare Hough line erasure and a trained checkpoint on underline samples.

    python3 scripts/hough_vs_unet.py --ckpt runs/desk/ck.bin
"""
from __future__ import annotations

import argparse

from inkstrip import experiments, trainer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("-n", type=int, default=100, help="samples per group")
    ap.add_argument("--seed", type=int, default=77)
    ap.add_argument("--thickness", type=float, default=3.0)
    args = ap.parse_args()

    params = trainer.load_checkpoint(args.ckpt)
    apart, overlap = experiments.underline_samples(args.n, args.seed)
    print(f"{'group':10s} {'hough %':>9s} {'u-net %':>9s} {'detected':>9s} {'A∩B kept':>12s}")
    for name, group in (("apart", apart), ("overlap", overlap)):
        r = experiments.compare_on(group, params, args.thickness)
        print(f"{name:10s} {r.hough_seg_error:9.3f} {r.model_seg_error:9.3f} {r.detected:9d} "
              f"{r.overlap_pixels_in_mask:5d}/{r.overlap_pixels:<6d}")


if __name__ == "__main__":
    main()
