"""Command-line entry point: ``inkstrip <command> [flags]``.

Exit codes: 0 ok, 1 check failure, 2 configuration, 3 I/O, 4 data, 5 checkpoint.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import evaluation, gradcheck, hough, imgcore, synth, trainer, unet

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_DATA, EXIT_CKPT = 0, 1, 2, 3, 4, 5


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"inkstrip: {msg}", file=sys.stderr)


def _parse_mix(text: str) -> dict[str, float]:
    mix = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        try:
            mix[name.strip()] = float(value)
        except ValueError as exc:
            raise synth.ConfigError(f"bad --mix entry {part!r}") from exc
    return mix


def _split_ids(path: str | None) -> set[str] | None:
    if not path:
        return None
    try:
        return set(json.loads(Path(path).read_text())["heldout"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CLIError(EXIT_DATA, f"cannot read split file {path}: {exc}") from exc


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".cleaned.pgm", ".mask.pgm", ".pgm"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _list_inputs(src: str, ids: set[str] | None = None) -> list[Path]:
    p = Path(src)
    if p.is_dir():
        files = sorted(f for f in p.glob("*.pgm") if not f.name.endswith((".mask.pgm", ".cleaned.pgm")))
    elif p.is_file():
        files = [p]
    else:
        raise CLIError(EXIT_DATA, f"input {src} does not exist")
    if ids is not None:
        files = [f for f in files if _stem(f) in ids]
    return files


def _read_image(path: Path) -> np.ndarray:
    try:
        return imgcore.pgm_read(path)
    except (OSError, imgcore.PGMError) as exc:
        raise CLIError(EXIT_DATA, f"cannot read image {path}: {exc}") from exc


def _write_pair(out: Path, stem: str, cleaned: np.ndarray, mask: np.ndarray) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        imgcore.pgm_write(cleaned, out / f"{stem}.cleaned.pgm")
        imgcore.pgm_write(mask, out / f"{stem}.mask.pgm")
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write to {out}: {exc}") from exc


# -- commands --------------------------------------------------------------

def cmd_gen(args) -> int:
    try:
        cfg = synth.GenConfig.from_json(args.config) if args.config else synth.GenConfig()
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.count is not None:
            cfg.count = args.count
        if args.mix:
            cfg.kind_mix = _parse_mix(args.mix)
        if args.no_augment:
            cfg.augment = False
        cfg.validate()
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read config: {exc}") from exc
    except synth.ConfigError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    try:
        manifest = synth.generate_dataset(cfg, args.out, threads=synth.thread_count())
    except OSError as exc:
        raise CLIError(EXIT_IO, str(exc)) from exc
    counts = Counter(r["kind"] for r in synth.read_manifest(manifest))
    print(manifest)
    for kind in sorted(counts):
        print(f"{kind}\t{counts[kind]}")
    print(f"total\t{cfg.count}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        cfg = trainer.TrainConfig(lr=args.lr, batch_size=args.batch, iterations=args.iters,
                                  seed=synth.sample_seed(args.seed, 1), augment=args.augment,
                                  eval_every=args.eval_every).validate()
        if not 0 < args.split <= 1:
            raise ValueError("--split must lie in (0, 1]")
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    try:
        data = trainer.load_dataset(args.manifest)
    except (OSError, KeyError, ValueError) as exc:
        raise CLIError(EXIT_DATA, f"bad manifest {args.manifest}: {exc}") from exc
    if not len(data):
        raise CLIError(EXIT_DATA, "manifest holds no samples")
    tr_idx, ho_idx = trainer.split_indices(len(data), args.split, args.seed)
    train_set, held = data.subset(tr_idx), data.subset(ho_idx)
    if args.resume:
        try:
            params = trainer.load_checkpoint(args.resume, expect_channels=args.channels)
        except (OSError, trainer.CheckpointError) as exc:
            raise CLIError(EXIT_CKPT, f"cannot resume from {args.resume}: {exc}") from exc
    else:
        params = unet.init_params(np.random.default_rng(synth.sample_seed(args.seed, 0)), args.channels)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    try:
        params, history = trainer.train(params, train_set, cfg, heldout=held, log=log)
    except ValueError as exc:
        raise CLIError(EXIT_DATA, str(exc)) from exc
    out = Path(args.out)
    hist_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        trainer.save_checkpoint(params, out, include_rms=bool(args.resume) or args.keep_rms)
        history.write_csv(hist_path)
        out.with_suffix(".split.json").write_text(json.dumps(
            {"train": train_set.ids, "heldout": held.ids}, indent=1) + "\n")
    except OSError as exc:
        raise CLIError(EXIT_IO, str(exc)) from exc
    print(f"train {len(train_set)} heldout {len(held)}")
    if len(held):
        err = history.heldout[-1][1] if history.heldout else trainer.heldout_seg_error(params, held)
        print(f"heldout_seg_error {err:.4f}")
    print(out)
    return EXIT_OK


def _map_images(fn, files: list[Path]) -> list:
    threads = synth.thread_count()
    with threadpool_limits(limits=1):
        if threads > 1 and len(files) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                return list(ex.map(fn, files))
        return [fn(f) for f in files]


def cmd_erase(args) -> int:
    try:
        params = trainer.load_checkpoint(args.ckpt)
    except (OSError, trainer.CheckpointError) as exc:
        raise CLIError(EXIT_CKPT, f"cannot load checkpoint {args.ckpt}: {exc}") from exc
    files = _list_inputs(args.input, _split_ids(args.split))
    images = [_read_image(f) for f in files]
    out = Path(args.out)

    def job(k: int) -> None:
        canvas = imgcore.fit_to_canvas(images[k])
        mask = unet.predict_mask(params, canvas)
        _write_pair(out, _stem(files[k]), imgcore.erase_with_mask(canvas, mask), mask)

    _map_images(job, list(range(len(files))))
    print(f"erased {len(files)} images -> {out}")
    return EXIT_OK


def cmd_hough(args) -> int:
    ids = _split_ids(args.split)
    if args.manifest:
        recs = synth.read_manifest(args.manifest)
        if not args.all_kinds:
            recs = [r for r in recs if r["kind"] == synth.ArtifactKind.UNDERLINE.value]
        root = Path(args.manifest).parent
        files = [root / r["dirty"] for r in recs if ids is None or r["id"] in ids]
    else:
        files = _list_inputs(args.input, ids)
    out = Path(args.out)

    def job(f: Path) -> None:
        img = imgcore.binarize(_read_image(f))
        cleaned, mask = hough.erase_lines(img, hough.hough_lines(img, vote_threshold=args.thresh), args.thickness)
        _write_pair(out, _stem(f), cleaned, mask)

    _map_images(job, files)
    print(f"hough-erased {len(files)} images -> {out}")
    return EXIT_OK


def _pair_dirs(pred_dir: Path, truth_dir: Path, ids: set[str] | None) -> list[tuple[str, Path, Path]]:
    preds = {_stem(f): f for f in sorted(pred_dir.glob("*.mask.pgm"))}
    if not preds:
        preds = {_stem(f): f for f in sorted(pred_dir.glob("*.pgm"))}
    truths = {_stem(f): f for f in sorted(truth_dir.glob("*.pgm"))
              if not f.name.endswith(".cleaned.pgm")}
    if ids is not None:
        preds = {k: v for k, v in preds.items() if k in ids}
        truths = {k: v for k, v in truths.items() if k in ids}
    orphans = sorted(set(preds) ^ set(truths))
    if orphans:
        raise CLIError(EXIT_DATA, "unpaired ids: " + " ".join(orphans))
    if not preds:
        raise CLIError(EXIT_DATA, "no masks to compare")
    return [(k, preds[k], truths[k]) for k in sorted(preds)]


def _emit(report, out: str | None) -> None:
    if out:
        try:
            evaluation.emit_report(report, out)
        except OSError as exc:
            raise CLIError(EXIT_IO, str(exc)) from exc


def cmd_eval_seg(args) -> int:
    pairs = _pair_dirs(Path(args.pred), Path(args.truth), _split_ids(args.split))
    report = evaluation.seg_report([(k, _read_image(p), _read_image(t)) for k, p, t in pairs])
    _emit(report, args.out)
    print(f"n_samples {report.n_samples}")
    print(f"seg_error_pct {report.seg_error_pct:.4f}")
    return EXIT_OK


def cmd_eval_rec(args) -> int:
    manifest = Path(args.manifest)
    try:
        recs = synth.read_manifest(manifest)
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError(EXIT_DATA, f"bad manifest {manifest}: {exc}") from exc
    ids = _split_ids(args.split)
    if ids is not None:
        recs = [r for r in recs if r["id"] in ids]
    cleaned = {_stem(f): f for f in Path(args.images).glob("*.pgm") if not f.name.endswith(".mask.pgm")}
    missing = sorted(r["id"] for r in recs if r["id"] not in cleaned)
    extra = sorted(set(cleaned) - {r["id"] for r in recs})
    if missing or extra:
        raise CLIError(EXIT_DATA, "unpaired ids: " + " ".join(missing + extra))
    if not recs:
        raise CLIError(EXIT_DATA, "no samples to evaluate")
    if any(not r.get("transcript") for r in recs):
        raise CLIError(EXIT_DATA, "every evaluated sample needs a non-empty transcript")
    ids_list = [r["id"] for r in recs]
    truths = [r["transcript"] for r in recs]
    columns = {
        "baseline": [manifest.parent / r["clean"] for r in recs],
        "dirty": [manifest.parent / r["dirty"] for r in recs],
        "cleaned": [cleaned[i] for i in ids_list],
    }
    reports = {}
    for col, paths in columns.items():
        results = evaluation.run_recognizer(args.recognizer, paths, threads=synth.thread_count())
        try:
            reports[col] = evaluation.recognition_report(ids_list, results, truths)
        except evaluation.ReportError as exc:
            raise CLIError(EXIT_CHECK, f"{col}: {exc}") from exc
    _emit(reports, args.out)
    for col, rep in reports.items():
        print(f"{col}\tCER {rep.cer_pct:.2f}\tWER {rep.wer_pct:.2f}\texcluded {rep.n_excluded}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.precision != "wide":
        raise CLIError(EXIT_CONFIG, "finite-difference checks run in wide precision only")
    results = gradcheck.run_all(args.seed)
    for r in results:
        print(f"{r.name:22s} max_rel_err {r.error:.3e}  threshold {r.tolerance:.0e}  {'ok' if r.ok else 'FAIL'}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_CHECK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inkstrip", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="assemble a synthetic dirty/mask dataset")
    g.add_argument("--config", help="JSON file with GenConfig fields")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--count", type=int)
    g.add_argument("--mix", help="kind probabilities, e.g. underline=0.5,box=0.5")
    g.add_argument("--no-augment", action="store_true")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the segmentation network")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--iters", type=int, default=1000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split", type=float, default=0.9)
    t.add_argument("--augment", action="store_true")
    t.add_argument("--channels", type=int, default=16)
    t.add_argument("--eval-every", type=int, default=100)
    t.add_argument("--history", help="CSV path (default: <out>.history.csv)")
    t.add_argument("--resume", help="start from this checkpoint; output keeps RMS state")
    t.add_argument("--keep-rms", action="store_true", help="store RMS accumulators in the checkpoint")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("erase", help="predict masks and erase artifacts")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--in", dest="input", required=True, help="PGM file or directory")
    e.add_argument("--out", required=True)
    e.add_argument("--split", help="split JSON from train; restrict to held-out ids")
    e.set_defaults(func=cmd_erase)

    h = sub.add_parser("hough", help="Hough line-erasure baseline")
    h.add_argument("--in", dest="input", help="PGM file or directory")
    h.add_argument("--manifest", help="run on the line-artifact split of a dataset")
    h.add_argument("--all-kinds", action="store_true", help="with --manifest, keep every kind")
    h.add_argument("--out", required=True)
    h.add_argument("--thresh", type=int, default=None, help="vote threshold (default 0.4 x width)")
    h.add_argument("--thickness", type=float, default=3.0)
    h.add_argument("--split", help="split JSON from train; restrict to held-out ids")
    h.set_defaults(func=cmd_hough)

    s = sub.add_parser("eval-seg", help="segmentation error of predicted masks")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--split", help="split JSON from train; restrict to held-out ids")
    s.add_argument("--out", help="report JSON path")
    s.set_defaults(func=cmd_eval_seg)

    r = sub.add_parser("eval-rec", help="CER/WER of an external recognizer on baseline/dirty/cleaned images")
    r.add_argument("--recognizer", required=True, help="command template, {path} is substituted")
    r.add_argument("--images", required=True, help="directory of cleaned images")
    r.add_argument("--manifest", required=True)
    r.add_argument("--split", help="split JSON from train; restrict to held-out ids")
    r.add_argument("--out", help="report JSON path")
    r.set_defaults(func=cmd_eval_rec)

    c = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    c.add_argument("--precision", choices=["wide", "standard"], default="wide")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "hough" and not (args.input or args.manifest):
        _err("hough needs --in or --manifest")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CLIError as exc:
        _err(str(exc))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
