"""Segmentation error, CER/WER, the external-recognizer adapter and reports."""
from __future__ import annotations

import json
import os
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imgcore


class ReportError(ValueError):
    pass


def seg_error(pred, truth) -> float:
    """Percentage of pixels where the two masks disagree."""
    p, t = imgcore.as_image(pred), imgcore.as_image(truth)
    if p.shape != t.shape:
        raise imgcore.ImageError(f"seg_error: dimension mismatch {p.shape} vs {t.shape}")
    return 100.0 * float(np.count_nonzero(p != t)) / p.size


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert / delete / substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(pred: str, truth: str) -> float:
    if not truth:
        raise ValueError("CER undefined for an empty ground-truth string")
    return 100.0 * edit_distance(pred, truth) / len(truth)


def corpus_cer(pairs: Sequence[tuple[str, str]]) -> float:
    """Pooled CER: total edit distance over total ground-truth length."""
    total = sum(len(t) for _, t in pairs)
    if not total:
        raise ValueError("corpus CER needs non-empty ground truth")
    return 100.0 * sum(edit_distance(p, t) for p, t in pairs) / total


def wer(pairs: Sequence[tuple[str, str]]) -> float:
    """Percentage of samples whose prediction differs from the truth at all."""
    if not pairs:
        raise ValueError("WER needs at least one pair")
    return 100.0 * sum(p != t for p, t in pairs) / len(pairs)


# -- recognizer adapter --------------------------------------------------------

@dataclass
class Recognition:
    path: str
    transcript: str | None
    error: str | None = None


def _command(template: str, path: str) -> list[str]:
    argv = shlex.split(template)
    if not any("{path}" in tok for tok in argv):
        return argv + [path]
    return [tok.replace("{path}", path) for tok in argv]


def recognize_one(template: str, path: str, timeout: float | None = 60.0) -> Recognition:
    try:
        proc = subprocess.run(_command(template, str(path)), capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        return Recognition(str(path), None, f"{type(exc).__name__}: {exc}")
    if proc.returncode != 0:
        return Recognition(str(path), None, f"exit status {proc.returncode}")
    lines = proc.stdout.splitlines()
    if not lines:
        return Recognition(str(path), None, "no output")
    return Recognition(str(path), lines[0].strip())


def run_recognizer(template: str, paths: Sequence[str | os.PathLike], threads: int = 1) -> list[Recognition]:
    """Run ``template`` (``{path}`` is substituted) once per image, preserving order."""
    paths = [str(p) for p in paths]
    if threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda p: recognize_one(template, p), paths))
    return [recognize_one(template, p) for p in paths]


# -- reports -----------------------------------------------------------------

@dataclass
class ReportRow:
    id: str
    seg_error: float | None = None
    edit_distance: int | None = None
    truth_len: int | None = None
    match: bool | None = None
    prediction: str | None = None


@dataclass
class EvalReport:
    n_samples: int
    seg_error_pct: float | None
    cer_pct: float | None
    wer_pct: float | None
    rows: list[ReportRow] = field(default_factory=list)
    n_excluded: int = 0
    excluded: list[str] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: list[ReportRow], excluded: Sequence[str] = ()) -> "EvalReport":
        if not rows:
            raise ReportError("a report needs at least one row")
        seg = [r.seg_error for r in rows if r.seg_error is not None]
        rec = [r for r in rows if r.edit_distance is not None]
        seg_pct = float(np.mean(seg)) if seg else None
        cer_pct = wer_pct = None
        if rec:
            total = sum(r.truth_len for r in rec)
            cer_pct = 100.0 * sum(r.edit_distance for r in rec) / total if total else None
            wer_pct = 100.0 * sum(not r.match for r in rec) / len(rec)
        return cls(len(rows), seg_pct, cer_pct, wer_pct, list(rows), len(excluded), list(excluded))

    def check(self, tol: float = 1e-9) -> None:
        """Raise ``ReportError`` if the aggregates disagree with the rows."""
        again = EvalReport.from_rows(self.rows, self.excluded)
        for name in ("n_samples", "seg_error_pct", "cer_pct", "wer_pct", "n_excluded"):
            a, b = getattr(self, name), getattr(again, name)
            if (a is None) != (b is None) or (a is not None and abs(a - b) > tol):
                raise ReportError(f"{name}={a} but rows give {b}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["rows"] = [ReportRow(**r) for r in d.get("rows", [])]
        return cls(**d)


def seg_report(pairs: Sequence[tuple[str, np.ndarray, np.ndarray]]) -> EvalReport:
    """``pairs`` of ``(id, predicted mask, true mask)``."""
    return EvalReport.from_rows([ReportRow(i, seg_error=seg_error(p, t)) for i, p, t in pairs])


def recognition_report(ids: Sequence[str], results: Sequence[Recognition], truths: Sequence[str]) -> EvalReport:
    rows, excluded = [], []
    for i, res, truth in zip(ids, results, truths):
        if res.transcript is None:
            excluded.append(i)
            continue
        rows.append(ReportRow(i, edit_distance=edit_distance(res.transcript, truth), truth_len=len(truth),
                              match=res.transcript == truth, prediction=res.transcript))
    if not rows:
        raise ReportError("every sample was excluded")
    return EvalReport.from_rows(rows, excluded)


def emit_report(report: EvalReport | dict, path: str | os.PathLike) -> None:
    """Write a report (or a ``{column: report}`` mapping) as indented JSON."""
    if isinstance(report, EvalReport):
        report.check()
        doc = report.to_dict()
    else:
        for r in report.values():
            r.check()
        doc = {k: r.to_dict() for k, r in report.items()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_report(path: str | os.PathLike) -> EvalReport | dict[str, EvalReport]:
    doc = json.loads(Path(path).read_text())
    if "n_samples" in doc:
        rep = EvalReport.from_dict(doc)
        rep.check()
        return rep
    out = {k: EvalReport.from_dict(v) for k, v in doc.items()}
    for r in out.values():
        r.check()
    return out
