"""Counting evaluation: MAE and (root) MSE, counts from density maps, and
comparison tables.

"MSE" follows the crowd-counting usage, i.e. the *root* of the mean squared
residual, so it lives on the same scale as MAE.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset.imageio import read_fimg
from .density import integrate_count
from .errors import EmptyInput, LengthMismatch, MissingMap


@dataclass
class EvalResult:
    mae: float
    mse: float
    n: int
    residuals: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "n": self.n, "residuals": list(self.residuals)}


def evaluate(pred, gt) -> EvalResult:
    """``mae = mean|pred - gt|``, ``mse = sqrt(mean((pred - gt)**2))``."""
    pred = [float(x) for x in pred]
    gt = [float(x) for x in gt]
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground-truth counts")
    if not pred:
        raise EmptyInput("nothing to evaluate")
    res = [p - g for p, g in zip(pred, gt)]
    # fsum keeps hand-checkable cases exact and the result order-independent
    mae = math.fsum(abs(r) for r in res) / len(res)
    # hypot rescales internally, so tiny residuals do not underflow when squared
    mse = math.hypot(*res) / math.sqrt(len(res))
    # guard the power-mean ordering against the last rounding step
    mse = max(mse, mae) if math.isclose(mse, mae, rel_tol=1e-15, abs_tol=0.0) else mse
    return EvalResult(mae, mse, len(res), res)


def map_path(directory, image_id: str) -> str:
    return os.path.join(directory, f"{image_id}.fimg")


def counts_from_density_dir(directory, manifest) -> list[tuple[str, float]]:
    """Integrate ``<dir>/<image id>.fimg`` for every record of ``manifest``."""
    missing = [r.image_id for r in manifest if not os.path.isfile(map_path(directory, r.image_id))]
    if missing:
        raise MissingMap(missing)
    return [(r.image_id, integrate_count(read_fimg(map_path(directory, r.image_id)).astype(np.float64)))
            for r in manifest]


def evaluate_dir(directory, manifest) -> EvalResult:
    pred = dict(counts_from_density_dir(directory, manifest))
    return evaluate([pred[r.image_id] for r in manifest], [r.count for r in manifest])


@dataclass
class TableRow:
    label: str
    mae: float
    mse: float
    best_mae: bool = False
    best_mse: bool = False


def ablation_table(rows, gt=None, fmt: str = "markdown", mse_label: str = "MSE",
                   digits: int = 2) -> str:
    """Comparison table with the best (lowest) value of each column flagged.

    ``rows`` holds ``(label, source)`` pairs where ``source`` is an
    :class:`EvalResult`, a ``(mae, mse)`` pair, or a list of predicted
    counts evaluated against ``gt``.  Ties are all flagged.  Markdown
    output bolds the best cells; CSV adds ``best_mae``/``best_mse``
    columns.
    """
    table = table_rows(rows, gt)
    if not table:
        raise EmptyInput("ablation table needs at least one row")
    if fmt == "csv":
        lines = [f"label,mae,{mse_label.lower()},best_mae,best_mse"]
        lines += [f"{_csv(r.label)},{r.mae!r},{r.mse!r},{int(r.best_mae)},{int(r.best_mse)}"
                  for r in table]
        return "\n".join(lines) + "\n"
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")

    def cell(value, best):
        text = f"{value:.{digits}f}"
        return f"**{text}**" if best else text

    lines = [f"| Method | MAE | {mse_label} |", "|---|---:|---:|"]
    lines += [f"| {r.label} | {cell(r.mae, r.best_mae)} | {cell(r.mse, r.best_mse)} |" for r in table]
    return "\n".join(lines) + "\n"


def table_rows(rows, gt=None) -> list[TableRow]:
    """Structured form of :func:`ablation_table` (flags included)."""
    table = [TableRow(label, *_metrics(src, gt)) for label, src in rows]
    if table:
        low_mae = min(r.mae for r in table)
        low_mse = min(r.mse for r in table)
        for r in table:
            r.best_mae, r.best_mse = r.mae == low_mae, r.mse == low_mse
    return table


def _metrics(src, gt) -> tuple[float, float]:
    if isinstance(src, EvalResult):
        return src.mae, src.mse
    if isinstance(src, tuple) and len(src) == 2:
        return float(src[0]), float(src[1])
    if gt is None:
        raise ValueError("prediction lists need ground-truth counts")
    r = evaluate(src, gt)
    return r.mae, r.mse


def _csv(text: str) -> str:
    return f'"{text.replace(chr(34), chr(34) * 2)}"' if any(c in text for c in ',"\n') else text
