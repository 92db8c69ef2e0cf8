"""Threshold sweeps, curves, and method comparison over labeled pages.

A page's score under the mean rule is its mean image probability; under the
top-n rule it is the n-th largest image probability, so "score >= t" agrees
exactly with the counting form of the rule. Sweeps enumerate every distinct
achievable score plus sentinel thresholds 0 and 1+eps, and each curve point
is computed from a full confusion tally at that threshold.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .aggregation import PageResult, method1_mean, method2_topn

log = logging.getLogger(__name__)

SENTINEL_HIGH = 1.0 + 1e-9

KIND_PR = "precision_recall"
KIND_ROC = "roc"


@dataclass(frozen=True)
class Method:
    """A named aggregation rule: kind 'mean', or 'topn' with its n."""

    kind: str
    n: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("mean", "topn"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "topn" and self.n < 1:
            raise ValueError("topn needs n >= 1")

    @classmethod
    def mean(cls) -> "Method":
        return cls(kind="mean")

    @classmethod
    def topn(cls, n: int) -> "Method":
        return cls(kind="topn", n=n)

    @property
    def label(self) -> str:
        return "mean" if self.kind == "mean" else f"top{self.n}"


@dataclass(frozen=True)
class LabeledPage:
    page: PageResult
    label: bool

    def __post_init__(self) -> None:
        if len(self.page.image_probs) == 0:
            raise ValueError("labeled pages must be classifiable (>= 1 image)")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


@dataclass(frozen=True)
class BalancePoint:
    threshold: float
    value: float


@dataclass(frozen=True)
class EvalCurve:
    kind: str
    method: Method
    points: tuple[CurvePoint, ...]
    auc: float


def page_score(page: PageResult, method: Method) -> float:
    """Mean probability, or the n-th largest one (-inf when images < n)."""
    probs = page.image_probs
    if method.kind == "mean":
        return sum(probs) / len(probs)
    if method.n > len(probs):
        return -math.inf
    return sorted(probs, reverse=True)[method.n - 1]


def decide(page: PageResult, method: Method, threshold: float) -> bool:
    """Apply an aggregation rule to one page at the given threshold.

    Above 1.0 (the sweep sentinel) nothing is positive, since probabilities
    cannot reach it; inside [0, 1] this defers to the aggregation rules.
    """
    if threshold > 1.0:
        return False
    if method.kind == "mean":
        return method1_mean(page.image_probs, threshold).positive
    return method2_topn(page.image_probs, threshold, method.n).positive


def _check_labels(pages: Sequence[LabeledPage]) -> None:
    if not pages:
        raise ValueError("no labeled pages")
    positives = sum(1 for p in pages if p.label)
    if positives == 0 or positives == len(pages):
        raise ValueError("labeled pages must include both classes")


def confusion(pages: Sequence[LabeledPage], method: Method, threshold: float) -> ConfusionCounts:
    tp = fp = tn = fn = 0
    for lp in pages:
        predicted = decide(lp.page, method, threshold)
        if lp.label:
            tp, fn = (tp + 1, fn) if predicted else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if predicted else (fp, tn + 1)
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def precision(c: ConfusionCounts) -> float:
    # With no positive predictions there are no false alarms; score it 1.
    return 1.0 if (c.tp + c.fp) == 0 else c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn)


def false_positive_rate(c: ConfusionCounts) -> float:
    return c.fp / (c.fp + c.tn)


def specificity(c: ConfusionCounts) -> float:
    return c.tn / (c.tn + c.fp)


def _sweep_thresholds(pages: Sequence[LabeledPage], method: Method) -> list[float]:
    scores = {
        s
        for lp in pages
        if 0.0 <= (s := page_score(lp.page, method)) <= 1.0
    }
    return sorted(scores | {0.0, SENTINEL_HIGH})


def sweep(pages: Sequence[LabeledPage], method: Method, kind: str) -> EvalCurve:
    """Exact threshold sweep; consecutive duplicate (x, y) points collapse."""
    if kind not in (KIND_PR, KIND_ROC):
        raise ValueError(f"unknown curve kind {kind!r}")
    _check_labels(pages)
    points: list[CurvePoint] = []
    for t in _sweep_thresholds(pages, method):
        c = confusion(pages, method, t)
        if kind == KIND_ROC:
            x, y = false_positive_rate(c), recall(c)
        else:
            x, y = recall(c), precision(c)
        if points and points[-1].x == x and points[-1].y == y:
            continue
        points.append(CurvePoint(threshold=t, x=x, y=y))
    auc = 0.0
    for a, b in zip(points, points[1:]):
        auc += (a.x - b.x) * (a.y + b.y) / 2.0
    return EvalCurve(kind=kind, method=method, points=tuple(points), auc=auc)


def balance_point(pages: Sequence[LabeledPage], method: Method) -> BalancePoint | None:
    """Threshold where sensitivity equals specificity, by linear interpolation.

    Returns None (with a logged diagnostic) when the sweep never crosses.
    """
    _check_labels(pages)
    grid: list[tuple[float, float, float]] = []  # (threshold, sens, spec)
    for t in _sweep_thresholds(pages, method):
        c = confusion(pages, method, t)
        grid.append((t, recall(c), specificity(c)))
    for (t0, sens0, spec0), (t1, sens1, spec1) in zip(grid, grid[1:]):
        d0 = sens0 - spec0
        d1 = sens1 - spec1
        if d0 == 0.0:
            return BalancePoint(threshold=t0, value=sens0)
        if d0 > 0.0 > d1:
            alpha = d0 / (d0 - d1)
            return BalancePoint(
                threshold=t0 + alpha * (t1 - t0),
                value=sens0 + alpha * (sens1 - sens0),
            )
    last_t, last_sens, last_spec = grid[-1]
    if last_sens == last_spec:
        return BalancePoint(threshold=last_t, value=last_sens)
    log.warning(
        "sensitivity/specificity never cross for %s (degenerate score distribution)",
        method.label,
    )
    return None


@dataclass(frozen=True)
class RankedMethod:
    method: Method
    roc_auc: float


def rank_methods(pages: Sequence[LabeledPage], max_n: int | None = None) -> list[RankedMethod]:
    """ROC-AUC ranking of the mean rule and top-n rules for n = 1..max_n.

    Sorted by AUC descending; exact ties put top-n rules ahead of the mean
    rule, and lower n ahead of higher n.
    """
    _check_labels(pages)
    if max_n is None:
        max_n = max(len(lp.page.image_probs) for lp in pages)
    methods = [Method.topn(n) for n in range(1, max_n + 1)] + [Method.mean()]
    order = {m.label: i for i, m in enumerate(methods)}
    ranked = [
        RankedMethod(method=m, roc_auc=sweep(pages, m, KIND_ROC).auc) for m in methods
    ]
    ranked.sort(key=lambda r: (-r.roc_auc, order[r.method.label]))
    return ranked


# --- emitters ---------------------------------------------------------------


def curves_to_csv(curves: Iterable[EvalCurve]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "kind", "threshold", "x", "y"])
    for curve in curves:
        for p in curve.points:
            writer.writerow(
                [curve.method.label, curve.kind, f"{p.threshold:.12g}", f"{p.x:.12g}", f"{p.y:.12g}"]
            )
    return buf.getvalue()


def evaluation_summary(
    pages: Sequence[LabeledPage],
    max_n: int | None = None,
) -> dict:
    """All curves, AUCs, balance points and the final ranking as plain data."""
    ranked = rank_methods(pages, max_n=max_n)
    methods = []
    for r in ranked:
        bp = balance_point(pages, r.method)
        pr_auc = sweep(pages, r.method, KIND_PR).auc
        methods.append(
            {
                "method": r.method.label,
                "roc_auc": r.roc_auc,
                "pr_auc": pr_auc,
                "balance_point": None
                if bp is None
                else {"threshold": bp.threshold, "value": bp.value},
            }
        )
    return {
        "schema_version": 1,
        "kind": "evaluation_summary",
        "n_pages": len(pages),
        "n_positive": sum(1 for p in pages if p.label),
        "ranking": [r.method.label for r in ranked],
        "methods": methods,
    }


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=False) + "\n"


def curves_to_svg(curves: Sequence[EvalCurve], title: str) -> str:
    """Minimal self-contained SVG line plot of one curve kind."""
    width, height, margin = 640, 480, 56
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

    def sx(x: float) -> float:
        return margin + x * plot_w

    def sy(y: float) -> float:
        return height - margin - y * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.1f}" y="{margin / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{sx(tick):.1f}" y="{height - margin + 18:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8:.1f}" y="{sy(tick) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    for i, curve in enumerate(curves):
        color = palette[i % len(palette)]
        coords = " ".join(f"{sx(p.x):.2f},{sy(p.y):.2f}" for p in curve.points)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = margin + 16 + 16 * i
        parts.append(
            f'<line x1="{width - margin - 130}" y1="{ly - 4}" x2="{width - margin - 110}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{width - margin - 104}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{curve.method.label} (auc={curve.auc:.3f})</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
