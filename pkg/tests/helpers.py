"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way (python loops, sets,
fractions of integers) so that agreement with the fast vectorized code in
src/ is meaningful.  Do not import from these back into the package.
"""

import contextlib
import io

import numpy as np

from webcat.aggregation import PageResult, aggregate_page
from webcat.cli import EXIT_ERROR, main
from webcat.evaluation import LabeledPage


def run_cli(*argv: str):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main(list(argv))
        except SystemExit as exc:  # argparse usage failures
            code = exc.code if isinstance(exc.code, int) else EXIT_ERROR
    return code, out.getvalue(), err.getvalue()


# ---------------------------------------------------------------------------
# images: textbook bilinear sampling with half-pixel centers and edge clamp
# ---------------------------------------------------------------------------

def naive_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape[:2]
    out = np.zeros((out_h, out_w, img.shape[2]), dtype=np.float64)
    for r in range(out_h):
        y = (r + 0.5) * (in_h / out_h) - 0.5
        y = min(max(y, 0.0), in_h - 1.0)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, in_h - 1)
        wy = y - y0
        for c in range(out_w):
            x = (c + 0.5) * (in_w / out_w) - 0.5
            x = min(max(x, 0.0), in_w - 1.0)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, in_w - 1)
            wx = x - x0
            top = (1 - wx) * img[y0, x0] + wx * img[y0, x1]
            bot = (1 - wx) * img[y1, x0] + wx * img[y1, x1]
            out[r, c] = (1 - wy) * top + wy * bot
    return out


def naive_normalize(pixels_u8: np.ndarray, side: int) -> np.ndarray:
    h, w = pixels_u8.shape[:2]
    scale = side / min(h, w)
    new_h = max(side, int(round(h * scale)))
    new_w = max(side, int(round(w * scale)))
    img = pixels_u8.astype(np.float64) / 255.0
    img = naive_bilinear(img, new_h, new_w)
    top = (new_h - side) // 2
    left = (new_w - side) // 2
    return np.clip(img[top:top + side, left:left + side], 0.0, 1.0)


# ---------------------------------------------------------------------------
# features: loop re-derivation of the hashed 8x8 mean-pool stub
# ---------------------------------------------------------------------------

STUB_SEED = 0x8F3A91D2


def stub_reference(tensor: np.ndarray, dim: int) -> np.ndarray:
    side = tensor.shape[0]
    rng = np.random.default_rng(STUB_SEED)
    buckets = rng.integers(0, dim, size=8 * 8 * 3)
    signs = rng.integers(0, 2, size=8 * 8 * 3) * 2 - 1
    edges = [(i * side) // 8 for i in range(9)]
    out = np.zeros(dim, dtype=np.float64)
    k = 0
    for r in range(8):
        for c in range(8):
            block = tensor[edges[r]:edges[r + 1], edges[c]:edges[c + 1]]
            for ch in range(3):
                out[buckets[k]] += signs[k] * (float(block[:, :, ch].mean()) - 0.5)
                k += 1
    return out


# ---------------------------------------------------------------------------
# forest: exhaustive greedy CART oracle for tiny datasets
# ---------------------------------------------------------------------------

def _gini_of(labels: list[int]) -> float:
    n = len(labels)
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def oracle_tree(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Grow one unbootstrapped tree over all features, greedy gini, and
    return a predict(col) -> class-proportion list function.

    Tie-breaking mirrors the documented contract: scan features in
    ascending index order and candidate thresholds in ascending value
    order, keep a candidate only when its impurity is strictly lower
    than the incumbent.
    """
    n_feat, n_total = X.shape

    def build(idx: np.ndarray):
        labels = y[idx].tolist()
        counts = [labels.count(c) for c in range(n_classes)]
        if len(set(labels)) == 1:
            return ("leaf", counts)
        best = None
        for f in range(n_feat):
            vals = sorted(set(X[f, idx].tolist()))
            for lo, hi in zip(vals, vals[1:]):
                t = (lo + hi) / 2.0
                if t >= hi:
                    t = lo
                left = idx[X[f, idx] <= t]
                right = idx[X[f, idx] > t]
                score = (
                    len(left) * _gini_of(y[left].tolist())
                    + len(right) * _gini_of(y[right].tolist())
                ) / len(idx)
                if best is None or score < best[0]:
                    best = (score, f, t, left, right)
        if best is None:
            return ("leaf", counts)
        _, f, t, left, right = best
        return ("split", f, t, build(left), build(right))

    root = build(np.arange(n_total))

    def predict(col: np.ndarray) -> list[float]:
        node = root
        while node[0] == "split":
            _, f, t, lo, hi = node
            node = lo if col[f] <= t else hi
        counts = node[1]
        total = sum(counts)
        return [c / total for c in counts]

    return predict


def small_datasets(max_n: int = 8):
    """Yield (X, y, n_classes) for every labeling of a bank of tiny
    feature layouts: one-dimensional value patterns (with duplicates)
    and two-dimensional grid subsets.  Single-class labelings are
    skipped because training rejects them.
    """
    layouts = []
    one_d = [
        [0.0, 1.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 2.0, 3.0],
        [0.0, 0.0, 1.0, 1.0, 2.0],
        [0.0, 1.0, 1.0, 2.0, 3.0, 3.0],
        [0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 3.0],
        [0.0, 1.0, 2.0, 2.0, 2.0, 3.0, 4.0, 5.0],
    ]
    for vals in one_d:
        layouts.append(np.asarray([vals], dtype=np.float64))
    grid = [(x, y) for x in (0.0, 1.0, 2.0) for y in (0.0, 1.0, 2.0)]
    rng = np.random.default_rng(7)
    for n in range(2, max_n + 1):
        for _ in range(3):
            pick = rng.choice(len(grid), size=n, replace=False)
            pts = [grid[i] for i in sorted(pick.tolist())]
            layouts.append(np.asarray(pts, dtype=np.float64).T)
    for X in layouts:
        n = X.shape[1]
        for mask in range(1, 2 ** n - 1):
            y = np.asarray([(mask >> i) & 1 for i in range(n)], dtype=np.int64)
            yield X, y, 2


# ---------------------------------------------------------------------------
# evaluation: loop confusion counts straight from the score definitions
# ---------------------------------------------------------------------------

def brute_decide(probs: list[float], kind: str, n: int, t: float) -> bool:
    if kind == "mean":
        return sum(probs) / len(probs) >= t
    return sum(1 for p in probs if p >= t) >= n


def brute_confusion(pages, kind: str, n: int, t: float):
    tp = fp = tn = fn = 0
    for probs, label in pages:
        hit = brute_decide(probs, kind, n, t)
        if label and hit:
            tp += 1
        elif label and not hit:
            fn += 1
        elif not label and hit:
            fp += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def brute_page_score(probs: list[float], kind: str, n: int) -> float:
    if kind == "mean":
        return sum(probs) / len(probs)
    if n > len(probs):
        return float("-inf")
    return sorted(probs, reverse=True)[n - 1]


def brute_curve(rows, kind: str, method_kind: str, n: int = 1):
    """(thresholds, xs, ys, auc) for PR ('pr') or ROC ('roc') curves,
    computed point by point from the counting definitions, with the same
    consecutive-duplicate collapse the package documents."""
    scores = [brute_page_score(list(probs), method_kind, n) for probs, _ in rows]
    grid = sorted({s for s in scores if 0.0 <= s <= 1.0} | {0.0, 1.0 + 1e-9})
    pts: list[tuple[float, float, float]] = []
    for t in grid:
        tp, fp, tn, fn = brute_confusion(rows, method_kind, n, t)
        if kind == "roc":
            x = fp / (fp + tn)
            y = tp / (tp + fn)
        else:
            x = tp / (tp + fn)
            y = 1.0 if (tp + fp) == 0 else tp / (tp + fp)
        if pts and pts[-1][1] == x and pts[-1][2] == y:
            continue
        pts.append((t, x, y))
    auc = 0.0
    for (_, x0, y0), (_, x1, y1) in zip(pts, pts[1:]):
        auc += (x0 - x1) * (y0 + y1) / 2.0
    return pts, auc


def pages_from_probs(rows, threshold: float = 0.5) -> list[LabeledPage]:
    out = []
    for i, (probs, label) in enumerate(rows):
        result = aggregate_page(
            f"http://fixture.test/page{i}", list(probs), threshold,
            max_n=max(len(probs), 1),
        )
        out.append(LabeledPage(page=result, label=bool(label)))
    return out
