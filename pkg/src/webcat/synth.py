"""Synthetic image and site corpora for experiments and tests.

Real crawl targets cannot ship with the repository, so experiments run
against generated ones. Images come in three flavors built on the same 8x8
cell grid the stub extractor pools over:

* ``signal``  - every cell warm/red textured,
* ``noise``   - every cell cool blue/green textured,
* ``mixed``   - a given fraction of cells painted like signal, the rest
  like noise. Mixed images sit between the two training classes, so a
  forest trained on clean signal/noise gives them genuinely intermediate
  scores.

Generated evaluation sites exploit that: every positive page holds at least
one clean signal image (so its maximum image score is high), while some
negative pages are stuffed with mixed images whose *mean* rivals diluted
positive pages. Rules that look at the top image therefore separate the
corpus better than the mean rule, by construction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

GRID = 8
TRAIN_LABEL_POSITIVE = "signal"
TRAIN_LABEL_NEGATIVE = "noise"


@dataclass(frozen=True)
class SiteSpec:
    path: str  # server-relative path to the page, e.g. "sites/pos_00/index.html"
    label: bool


@dataclass(frozen=True)
class Corpus:
    root: Path
    manifest: Path
    sites: tuple[SiteSpec, ...]


def _fill_cells(
    img: np.ndarray, cells: np.ndarray, rng: np.random.Generator, warm: bool
) -> None:
    side = img.shape[0]
    edges = (np.arange(GRID + 1) * side) // GRID
    for flat in np.nonzero(cells)[0]:
        r, c = divmod(int(flat), GRID)
        if warm:
            base = np.array(
                [rng.uniform(0.70, 0.90), rng.uniform(0.05, 0.20), rng.uniform(0.05, 0.20)]
            )
        else:
            base = np.array(
                [rng.uniform(0.05, 0.20), rng.uniform(0.40, 0.60), rng.uniform(0.50, 0.80)]
            )
        block = img[edges[r] : edges[r + 1], edges[c] : edges[c + 1]]
        jitter = rng.uniform(-0.03, 0.03, size=block.shape)
        block[:] = np.clip(base[None, None, :] + jitter, 0.0, 1.0)


def make_image(
    rng: np.random.Generator,
    kind: str,
    side: int = 96,
    signal_fraction: float = 0.5,
) -> np.ndarray:
    """A (side, side, 3) uint8 image of the given flavor."""
    img = np.zeros((side, side, 3), dtype=np.float64)
    n_cells = GRID * GRID
    if kind == "signal":
        painted = np.ones(n_cells, dtype=bool)
    elif kind == "noise":
        painted = np.zeros(n_cells, dtype=bool)
    elif kind == "mixed":
        n_painted = int(round(signal_fraction * n_cells))
        painted = np.zeros(n_cells, dtype=bool)
        painted[rng.choice(n_cells, size=n_painted, replace=False)] = True
    else:
        raise ValueError(f"unknown image kind {kind!r}")
    _fill_cells(img, painted, rng, warm=True)
    _fill_cells(img, ~painted, rng, warm=False)
    return (img * 255.0).round().astype(np.uint8)


def image_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_training_corpus(
    root: Path,
    n_per_class: int = 100,
    seed: int = 0,
    side: int = 96,
) -> Path:
    """Write labeled signal/noise images plus a TSV manifest; returns its path."""
    rng = np.random.default_rng(seed)
    image_dir = root / "train"
    image_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n_per_class):
        for label, kind in (
            (TRAIN_LABEL_POSITIVE, "signal"),
            (TRAIN_LABEL_NEGATIVE, "noise"),
        ):
            name = f"{kind}_{i:03d}.png"
            path = image_dir / name
            path.write_bytes(image_png(make_image(rng, kind, side=side)))
            lines.append(f"{label}\t{path}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def _write_site(
    root: Path, name: str, images: list[np.ndarray], title: str
) -> str:
    site_dir = root / "sites" / name
    site_dir.mkdir(parents=True, exist_ok=True)
    tags = []
    for i, pixels in enumerate(images):
        fname = f"img_{i:02d}.png"
        (site_dir / fname).write_bytes(image_png(pixels))
        tags.append(f'    <img src="{fname}" alt="item {i}">')
    html = (
        "<!doctype html>\n<html>\n<head>\n"
        f"  <title>{title}</title>\n"
        "</head>\n<body>\n"
        f"  <h1>{title}</h1>\n" + "\n".join(tags) + "\n</body>\n</html>\n"
    )
    (site_dir / "index.html").write_text(html)
    return f"sites/{name}/index.html"


def generate_corpus(
    root: Path,
    seed: int = 0,
    n_train_per_class: int = 100,
    side: int = 96,
) -> Corpus:
    """Training manifest plus 40 evaluation sites (20 positive, 20 negative).

    Positive pages carry 1-3 signal images among noise. Negative pages are
    either pure noise, or carry mixed images (about half the cells warm)
    whose presence inflates the page mean without ever producing a clean
    signal image.
    """
    root = Path(root)
    manifest = write_training_corpus(root, n_per_class=n_train_per_class, seed=seed, side=side)
    rng = np.random.default_rng(seed + 1)
    sites: list[SiteSpec] = []

    def mixed(count: int) -> list[np.ndarray]:
        return [
            make_image(rng, "mixed", side=side, signal_fraction=rng.uniform(0.45, 0.55))
            for _ in range(count)
        ]

    def noise(count: int) -> list[np.ndarray]:
        return [make_image(rng, "noise", side=side) for _ in range(count)]

    def signal(count: int) -> list[np.ndarray]:
        return [make_image(rng, "signal", side=side) for _ in range(count)]

    # 20 positives: 4 pages with one signal image, 8 with two, 8 with three.
    signal_counts = [1] * 4 + [2] * 8 + [3] * 8
    for i, n_sig in enumerate(signal_counts):
        images = signal(n_sig) + noise(10 - n_sig)
        order = rng.permutation(len(images))
        images = [images[j] for j in order]
        path = _write_site(root, f"pos_{i:02d}", images, f"catalog page {i}")
        sites.append(SiteSpec(path=path, label=True))

    # 20 negatives: 10 pure noise, 5 lightly mixed, 5 mixed galleries.
    for i in range(10):
        path = _write_site(root, f"neg_plain_{i:02d}", noise(10), f"plain page {i}")
        sites.append(SiteSpec(path=path, label=False))
    for i in range(5):
        images = mixed(5) + noise(5)
        order = rng.permutation(len(images))
        images = [images[j] for j in order]
        path = _write_site(root, f"neg_mixed_{i:02d}", images, f"mixed page {i}")
        sites.append(SiteSpec(path=path, label=False))
    for i in range(5):
        path = _write_site(root, f"neg_gallery_{i:02d}", mixed(10), f"gallery page {i}")
        sites.append(SiteSpec(path=path, label=False))

    return Corpus(root=root, manifest=manifest, sites=tuple(sites))
