"""Acceptance suite: one test per shipping criterion.

Each test prints a single CRITERION line on success; with -v the pytest
status line per test doubles as the machine-readable pass/fail record.
These tests intentionally re-state their fixtures instead of importing
them from the unit files, so each criterion stands on its own.
"""

import json
import math
import time

import numpy as np
import pytest

from webcat.aggregation import aggregate_page, method2_topn
from webcat.crawler import CrawlConfig, CrawlStatus, crawl, extract_image_links
from webcat.evaluation import (
    KIND_ROC,
    LabeledPage,
    Method,
    balance_point,
    confusion,
    false_positive_rate,
    page_score,
    precision,
    recall,
    specificity,
    sweep,
)
from webcat.forest import (
    ForestHyperparams,
    ModelIOError,
    TrainingSet,
    forest_from_bytes,
    forest_to_bytes,
    load_forest,
    predict_proba,
    predict_proba_batch,
    save_forest,
    train,
)
from webcat.images import RejectReason, Rejection, validate
from webcat.localserver import FixtureServer
from webcat.synth import generate_corpus, image_png, make_image

from helpers import oracle_tree, run_cli, small_datasets

pytestmark = pytest.mark.acceptance


def _ok(num: int, text: str) -> None:
    print(f"\nCRITERION {num} PASS: {text}")


# -- 1: synthetic end-to-end reproduction --------------------------------------


def test_criterion_1_synthetic_end_to_end(tmp_path):
    t_start = time.monotonic()
    corpus = generate_corpus(tmp_path, seed=0, n_train_per_class=100)
    assert len(corpus.manifest.read_text().splitlines()) == 200

    model_path = tmp_path / "model.wibf"
    code, _, err = run_cli(
        "train", str(corpus.manifest),
        "--model", str(model_path), "--dim", "512", "--trees", "100", "--seed", "0",
    )
    assert code == 0, err

    with FixtureServer() as server:
        server.add_directory(tmp_path)
        page_urls = [server.url("/" + site.path) for site in corpus.sites]
        assert all(u.startswith("http://127.0.0.1:") for u in page_urls)
        listing = tmp_path / "pages.tsv"
        listing.write_text(
            "\n".join(
                f"{int(site.label)}\t{url}"
                for site, url in zip(corpus.sites, page_urls)
            )
            + "\n"
        )
        code, out, err = run_cli(
            "evaluate", str(listing),
            "--model", str(model_path), "--dim", "512",
            "--seed", "0", "--parallelism", "4",
        )
    assert code == 0, err
    summary = json.loads(out)
    elapsed = time.monotonic() - t_start

    assert summary["n_pages"] == 40
    assert summary["n_positive"] == 20
    assert summary["excluded"] == []
    aucs = {m["method"]: m["roc_auc"] for m in summary["methods"]}
    assert summary["ranking"][0] == "top1", summary["ranking"]
    assert aucs["top1"] >= aucs["mean"] + 0.02
    assert aucs["top1"] >= 0.9
    assert elapsed <= 60.0
    _ok(
        1,
        f"top1 auc {aucs['top1']:.3f} vs mean {aucs['mean']:.3f}, "
        f"{elapsed:.1f}s end to end, localhost only",
    )


# -- 2: aggregation rule equivalences ------------------------------------------


def test_criterion_2_aggregation_equivalence():
    rng = np.random.default_rng(2024)
    trials = 10_000
    mismatches = 0
    for _ in range(trials):
        count = int(rng.integers(1, 11))
        probs = rng.random(count).tolist()
        t = float(rng.random())
        k = int(rng.integers(1, count + 1))

        # n=1 is exactly the max rule
        top1 = method2_topn(probs, t, 1).positive
        if top1 != (max(probs) >= t):
            mismatches += 1

        # counting rule == n-th largest score reaching the threshold
        page = aggregate_page("u", probs, threshold=t, max_n=count)
        by_count = page.method2[k].positive
        nth = sorted(probs, reverse=True)[k - 1]
        if by_count != (nth >= t):
            mismatches += 1
        if page_score(page, Method.topn(k)) != nth:
            mismatches += 1

    assert mismatches == 0
    _ok(2, f"{trials} random probability lists, zero counterexamples")


# -- 3: forest equals the exhaustive greedy oracle ------------------------------


def test_criterion_3_forest_matches_oracle():
    datasets = 0
    for X, y, n_classes in small_datasets(max_n=8):
        data = TrainingSet(
            features=X, labels=tuple("ab"[i] for i in y.tolist())
        )
        forest = train(
            data,
            ForestHyperparams(
                n_trees=1, bootstrap=False, features_per_split=X.shape[0]
            ),
            seed=0,
        )
        oracle = oracle_tree(X, y, n_classes)
        for i in range(X.shape[1]):
            ours = predict_proba(forest, X[:, i]).tolist()
            theirs = oracle(X[:, i])
            assert ours == theirs, f"dataset {datasets}, sample {i}: {ours} != {theirs}"
        datasets += 1
    assert datasets > 500
    _ok(3, f"{datasets} exhaustive tiny datasets, training predictions identical")


# -- 4: metric correctness on the hand-tallied fixture --------------------------


def _pages(rows):
    return [
        LabeledPage(
            page=aggregate_page(f"p{i}", probs, threshold=0.5, max_n=max(len(probs), 1)),
            label=label,
        )
        for i, (probs, label) in enumerate(rows)
    ]


def test_criterion_4_metric_correctness():
    six = _pages(
        [
            ([0.9, 0.1], True),
            ([0.4], True),
            ([0.5], True),
            ([0.2, 0.3], False),
            ([0.7, 0.1], False),
            ([0.45, 0.05], False),
        ]
    )
    c = confusion(six, Method.topn(1), 0.5)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 2, 1)
    assert precision(c) == 2 / 3
    assert recall(c) == 2 / 3
    assert false_positive_rate(c) == 1 / 3
    c = confusion(six, Method.mean(), 0.5)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 0, 3, 1)

    perfect = _pages([([0.9], True), ([0.8], True), ([0.3], False), ([0.1], False)])
    inverted = _pages([([0.1], True), ([0.3], True), ([0.8], False), ([0.9], False)])
    constant = _pages([([0.5], True), ([0.5], True), ([0.5], False), ([0.5], False)])
    assert sweep(perfect, Method.topn(1), KIND_ROC).auc == 1.0
    assert sweep(inverted, Method.topn(1), KIND_ROC).auc == 0.0
    assert sweep(constant, Method.topn(1), KIND_ROC).auc == 0.5
    _ok(4, "hand-tallied confusion counts and degenerate AUCs all exact")


# -- 5: crawler quota, early termination, determinism ---------------------------


def test_criterion_5_crawler_quota_and_determinism():
    rng = np.random.default_rng(11)
    with FixtureServer() as server:
        html = "".join(f'<img src="/im{i:02d}.png">' for i in range(30))
        page = server.add("/page", html)
        for i in range(30):
            server.add(f"/im{i:02d}.png", image_png(make_image(rng, "noise")), "image/png")

        for parallelism in (1, 4, 8):
            server.reset_counts()
            outcome = crawl(
                page,
                CrawlConfig(max_images=10, parallelism=parallelism, shuffle_seed=5),
            )
            assert outcome.status == CrawlStatus.COMPLETE
            assert len(outcome.images) <= 10
            started = server.total_requests() - 1  # minus the page itself
            assert started <= 10 + parallelism, (parallelism, started)
            assert outcome.links_attempted == started

        snapshots = []
        for _ in range(2):
            outcome = crawl(
                page, CrawlConfig(max_images=10, parallelism=1, shuffle_seed=5)
            )
            snapshots.append(
                (
                    tuple(rec.source.url for rec in outcome.images),
                    tuple(rec.content_hash for rec in outcome.images),
                    outcome.links_discovered,
                    outcome.links_attempted,
                    tuple(sorted(outcome.links_rejected.items())),
                    outcome.status,
                )
            )
        assert snapshots[0] == snapshots[1]
    _ok(5, "quota honored, started fetches bounded by quota + window, seeded runs identical")


# -- 6: balance point ------------------------------------------------------------


def _interpolated_rates(pages, method, threshold):
    grid = sorted(
        {s for p in pages if 0 <= (s := page_score(p.page, method)) <= 1}
        | {0.0, 1.0 + 1e-9}
    )
    rates = []
    for t in grid:
        c = confusion(pages, method, t)
        rates.append((t, recall(c), specificity(c)))
    for (t0, s0, q0), (t1, s1, q1) in zip(rates, rates[1:]):
        if t0 <= threshold <= t1:
            if threshold == t0:
                return s0, q0
            a = (s0 - q0) / ((s0 - q0) - (s1 - q1))
            return s0 + a * (s1 - s0), q0 + a * (q1 - q0)
    raise AssertionError("threshold fell outside the sweep grid")


def test_criterion_6_balance_point():
    # symmetric overlap: one of each class misranked at the crossing, so the
    # common value must be the midpoint accuracy 0.5
    symmetric = _pages(
        [([0.9], True), ([0.4], True), ([0.6], False), ([0.1], False)]
    )
    bp = balance_point(symmetric, Method.topn(1))
    assert abs(bp.value - 0.5) <= 1e-9
    sens, spec = _interpolated_rates(symmetric, Method.topn(1), bp.threshold)
    assert abs(sens - spec) <= 1e-9

    # interpolated crossing with hand-computed threshold and value
    interp = _pages(
        [([0.8], True), ([0.6], True), ([0.6], False), ([0.2], False)]
    )
    bp = balance_point(interp, Method.topn(1))
    assert abs(bp.threshold - 0.7) <= 1e-9
    assert abs(bp.value - 0.75) <= 1e-9
    sens, spec = _interpolated_rates(interp, Method.topn(1), bp.threshold)
    assert abs(sens - spec) <= 1e-9
    _ok(6, "sensitivity equals specificity at the reported threshold to 1e-9")


# -- 7: robustness under fuzzing --------------------------------------------------


def test_criterion_7_fuzz_robustness():
    rng = np.random.default_rng(99)
    base = "http://fuzz.test/"

    html_snippets = [
        b"<img src=", b"<img", b"<a href='", b"<base href=",
        b"<img srcset='a.png 1x,", b"\x00\xff\xfe", b"<div style='background:url(",
    ]
    for i in range(1000):
        if i % 3 == 0:
            blob = rng.integers(0, 256, size=int(rng.integers(0, 400))).astype(np.uint8).tobytes()
        else:
            blob = html_snippets[i % len(html_snippets)] + rng.integers(
                0, 256, size=int(rng.integers(0, 120))
            ).astype(np.uint8).tobytes()
        links = extract_image_links(blob, base)  # must never raise
        assert isinstance(links, list)

    png_prefix = image_png(make_image(rng, "noise"))
    rejections = 0
    for i in range(1000):
        if i % 2 == 0:
            blob = rng.integers(0, 256, size=int(rng.integers(0, 600))).astype(np.uint8).tobytes()
        else:
            cut = int(rng.integers(0, len(png_prefix)))
            blob = png_prefix[:cut]
        outcome = validate(blob)  # must never raise
        if isinstance(outcome, Rejection):
            rejections += 1
            assert isinstance(outcome.reason, RejectReason)
            assert outcome.detail
    assert rejections > 900  # nearly everything random must be rejected, with reasons
    _ok(7, "1000 fuzzed documents and 1000 fuzzed images, no aborts, reasons present")


# -- 8: persistence ----------------------------------------------------------------


def test_criterion_8_persistence(tmp_path):
    rng = np.random.default_rng(8)
    X = rng.random((16, 60))
    labels = tuple("ab"[int(b)] for b in rng.integers(0, 2, size=60))
    forest = train(
        TrainingSet(features=X, labels=labels),
        ForestHyperparams(n_trees=25),
        seed=3,
    )
    path = tmp_path / "forest.wibf"
    save_forest(forest, path)
    loaded = load_forest(path)

    probes = rng.random((16, 50))
    a = predict_proba_batch(forest, probes)
    b = predict_proba_batch(loaded, probes)
    assert a.tobytes() == b.tobytes()  # bitwise, not approximately

    blob = forest_to_bytes(forest)
    for cut in (0, 1, 7, len(blob) // 3, len(blob) - 2):
        with pytest.raises(ModelIOError):
            forest_from_bytes(blob[:cut])
    # a flipped byte lands in the magic, version, length, checksum or the
    # checksummed payload, and every one of those must be detected
    for offset in rng.integers(0, len(blob), size=40):
        mutated = bytearray(blob)
        mutated[int(offset)] ^= 0x55
        with pytest.raises(ModelIOError):
            forest_from_bytes(bytes(mutated))
    _ok(8, "50-vector round trip bitwise identical; corrupted files always rejected")
