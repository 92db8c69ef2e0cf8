"""Command line interface.

Subcommands:
  classify  score one page and print a report
  batch     score a list of pages with bounded concurrency
  train     fit a forest from a labeled image manifest
  evaluate  sweep thresholds over labeled pages and rank the decision rules

Exit codes: 0 = classified / success, 2 = page unclassifiable, 1 = error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .aggregation import PageResult
from .crawler import CrawlConfig, RequestsFetcher
from .evaluation import (
    KIND_PR,
    KIND_ROC,
    LabeledPage,
    Method,
    curves_to_csv,
    curves_to_svg,
    evaluation_summary,
    sweep,
)
from .features import Backend, ExtractorSpec, build_extractor, extract
from .forest import (
    ForestHyperparams,
    ModelIOError,
    TrainingSet,
    load_forest,
    oob_accuracy,
    save_forest,
    train,
)
from .images import Rejection, normalize, validate
from .pipeline import PageClassifier, PageOutcome

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCLASSIFIABLE = 2

BATCH_PAGE_CONCURRENCY = 4

_TRUE_LABELS = {"1", "true"}
_FALSE_LABELS = {"0", "false"}


class CliError(Exception):
    """Fatal usage or input problem; message goes to stderr, exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors, which would collide with
    # the "unclassifiable" exit code; remap to the generic error code.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_crawl_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-images", type=int, default=10, help="image quota per page")
    p.add_argument("--seed", type=int, default=None, help="shuffle seed for link selection")
    p.add_argument("--parallelism", type=int, default=None,
                   help="concurrent image fetches per page (default 8, or 1 with --follow-suburls)")
    p.add_argument("--follow-suburls", action="store_true",
                   help="search same-host sub-pages when the page itself has too few images")
    p.add_argument("--timeout-ms", type=int, default=10_000, help="per-request timeout")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="forest model file")
    p.add_argument("--extractor", choices=["stub", "model"], default="stub",
                   help="feature backend: deterministic stub or an external model file")
    p.add_argument("--extractor-model", default=None,
                   help="path to the external extractor model (.npz), with --extractor model")
    p.add_argument("--dim", type=int, default=21841, help="feature vector width")
    p.add_argument("--target-class", default=None,
                   help="class whose probability is scored (default: second of two classes)")


def _add_rule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=0.41, help="decision threshold")
    p.add_argument("--n", type=int, default=1, help="images that must reach the threshold")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["json", "csv"], default="json", help="report format")
    p.add_argument("--out", default=None, help="file (classify) or directory (batch, evaluate)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="webcat", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_classify = sub.add_parser("classify", help="classify a single page")
    p_classify.add_argument("url")
    for add in (_add_crawl_flags, _add_model_flags, _add_rule_flags, _add_output_flags):
        add(p_classify)

    p_batch = sub.add_parser("batch", help="classify every URL in a file")
    p_batch.add_argument("url_list", help="text file, one page URL per line")
    for add in (_add_crawl_flags, _add_model_flags, _add_rule_flags, _add_output_flags):
        add(p_batch)

    p_train = sub.add_parser("train", help="train a forest from a label<TAB>path manifest")
    p_train.add_argument("manifest")
    p_train.add_argument("--model", required=True, help="where to write the model file")
    p_train.add_argument("--extractor", choices=["stub", "model"], default="stub")
    p_train.add_argument("--extractor-model", default=None)
    p_train.add_argument("--dim", type=int, default=21841)
    p_train.add_argument("--seed", type=int, default=0, help="training seed")
    p_train.add_argument("--trees", type=int, default=100, help="number of trees")
    p_train.add_argument("--timeout-ms", type=int, default=10_000)

    p_eval = sub.add_parser("evaluate", help="rank decision rules on labeled pages")
    p_eval.add_argument("labeled_list", help="text file, one label<TAB>url per line")
    for add in (_add_crawl_flags, _add_model_flags, _add_rule_flags):
        add(p_eval)
    p_eval.add_argument("--out", default=None, help="directory for curves and summary")
    p_eval.add_argument("--svg", action="store_true", help="also write SVG plots")

    return parser


# --- shared construction ----------------------------------------------------


def _crawl_config(args) -> CrawlConfig:
    parallelism = args.parallelism
    if parallelism is None:
        parallelism = 1 if args.follow_suburls else 8
    return CrawlConfig(
        max_images=args.max_images,
        per_request_timeout=args.timeout_ms / 1000.0,
        follow_suburls=args.follow_suburls,
        parallelism=parallelism,
        shuffle_seed=args.seed,
    )


def _extractor_spec(args) -> ExtractorSpec:
    backend = Backend.DETERMINISTIC_STUB if args.extractor == "stub" else Backend.EXTERNAL_MODEL
    if backend == Backend.EXTERNAL_MODEL and not args.extractor_model:
        raise CliError("--extractor model requires --extractor-model PATH")
    return ExtractorSpec(backend=backend, dim=args.dim, model_path=args.extractor_model)


def _classifier(args) -> PageClassifier:
    model_path = Path(args.model)
    if not model_path.exists():
        raise CliError(f"model file not found: {model_path}")
    forest = load_forest(model_path)
    if args.n < 1 or args.n > args.max_images:
        raise CliError(f"--n must lie in 1..{args.max_images} (got {args.n})")
    return PageClassifier(
        forest=forest,
        extractor_spec=_extractor_spec(args),
        crawl_config=_crawl_config(args),
        threshold=args.threshold,
        target_class=args.target_class,
    )


# --- report shaping ---------------------------------------------------------


def report_dict(outcome: PageOutcome, n: int, target_class: str, threshold: float) -> dict:
    result: PageResult | None = outcome.result
    images = []
    if result is not None:
        images = [
            {"link": link, "probability": prob}
            for link, prob in zip(outcome.image_urls, result.image_probs)
        ]
    method1 = method2 = None
    if result is not None:
        method1 = {
            "mean": result.method1.mean,
            "std": result.method1.std,
            "positive": result.method1.positive,
        }
        decision = result.method2[n]
        method2 = {
            "n": n,
            "count_above": decision.count_above,
            "positive": decision.positive,
        }
    c = outcome.crawl
    return {
        "schema_version": 1,
        "kind": "classify_report",
        "page_url": outcome.page_url,
        "status": outcome.status,
        "threshold": threshold,
        "n": n,
        "target_class": target_class,
        "images": images,
        "method1": method1,
        "method2": method2,
        "crawl": {
            "status": c.status.value,
            "links_discovered": c.links_discovered,
            "links_attempted": c.links_attempted,
            "links_rejected": dict(sorted(c.links_rejected.items())),
            "elapsed_ms": c.elapsed * 1000.0,
        },
        "timings": {
            "crawl_ms": outcome.timings.crawl_ms,
            "extract_ms": outcome.timings.extract_ms,
            "predict_ms": outcome.timings.predict_ms,
        },
    }


_CSV_COLUMNS = [
    "page_url", "status", "images", "mean", "std", "method1_positive",
    "count_above", "method2_positive", "threshold", "n",
]


def _csv_row(report: dict) -> list:
    m1 = report["method1"] or {}
    m2 = report["method2"] or {}
    fmt = lambda v: "" if v is None else v  # noqa: E731
    return [
        report["page_url"],
        report["status"],
        len(report["images"]),
        fmt(m1.get("mean")),
        fmt(m1.get("std")),
        fmt(m1.get("positive")),
        fmt(m2.get("count_above")),
        fmt(m2.get("positive")),
        report["threshold"],
        report["n"],
    ]


def reports_to_csv(reports: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for report in reports:
        writer.writerow(_csv_row(report))
    return buf.getvalue()


def matrix_csv(reports: list[dict], max_images: int) -> str:
    """One row per classified page: probabilities sorted descending, then mean."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["page_url"] + [f"p{i + 1:02d}" for i in range(max_images)] + ["mean"])
    for report in reports:
        if report["status"] != "classified":
            continue
        probs = sorted((img["probability"] for img in report["images"]), reverse=True)
        cells = [f"{p:.6f}" for p in probs] + [""] * (max_images - len(probs))
        writer.writerow([report["page_url"]] + cells + [f"{report['method1']['mean']:.6f}"])
    return buf.getvalue()


def _emit(text: str, stream=None) -> None:
    (stream or sys.stdout).write(text if text.endswith("\n") else text + "\n")


# --- subcommands ------------------------------------------------------------


def cmd_classify(args) -> int:
    classifier = _classifier(args)
    outcome = classifier.classify(args.url)
    report = report_dict(outcome, args.n, classifier.target_class, args.threshold)
    rendered = (
        json.dumps(report, indent=2)
        if args.format == "json"
        else reports_to_csv([report])
    )
    _emit(rendered)
    if args.out:
        Path(args.out).write_text(rendered if rendered.endswith("\n") else rendered + "\n")
    return EXIT_OK if report["status"] == "classified" else EXIT_UNCLASSIFIABLE


def _read_url_list(path: str) -> list[str]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read url list {path}: {exc}") from exc
    urls = [line.strip() for line in lines]
    return [u for u in urls if u and not u.startswith("#")]


def cmd_batch(args) -> int:
    classifier = _classifier(args)
    urls = _read_url_list(args.url_list)
    with ThreadPoolExecutor(max_workers=BATCH_PAGE_CONCURRENCY) as pool:
        outcomes = list(pool.map(classifier.classify, urls))
    reports = [
        report_dict(o, args.n, classifier.target_class, args.threshold) for o in outcomes
    ]
    by_status = {"classified": 0, "unclassifiable": 0, "unreachable": 0}
    for r in reports:
        by_status[r["status"]] += 1
    summary = {
        "schema_version": 1,
        "kind": "batch_summary",
        "pages": len(reports),
        **by_status,
        "positive_method1": sum(
            1 for r in reports if r["method1"] and r["method1"]["positive"]
        ),
        "positive_method2": sum(
            1 for r in reports if r["method2"] and r["method2"]["positive"]
        ),
        "threshold": args.threshold,
        "n": args.n,
    }

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "reports.jsonl").open("w") as fh:
            for r in reports:
                fh.write(json.dumps(r) + "\n")
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        (out_dir / "matrix.csv").write_text(matrix_csv(reports, args.max_images))
        summary["files"] = sorted(str(p) for p in out_dir.iterdir())
        _emit(json.dumps(summary, indent=2))
    elif args.format == "json":
        for r in reports:
            _emit(json.dumps(r))
        _emit(json.dumps(summary))
    else:
        _emit(reports_to_csv(reports))
        _emit(json.dumps(summary), stream=sys.stderr)
    return EXIT_OK


def _read_manifest(path: str) -> list[tuple[str, str]]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CliError(f"{path}:{lineno}: expected label<TAB>location")
        entries.append((parts[0].strip(), parts[1].strip()))
    if not entries:
        raise CliError(f"manifest {path} has no entries")
    return entries


def _load_sample_bytes(location: str, fetcher: RequestsFetcher, timeout: float) -> bytes:
    if location.startswith(("http://", "https://")):
        result = fetcher.get(location, timeout=timeout)
        if not result.ok:
            raise OSError(f"http {result.status}")
        return result.body
    return Path(location).read_bytes()


def cmd_train(args) -> int:
    entries = _read_manifest(args.manifest)
    spec = _extractor_spec(args)
    build_extractor(spec)  # surface model problems before any image work
    fetcher = RequestsFetcher()
    timeout = args.timeout_ms / 1000.0

    columns: list[np.ndarray] = []
    labels: list[str] = []
    kept: list[str] = []
    failures: list[str] = []
    for label, location in entries:
        try:
            raw = _load_sample_bytes(location, fetcher, timeout)
        except Exception as exc:  # noqa: BLE001 - tallied, not fatal per-image
            failures.append(f"{location}: {exc}")
            continue
        record = validate(raw)
        if isinstance(record, Rejection):
            failures.append(f"{location}: {record.reason.value}")
            continue
        tensor = normalize(record, spec.input_side)
        columns.append(extract(tensor, spec).values)
        labels.append(label)
        kept.append(location)

    if len(failures) * 2 > len(entries):
        raise CliError(
            f"{len(failures)} of {len(entries)} manifest images unreadable "
            f"(first: {failures[0]})"
        )
    distinct = sorted(set(labels))
    if len(distinct) < 2:
        raise CliError(
            f"manifest yields {len(distinct)} distinct class(es) {distinct}; need 2"
        )
    if len(columns) < 2:
        raise CliError("fewer than 2 usable training images")

    data = TrainingSet(
        features=np.stack(columns, axis=1),
        labels=tuple(labels),
        manifest=tuple(kept),
    )
    forest = train(data, ForestHyperparams(n_trees=args.trees), seed=args.seed)
    oob = oob_accuracy(forest, data)
    save_forest(forest, args.model)
    _emit(json.dumps(
        {
            "schema_version": 1,
            "kind": "train_summary",
            "model_path": str(args.model),
            "classes": list(forest.classes),
            "n_samples": len(labels),
            "n_failed": len(failures),
            "oob_accuracy": oob,
            "dim": forest.dim,
            "trees": args.trees,
            "seed": args.seed,
        },
        indent=2,
    ))
    return EXIT_OK


def _read_labeled_list(path: str) -> list[tuple[bool, str]]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read labeled list {path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CliError(f"{path}:{lineno}: expected label<TAB>url")
        raw = parts[0].strip().lower()
        if raw in _TRUE_LABELS:
            label = True
        elif raw in _FALSE_LABELS:
            label = False
        else:
            raise CliError(f"{path}:{lineno}: label must be 0/1/true/false, got {parts[0]!r}")
        pairs.append((label, parts[1].strip()))
    if not pairs:
        raise CliError(f"labeled list {path} has no entries")
    return pairs


def cmd_evaluate(args) -> int:
    pairs = _read_labeled_list(args.labeled_list)
    if len({label for label, _ in pairs}) < 2:
        raise CliError("labeled list must contain both positive and negative pages")
    classifier = _classifier(args)
    with ThreadPoolExecutor(max_workers=BATCH_PAGE_CONCURRENCY) as pool:
        outcomes = list(pool.map(classifier.classify, [url for _, url in pairs]))

    pages: list[LabeledPage] = []
    excluded: list[dict] = []
    for (label, url), outcome in zip(pairs, outcomes):
        if outcome.result is None:
            excluded.append({"page_url": url, "status": outcome.status})
        else:
            pages.append(LabeledPage(page=outcome.result, label=label))
    if not pages or len({p.label for p in pages}) < 2:
        raise CliError(
            f"after excluding {len(excluded)} unclassifiable page(s), both classes "
            "are no longer represented"
        )

    max_n = args.max_images
    summary = evaluation_summary(pages, max_n=max_n)
    summary["excluded"] = excluded
    methods = [Method.topn(n) for n in range(1, max_n + 1)] + [Method.mean()]
    curves = [sweep(pages, m, kind) for kind in (KIND_ROC, KIND_PR) for m in methods]

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = [out_dir / "curves.csv", out_dir / "summary.json"]
        (out_dir / "curves.csv").write_text(curves_to_csv(curves))
        if args.svg:
            roc = [c for c in curves if c.kind == KIND_ROC]
            pr = [c for c in curves if c.kind == KIND_PR]
            (out_dir / "roc.svg").write_text(curves_to_svg(roc, "ROC"))
            (out_dir / "pr.svg").write_text(curves_to_svg(pr, "Precision / Recall"))
            files += [out_dir / "roc.svg", out_dir / "pr.svg"]
        summary["files"] = sorted(str(p) for p in files)
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(json.dumps(summary, indent=2))
    return EXIT_OK


_COMMANDS = {
    "classify": cmd_classify,
    "batch": cmd_batch,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"webcat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelIOError, FileNotFoundError, ValueError) as exc:
        print(f"webcat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
