"""End-to-end page classification: crawl, normalize, extract, vote, aggregate."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .aggregation import PageResult, UnclassifiableError, aggregate_page
from .crawler import CrawlConfig, CrawlOutcome, CrawlStatus, Fetcher, crawl
from .features import ExtractorSpec, build_extractor, extract_batch
from .forest import Forest, predict_proba_batch
from .images import normalize


@dataclass(frozen=True)
class Timings:
    crawl_ms: float
    extract_ms: float
    predict_ms: float


@dataclass(frozen=True)
class PageOutcome:
    """Everything one classified (or unclassifiable) page produced."""

    page_url: str
    crawl: CrawlOutcome
    image_urls: tuple[str, ...]
    result: PageResult | None  # None when the page yielded no usable images
    timings: Timings

    @property
    def status(self) -> str:
        if self.crawl.status == CrawlStatus.PAGE_UNREACHABLE:
            return "unreachable"
        return "classified" if self.result is not None else "unclassifiable"


class PageClassifier:
    """A loaded forest plus extractor, applied to live pages.

    Instances are immutable after construction and safe to share across
    worker threads.
    """

    def __init__(
        self,
        forest: Forest,
        extractor_spec: ExtractorSpec,
        crawl_config: CrawlConfig | None = None,
        threshold: float = 0.41,
        target_class: str | None = None,
        fetcher: Fetcher | None = None,
    ):
        if forest.dim != extractor_spec.dim:
            raise ValueError(
                f"forest expects dim={forest.dim} but extractor emits {extractor_spec.dim}"
            )
        self.forest = forest
        self.extractor_spec = extractor_spec
        build_extractor(extractor_spec)  # fail fast on a bad external model
        self.crawl_config = crawl_config or CrawlConfig()
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        self.threshold = threshold
        self.target_class = target_class or default_target_class(forest.classes)
        if self.target_class not in forest.classes:
            raise ValueError(
                f"target class {self.target_class!r} not in model classes {forest.classes}"
            )
        self._target_index = forest.classes.index(self.target_class)
        self.fetcher = fetcher

    def classify(self, page_url: str) -> PageOutcome:
        t0 = time.perf_counter()
        outcome = crawl(page_url, self.crawl_config, fetcher=self.fetcher)
        t1 = time.perf_counter()
        side = self.extractor_spec.input_side
        tensors = [normalize(rec, side) for rec in outcome.images]
        matrix = extract_batch(tensors, self.extractor_spec)
        t2 = time.perf_counter()
        probs = predict_proba_batch(self.forest, matrix)[:, self._target_index]
        try:
            result = aggregate_page(
                page_url,
                probs.tolist(),
                self.threshold,
                max_n=self.crawl_config.max_images,
            )
        except UnclassifiableError:
            result = None
        t3 = time.perf_counter()
        return PageOutcome(
            page_url=page_url,
            crawl=outcome,
            image_urls=tuple(
                rec.source.url if rec.source else "" for rec in outcome.images
            ),
            result=result,
            timings=Timings(
                crawl_ms=(t1 - t0) * 1000.0,
                extract_ms=(t2 - t1) * 1000.0,
                predict_ms=(t3 - t2) * 1000.0,
            ),
        )


def default_target_class(classes: tuple[str, ...]) -> str:
    """For a binary model the positive class is the later one in sorted
    order (e.g. labels 0/1 or negative/positive pick the natural target)."""
    if len(classes) == 2:
        return classes[1]
    raise ValueError(
        f"model has {len(classes)} classes; pick one explicitly with --target-class"
    )
