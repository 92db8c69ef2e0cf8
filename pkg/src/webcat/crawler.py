"""Bounded image crawling.

Given a page URL, collect up to ``max_images`` decodable images from it.
Discovery is tolerant (a best-effort HTML scan that never raises), selection
is a seeded shuffle of the discovered links, and fetching stops as soon as
the quota is met. Optionally, same-host sub-pages are searched sequentially
when the page itself does not yield enough images.
"""

from __future__ import annotations

import logging
import random
import re
import time
from collections import Counter, deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from typing import Callable, Protocol
from urllib.parse import urldefrag, urljoin, urlsplit

import requests

from .images import ImageRecord, Rejection, ValidationPolicy, validate

log = logging.getLogger(__name__)

_ALLOWED_SCHEMES = ("http", "https")
_CSS_URL_RE = re.compile(r"url\(\s*['\"]?([^'\")]+)['\"]?\s*\)", re.IGNORECASE)

Validator = Callable[[bytes, "ImageLink"], "ImageRecord | Rejection"]


class SourceKind(str, Enum):
    IMG_SRC = "img_src"
    SRCSET_ENTRY = "srcset_entry"
    OG_IMAGE = "og_image"
    LINK_ICON = "link_icon"
    CSS_BACKGROUND_INLINE = "css_background_inline"


class CrawlStatus(str, Enum):
    COMPLETE = "complete"
    PARTIAL = "partial"
    PAGE_UNREACHABLE = "page_unreachable"


@dataclass(frozen=True)
class ImageLink:
    url: str
    origin_page: str
    source_kind: SourceKind


@dataclass(frozen=True)
class CrawlConfig:
    max_images: int = 10
    per_request_timeout: float = 10.0
    total_budget: float = 60.0
    follow_suburls: bool = False
    max_suburls: int = 20
    parallelism: int = 8
    shuffle_seed: int | None = None
    user_agent: str = "webcat/0.1"

    def __post_init__(self) -> None:
        if self.max_images < 1:
            raise ValueError("max_images must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.max_suburls < 0:
            raise ValueError("max_suburls must be >= 0")
        if self.per_request_timeout <= 0 or self.total_budget <= 0:
            raise ValueError("timeouts must be positive")
        if self.follow_suburls and self.parallelism > 1:
            raise ValueError(
                "follow_suburls requires sequential fetching (parallelism=1)"
            )


@dataclass(frozen=True)
class CrawlOutcome:
    page_url: str
    images: tuple[ImageRecord, ...]
    links_discovered: int
    links_attempted: int
    links_rejected: dict[str, int]
    elapsed: float
    status: CrawlStatus


@dataclass(frozen=True)
class FetchResult:
    url: str
    status: int
    body: bytes

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


class Fetcher(Protocol):
    def get(self, url: str, timeout: float) -> FetchResult: ...


class RequestsFetcher:
    """HTTP transport: redirects capped at 5 hops, no cookie persistence."""

    def __init__(self, user_agent: str = "webcat/0.1"):
        self.user_agent = user_agent

    def get(self, url: str, timeout: float) -> FetchResult:
        with requests.Session() as session:
            session.max_redirects = 5
            resp = session.get(
                url,
                timeout=timeout,
                headers={"User-Agent": self.user_agent},
                allow_redirects=True,
            )
            return FetchResult(url=resp.url, status=resp.status_code, body=resp.content)


def _is_fetchable(url: str) -> bool:
    try:
        return urlsplit(url).scheme in _ALLOWED_SCHEMES
    except ValueError:
        return False


def _split_srcset(value: str) -> list[str]:
    urls = []
    for part in value.split(","):
        tokens = part.strip().split()
        if tokens:
            urls.append(tokens[0])
    return urls


class _PageScan(HTMLParser):
    """One tolerant pass over a document, collecting raw link candidates.

    Candidates are kept in document order as (kind, raw_url) pairs; anchors
    are collected separately. Resolution against the (possibly <base>-bent)
    document base happens afterwards.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.base_href: str | None = None
        self.images: list[tuple[SourceKind, str]] = []
        self.anchors: list[str] = []

    def handle_starttag(self, tag: str, attrs: list) -> None:
        d = {}
        for item in attrs:
            try:
                k, v = item
            except (TypeError, ValueError):
                continue
            if k is None:
                continue
            d.setdefault(k.lower(), v if v is not None else "")

        if tag == "base" and self.base_href is None and d.get("href"):
            self.base_href = d["href"]
        elif tag == "img":
            if d.get("src"):
                self.images.append((SourceKind.IMG_SRC, d["src"]))
            for u in _split_srcset(d.get("srcset", "")):
                self.images.append((SourceKind.SRCSET_ENTRY, u))
        elif tag == "source":
            for u in _split_srcset(d.get("srcset", "")):
                self.images.append((SourceKind.SRCSET_ENTRY, u))
        elif tag == "meta":
            key = (d.get("property") or d.get("name") or "").lower()
            if key == "og:image" and d.get("content"):
                self.images.append((SourceKind.OG_IMAGE, d["content"]))
        elif tag == "link":
            rel = (d.get("rel") or "").lower()
            if "icon" in rel.split() and d.get("href"):
                self.images.append((SourceKind.LINK_ICON, d["href"]))
        elif tag == "a":
            if d.get("href"):
                self.anchors.append(d["href"])

        style = d.get("style", "")
        if style:
            for u in _CSS_URL_RE.findall(style):
                self.images.append((SourceKind.CSS_BACKGROUND_INLINE, u))

    def handle_startendtag(self, tag: str, attrs: list) -> None:
        self.handle_starttag(tag, attrs)


def _scan(html: bytes | str, base_url: str) -> tuple[_PageScan, str]:
    text = html.decode("utf-8", errors="replace") if isinstance(html, bytes) else html
    scan = _PageScan()
    try:
        scan.feed(text)
        scan.close()
    except Exception:  # noqa: BLE001 - extraction must never fail
        log.debug("HTML scan aborted mid-document for %s", base_url, exc_info=True)
    base = base_url
    if scan.base_href:
        try:
            base = urljoin(base_url, scan.base_href)
        except ValueError:
            pass
    return scan, base


def extract_image_links(html: bytes | str, base_url: str) -> list[ImageLink]:
    """Best-effort inventory of image URLs in a document.

    Covers img@src, srcset candidates, og:image, link-rel icons and inline
    CSS backgrounds. Relative URLs resolve against <base href> when present,
    otherwise against ``base_url``. Only http/https survive (data: URIs are
    dropped), and duplicates keep their first occurrence in document order.
    """
    scan, base = _scan(html, base_url)
    seen: set[str] = set()
    links: list[ImageLink] = []
    for kind, raw in scan.images:
        raw = raw.strip()
        if not raw:
            continue
        try:
            absolute = urljoin(base, raw)
        except ValueError:
            continue
        if not _is_fetchable(absolute) or absolute in seen:
            continue
        seen.add(absolute)
        links.append(ImageLink(url=absolute, origin_page=base_url, source_kind=kind))
    return links


def extract_suburls(html: bytes | str, base_url: str, limit: int = 20) -> list[str]:
    """Same-host anchor targets: deduplicated, fragment-stripped, capped."""
    scan, base = _scan(html, base_url)
    try:
        host = urlsplit(base_url).netloc
    except ValueError:
        return []
    seen: set[str] = set()
    out: list[str] = []
    for raw in scan.anchors:
        if len(out) >= limit:
            break
        raw = raw.strip()
        if not raw:
            continue
        try:
            absolute = urldefrag(urljoin(base, raw))[0]
        except ValueError:
            continue
        if not _is_fetchable(absolute):
            continue
        if urlsplit(absolute).netloc != host or absolute in seen:
            continue
        seen.add(absolute)
        out.append(absolute)
    return out


def _fetch_and_validate(
    fetcher: Fetcher,
    validator: Validator,
    link: ImageLink,
    timeout: float,
) -> ImageRecord | Rejection:
    try:
        result = fetcher.get(link.url, timeout=timeout)
    except Exception as exc:  # noqa: BLE001 - transport errors are expected
        return Rejection(reason="fetch_error", detail=type(exc).__name__)  # type: ignore[arg-type]
    if not result.ok:
        return Rejection(reason="fetch_error", detail=f"http {result.status}")  # type: ignore[arg-type]
    return validator(result.body, link)


class _Collector:
    """Mutable crawl state shared by the sequential and pooled paths."""

    def __init__(self, config: CrawlConfig, deadline: float):
        self.config = config
        self.deadline = deadline
        self.hits: list[tuple[int, ImageRecord]] = []  # (discovery index, record)
        self.rejected: Counter = Counter()
        self.attempted = 0

    @property
    def full(self) -> bool:
        return len(self.hits) >= self.config.max_images

    @property
    def out_of_time(self) -> bool:
        return time.monotonic() > self.deadline

    def record(self, index: int, outcome: ImageRecord | Rejection) -> None:
        if isinstance(outcome, Rejection):
            reason = outcome.reason
            self.rejected[getattr(reason, "value", reason)] += 1
        elif self.full:
            self.rejected["surplus"] += 1
        else:
            self.hits.append((index, outcome))

    def images(self) -> tuple[ImageRecord, ...]:
        return tuple(rec for _, rec in sorted(self.hits, key=lambda t: t[0]))


def _drain_sequential(
    queue: deque[tuple[int, ImageLink]],
    state: _Collector,
    fetcher: Fetcher,
    validator: Validator,
) -> None:
    timeout = state.config.per_request_timeout
    while queue and not state.full and not state.out_of_time:
        index, link = queue.popleft()
        state.attempted += 1
        state.record(index, _fetch_and_validate(fetcher, validator, link, timeout))


def _drain_pool(
    queue: deque[tuple[int, ImageLink]],
    state: _Collector,
    fetcher: Fetcher,
    validator: Validator,
) -> None:
    """Fetch with a bounded window so quota satisfaction stops new downloads.

    At most ``parallelism`` requests are in flight; nothing new is submitted
    once the quota is met or the budget is gone, so started requests never
    exceed the quota-satisfying prefix plus the window width.
    """
    timeout = state.config.per_request_timeout
    with ThreadPoolExecutor(max_workers=state.config.parallelism) as pool:
        in_flight = {}
        while True:
            while (
                queue
                and len(in_flight) < state.config.parallelism
                and not state.full
                and not state.out_of_time
            ):
                index, link = queue.popleft()
                state.attempted += 1
                fut = pool.submit(_fetch_and_validate, fetcher, validator, link, timeout)
                in_flight[fut] = index
            if not in_flight:
                break
            done, _ = wait(in_flight, return_when=FIRST_COMPLETED)
            for fut in done:
                state.record(in_flight.pop(fut), fut.result())


def crawl(
    page_url: str,
    config: CrawlConfig | None = None,
    fetcher: Fetcher | None = None,
    validator: Validator | None = None,
) -> CrawlOutcome:
    """Collect up to ``config.max_images`` validated images from a page.

    Discovered links are shuffled (seeded when ``shuffle_seed`` is set) and
    fetched until the quota is met, the links run out, or the time budget is
    exhausted. With ``follow_suburls`` (sequential mode only), same-host
    sub-pages are visited breadth-first, always draining already-discovered
    image links before fetching another page; each newly discovered batch is
    shuffled on arrival.
    """
    config = config or CrawlConfig()
    fetcher = fetcher or RequestsFetcher(config.user_agent)
    if validator is None:
        policy = ValidationPolicy()
        validator = lambda raw, link: validate(raw, link, policy)  # noqa: E731

    started = time.monotonic()
    state = _Collector(config, deadline=started + config.total_budget)

    def outcome(status: CrawlStatus, discovered: int) -> CrawlOutcome:
        return CrawlOutcome(
            page_url=page_url,
            images=state.images(),
            links_discovered=discovered,
            links_attempted=state.attempted,
            links_rejected=dict(state.rejected),
            elapsed=time.monotonic() - started,
            status=status,
        )

    try:
        root = fetcher.get(page_url, timeout=config.per_request_timeout)
    except Exception:  # noqa: BLE001
        return outcome(CrawlStatus.PAGE_UNREACHABLE, 0)
    if not root.ok:
        return outcome(CrawlStatus.PAGE_UNREACHABLE, 0)

    rng = random.Random(config.shuffle_seed)
    root_base = root.url or page_url
    links = extract_image_links(root.body, root_base)
    rng.shuffle(links)
    queue: deque[tuple[int, ImageLink]] = deque(enumerate(links))
    seen_urls = {link.url for link in links}
    discovered = len(links)

    if config.parallelism > 1:
        _drain_pool(queue, state, fetcher, validator)
    else:
        _drain_sequential(queue, state, fetcher, validator)

    if config.follow_suburls and not state.full:
        suburls = extract_suburls(root.body, root_base, limit=config.max_suburls)
        for sub in suburls:
            if state.full or state.out_of_time:
                break
            if sub == page_url:
                continue
            try:
                page = fetcher.get(sub, timeout=config.per_request_timeout)
            except Exception:  # noqa: BLE001
                continue
            if not page.ok:
                continue
            batch = [
                link
                for link in extract_image_links(page.body, page.url or sub)
                if link.url not in seen_urls
            ]
            rng.shuffle(batch)
            seen_urls.update(link.url for link in batch)
            queue.extend(enumerate(batch, start=discovered))
            discovered += len(batch)
            _drain_sequential(queue, state, fetcher, validator)

    status = CrawlStatus.COMPLETE if state.full else CrawlStatus.PARTIAL
    return outcome(status, discovered)
