import io
import threading

import numpy as np
import pytest
from PIL import Image

from webcat.localserver import FixtureServer
from webcat.crawler import FetchResult


def png_bytes(width: int, height: int, color=(200, 30, 30), noise_seed=None) -> bytes:
    """Small solid (or lightly dithered) PNG for crawl fixtures."""
    pixels = np.full((height, width, 3), color, dtype=np.uint8)
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        noise = rng.integers(0, 12, size=pixels.shape, dtype=np.uint8)
        pixels = np.clip(pixels.astype(np.int16) + noise, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class DictFetcher:
    """In-memory fetcher with per-URL bodies and an ordered call log."""

    def __init__(self, routes: dict[str, bytes], raising: set[str] | None = None):
        self.routes = routes
        self.raising = raising or set()
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def get(self, url: str, timeout: float) -> FetchResult:
        with self._lock:
            self.calls.append(url)
        if url in self.raising:
            raise ConnectionError(f"refused: {url}")
        body = self.routes.get(url)
        if body is None:
            return FetchResult(url=url, status=404, body=b"")
        return FetchResult(url=url, status=200, body=body)

    def image_calls(self, page_url: str) -> list[str]:
        return [u for u in self.calls if u != page_url]


@pytest.fixture
def server():
    with FixtureServer() as s:
        yield s
