"""In-process HTTP server for tests and synthetic experiments.

Serves an in-memory route table (or a directory snapshot) on an ephemeral
127.0.0.1 port and counts every request per path, which lets callers assert
how many downloads a crawl actually started.
"""

from __future__ import annotations

import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".htm": "text/html; charset=utf-8",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".bmp": "image/bmp",
    ".webp": "image/webp",
    ".tsv": "text/plain; charset=utf-8",
    ".txt": "text/plain; charset=utf-8",
}


class _Route:
    __slots__ = ("status", "content_type", "body", "delay", "location")

    def __init__(self, status, content_type, body, delay=0.0, location=None):
        self.status = status
        self.content_type = content_type
        self.body = body
        self.delay = delay
        self.location = location


class FixtureServer:
    def __init__(self) -> None:
        self._routes: dict[str, _Route] = {}
        self._counts: Counter = Counter()
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self) -> None:  # noqa: N802 - http.server API
                path = self.path.split("?", 1)[0]
                with server._lock:
                    server._counts[path] += 1
                    route = server._routes.get(path)
                if route is None:
                    self.send_error(404)
                    return
                if route.delay:
                    time.sleep(route.delay)
                self.send_response(route.status)
                if route.location:
                    self.send_header("Location", route.location)
                self.send_header("Content-Type", route.content_type)
                self.send_header("Content-Length", str(len(route.body)))
                self.end_headers()
                self.wfile.write(route.body)

            def log_message(self, *args) -> None:  # silence per-request noise
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    # -- route management ----------------------------------------------

    def add(
        self,
        path: str,
        body: bytes | str,
        content_type: str = "text/html; charset=utf-8",
        status: int = 200,
        delay: float = 0.0,
    ) -> str:
        data = body.encode("utf-8") if isinstance(body, str) else body
        with self._lock:
            self._routes[path] = _Route(status, content_type, data, delay=delay)
        return self.url(path)

    def add_redirect(self, path: str, target: str, status: int = 302) -> str:
        with self._lock:
            self._routes[path] = _Route(status, "text/plain", b"", location=target)
        return self.url(path)

    def add_directory(self, root: Path, prefix: str = "") -> None:
        """Publish a directory snapshot; files are read once, at call time."""
        root = Path(root)
        for file in sorted(root.rglob("*")):
            if not file.is_file():
                continue
            rel = file.relative_to(root).as_posix()
            ctype = _CONTENT_TYPES.get(file.suffix.lower(), "application/octet-stream")
            self.add(f"{prefix}/{rel}", file.read_bytes(), content_type=ctype)

    # -- introspection ---------------------------------------------------

    def url(self, path: str = "/") -> str:
        host, port = self._httpd.server_address[:2]
        if not path.startswith("/"):
            path = "/" + path
        return f"http://{host}:{port}{path}"

    def request_count(self, path: str) -> int:
        with self._lock:
            return self._counts[path]

    def total_requests(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    def reset_counts(self) -> None:
        with self._lock:
            self._counts.clear()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "FixtureServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
