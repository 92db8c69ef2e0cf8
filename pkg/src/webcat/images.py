"""Image validation and normalization.

Raw bytes fetched by the crawler pass through :func:`validate`, which either
produces a decoded :class:`ImageRecord` or a :class:`Rejection` carrying a
machine-readable reason. Accepted records are turned into fixed-size float
tensors by :func:`normalize` before feature extraction.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
from PIL import Image, UnidentifiedImageError

if TYPE_CHECKING:  # pragma: no cover
    from .crawler import ImageLink

# Pillow format names we decode. GIF is first-frame only.
DEFAULT_FORMATS = frozenset({"PNG", "JPEG", "GIF", "WEBP", "BMP"})


class RejectReason(str, Enum):
    CORRUPT = "corrupt"
    TINY = "tiny"
    OVERSIZE = "oversize"
    UNSUPPORTED_FORMAT = "unsupported_format"


@dataclass(frozen=True)
class Rejection:
    """Why a candidate image was not accepted."""

    reason: RejectReason
    detail: str = ""


@dataclass(frozen=True)
class ValidationPolicy:
    min_dimension: int = 64
    max_bytes: int = 10 * 1024 * 1024
    accepted_formats: frozenset[str] = DEFAULT_FORMATS

    def __post_init__(self) -> None:
        if self.min_dimension < 1:
            raise ValueError("min_dimension must be >= 1")
        if self.max_bytes < 1:
            raise ValueError("max_bytes must be >= 1")


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """A decoded RGB image plus where it came from.

    ``pixels`` is uint8 with shape (height, width, 3), row-major.
    ``content_hash`` is a 64-bit digest of the decoded raster, so two records
    hash equal exactly when their pixels are identical.
    """

    source: "ImageLink | None"
    width: int
    height: int
    pixels: np.ndarray = field(repr=False)
    content_hash: int

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be uint8")


def raster_hash(pixels: np.ndarray) -> int:
    """64-bit content digest of a decoded raster (shape included)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(np.asarray(pixels.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(pixels).tobytes())
    return int.from_bytes(h.digest(), "big")


def _flatten_alpha(im: Image.Image) -> Image.Image:
    """Composite any transparency over a white background, yielding RGB."""
    has_alpha = "A" in im.getbands() or (im.mode == "P" and "transparency" in im.info)
    if not has_alpha:
        return im.convert("RGB")
    rgba = im.convert("RGBA")
    background = Image.new("RGB", rgba.size, (255, 255, 255))
    background.paste(rgba, mask=rgba.getchannel("A"))
    return background


def validate(
    raw: bytes,
    link: "ImageLink | None" = None,
    policy: ValidationPolicy | None = None,
) -> ImageRecord | Rejection:
    """Decode raw bytes into an ImageRecord, or explain why not.

    Never raises on hostile input: any decode failure maps to a Rejection.
    Decoding happens entirely in memory.
    """
    policy = policy or ValidationPolicy()
    if len(raw) > policy.max_bytes:
        return Rejection(RejectReason.OVERSIZE, f"{len(raw)} bytes > {policy.max_bytes}")
    try:
        im = Image.open(io.BytesIO(raw))
        fmt = im.format or ""
        if fmt not in policy.accepted_formats:
            return Rejection(RejectReason.UNSUPPORTED_FORMAT, fmt or "unknown")
        im.load()
        width, height = im.size
        if width < policy.min_dimension or height < policy.min_dimension:
            return Rejection(RejectReason.TINY, f"{width}x{height}")
        rgb = _flatten_alpha(im)
    except UnidentifiedImageError:
        return Rejection(RejectReason.CORRUPT, "undecodable")
    except Exception as exc:  # noqa: BLE001 - totality over precision here
        return Rejection(RejectReason.CORRUPT, type(exc).__name__)
    pixels = np.asarray(rgb, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        return Rejection(RejectReason.CORRUPT, f"bad raster shape {pixels.shape}")
    return ImageRecord(
        source=link,
        width=width,
        height=height,
        pixels=pixels,
        content_hash=raster_hash(pixels),
    )


def encode_png(record: ImageRecord) -> bytes:
    """Re-encode a record as PNG bytes (used by fixtures and round-trips)."""
    im = Image.fromarray(record.pixels, mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-centered sampling and edge clamping."""
    in_h, in_w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1.0 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1.0 - wx) + img[y1][:, x1] * wx
    return top * (1.0 - wy) + bottom * wy


def normalize(record: ImageRecord, side: int = 224) -> np.ndarray:
    """Scale shorter edge to ``side`` (bilinear), center-crop to side x side.

    Returns a float64 tensor of shape (side, side, 3) with values in [0, 1].
    """
    if side < 1:
        raise ValueError("side must be >= 1")
    img = record.pixels.astype(np.float64) / 255.0
    h, w = record.height, record.width
    scale = side / min(h, w)
    new_h = max(side, int(round(h * scale)))
    new_w = max(side, int(round(w * scale)))
    resized = _resize_bilinear(img, new_h, new_w)
    top = (new_h - side) // 2
    left = (new_w - side) // 2
    out = resized[top : top + side, left : left + side]
    return np.clip(out, 0.0, 1.0)
