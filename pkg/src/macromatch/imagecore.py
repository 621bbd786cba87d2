"""Image grids, file I/O, and the preprocessing pipeline shared by every stage.

Working-space images are grayscale, 48x48 by default, and mean-subtracted
with a single global mean computed over the whole working set.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WORKING_SIZE = (48, 48)
LUMA = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """Raised for unreadable or malformed image files."""


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Pixel grid stored as a read-only (height, width, channels) float array."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ImageFormatError(f"unsupported grid shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return (self.normalized == other.normalized
                and self.shape == other.shape
                and bool(np.array_equal(self.data, other.data)))

    __hash__ = None

    def __repr__(self):
        return (f"ImageGrid({self.width}x{self.height}x{self.channels}, "
                f"normalized={self.normalized})")


# ---------------------------------------------------------------------------
# File formats

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("malformed image: truncated header")
    return buf[start:pos], pos


def _decode_netpbm(buf: bytes) -> ImageGrid:
    magic = buf[:2]
    channels = {b"P5": 1, b"P6": 3}[magic]
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise ImageFormatError(f"malformed image: bad header field {tok!r}") from exc
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError("malformed image: bad dimensions or maxval")
    # exactly one whitespace byte separates header and payload
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    payload = buf[pos:pos + count * dtype.itemsize]
    if len(payload) < count * dtype.itemsize:
        raise ImageFormatError("malformed image: truncated payload")
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if maxval != 255:
        values = values * (255.0 / maxval)
    return ImageGrid(values.reshape(height, width, channels))


def _decode_igrd(buf: bytes) -> ImageGrid:
    if len(buf) < 16:
        raise ImageFormatError("malformed image: truncated IGRD header")
    width, height, channels = struct.unpack("<III", buf[4:16])
    if channels not in (1, 3):
        raise ImageFormatError(f"unsupported channel count {channels}")
    count = width * height * channels
    if width < 1 or height < 1 or len(buf) < 16 + 4 * count:
        raise ImageFormatError("malformed image: truncated IGRD payload")
    values = np.frombuffer(buf[16:16 + 4 * count], dtype="<f4").astype(np.float64)
    return ImageGrid(values.reshape(height, width, channels))


def load_image(path) -> ImageGrid:
    """Read a binary PGM (P5), PPM (P6) or IGRD raw-tensor file."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"unreadable image {path}: {exc}") from exc
    if buf[:4] == b"IGRD":
        return _decode_igrd(buf)
    if buf[:2] in (b"P5", b"P6"):
        return _decode_netpbm(buf)
    raise ImageFormatError(f"malformed image: unknown magic in {path}")


def encode_netpbm(img: ImageGrid) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    pixels = np.clip(np.rint(img.data), 0, 255).astype(np.uint8)
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + pixels.tobytes()


def encode_igrd(img: ImageGrid) -> bytes:
    header = b"IGRD" + struct.pack("<III", img.width, img.height, img.channels)
    return header + img.data.astype("<f4").tobytes()


def save_image(img: ImageGrid, path) -> None:
    """Write PGM/PPM (clipped and rounded to 8 bits) or IGRD, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".igrd":
        path.write_bytes(encode_igrd(img))
    else:
        path.write_bytes(encode_netpbm(img))


# ---------------------------------------------------------------------------
# Pixel operations

def to_gray(img: ImageGrid) -> ImageGrid:
    if img.channels == 1:
        return img
    return ImageGrid(img.data @ LUMA, normalized=img.normalized)


def channel_means(images: Iterable[ImageGrid]) -> np.ndarray:
    """Per-channel mean over every pixel of every image."""
    total = None
    count = 0
    for img in images:
        s = img.data.reshape(-1, img.channels).sum(axis=0)
        if total is None:
            total = s
        elif s.shape != total.shape:
            raise ValueError("channel count mismatch in working set")
        else:
            total = total + s
        count += img.width * img.height
    if total is None:
        raise ValueError("empty working set")
    return total / count


def normalize_contrast(img: ImageGrid, global_mean) -> ImageGrid:
    mean = np.atleast_1d(np.asarray(global_mean, dtype=np.float64))
    if mean.shape != (img.channels,):
        raise ValueError(
            f"global mean has {mean.size} channels, image has {img.channels}")
    return ImageGrid(img.data - mean, normalized=True)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # W[o, i] = overlap of input cell i with output cell o, rows sum to 1
    edges_in = np.arange(n_in + 1) / n_in
    edges_out = np.arange(n_out + 1) / n_out
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    w = np.clip(hi - lo, 0.0, None) * n_out
    return w / w.sum(axis=1, keepdims=True)


def resample(img: ImageGrid, out_w: int, out_h: int) -> ImageGrid:
    """Area-weighted resampling; works for both shrinking and enlarging."""
    if img.width < 1 or img.height < 1:
        raise ValueError("zero-sized input")
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be positive")
    if (out_w, out_h) == (img.width, img.height):
        return img
    wy = _area_weights(img.height, out_h)
    wx = _area_weights(img.width, out_w)
    out = np.einsum("oh,hwc,pw->opc", wy, img.data, wx)
    return ImageGrid(out, normalized=img.normalized)


def downsample(img: ImageGrid, out_w: int = WORKING_SIZE[0],
               out_h: int = WORKING_SIZE[1]) -> ImageGrid:
    """Box-filter (area-average) resampling to ``out_w`` x ``out_h``."""
    return resample(img, out_w, out_h)


def vectorize(img: ImageGrid) -> np.ndarray:
    """Row-major, channel-interleaved flattening."""
    return img.data.reshape(-1).copy()


def reshape(vec, width: int, height: int, channels: int = 1,
            normalized: bool = False) -> ImageGrid:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != width * height * channels:
        raise ValueError(f"vector of dim {vec.size} does not fit "
                         f"{width}x{height}x{channels}")
    return ImageGrid(vec.reshape(height, width, channels), normalized=normalized)


def sub(a: ImageGrid, b: ImageGrid) -> ImageGrid:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return ImageGrid(a.data - b.data, normalized=a.normalized or b.normalized)


def add(a: ImageGrid, b: ImageGrid) -> ImageGrid:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return ImageGrid(a.data + b.data, normalized=a.normalized or b.normalized)


# ---------------------------------------------------------------------------
# Pipeline

def to_working(img: ImageGrid, size: tuple[int, int] = WORKING_SIZE) -> ImageGrid:
    """Grayscale then downsample; mean subtraction happens separately."""
    return downsample(to_gray(img), *size)


@dataclass(frozen=True)
class Preprocessor:
    """Grayscale -> downsample -> subtract the working-set mean."""

    global_mean: float
    size: tuple[int, int] = WORKING_SIZE

    @classmethod
    def fit(cls, images: Iterable[ImageGrid],
            size: tuple[int, int] = WORKING_SIZE) -> "Preprocessor":
        mean = channel_means(to_working(img, size) for img in images)
        return cls(float(mean[0]), tuple(size))

    def __call__(self, img: ImageGrid) -> ImageGrid:
        return normalize_contrast(to_working(img, self.size), self.global_mean)

    def restore(self, img: ImageGrid) -> ImageGrid:
        """Undo the mean subtraction so a working grid can be saved on 0-255."""
        return ImageGrid(img.data + self.global_mean)


def prepare_working_set(targets: Sequence[ImageGrid],
                        templates: Sequence[ImageGrid] = (),
                        size: tuple[int, int] = WORKING_SIZE):
    """Fit the global mean on targets and templates, return both processed."""
    pre = Preprocessor.fit(list(targets) + list(templates), size)
    return pre, [pre(t) for t in targets], [pre(s) for s in templates]
