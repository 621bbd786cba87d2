"""Seeded synthetic template and macro corpora.

Templates are smooth random fields pushed through a rank transform so their
gray levels are spread uniformly over 0..255. Macros paste text-band and/or
image-patch overlays over a template and return the overlay mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .imagecore import ImageGrid

OVERLAY_KINDS = ("text-band", "image-patch", "combined")
MAX_CORRELATION = 0.5


@dataclass(frozen=True)
class OverlaySpec:
    kind: str = "text-band"
    coverage: float = 0.1
    fill: float | str = 255.0  # constant gray level or "noise"
    anchor: str | None = None  # text band: "top" / "bottom"; None draws one

    def __post_init__(self):
        if self.kind not in OVERLAY_KINDS:
            raise ValueError(f"unknown overlay kind {self.kind!r}")
        if not 0.0 <= self.coverage <= 0.5:
            raise ValueError(f"coverage {self.coverage} outside [0, 0.5]")
        if isinstance(self.fill, str) and self.fill != "noise":
            raise ValueError(f"fill must be a number or 'noise', got {self.fill!r}")
        if self.anchor not in (None, "top", "bottom"):
            raise ValueError(f"bad anchor {self.anchor!r}")


def _smooth_field(rng, w, h):
    sigma = max(w, h) / 24.0
    f = gaussian_filter(rng.standard_normal((h, w)), sigma, mode="reflect")
    ranks = np.argsort(np.argsort(f, axis=None), axis=None)
    return np.floor((ranks + 0.5) / f.size * 256).clip(0, 255).reshape(h, w)


def normalized_correlation(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0


def gen_templates(count: int, seed: int = 0, w: int = 48, h: int = 48) -> list[ImageGrid]:
    """``count`` grayscale templates with pairwise |correlation| below 0.5."""
    if count < 1:
        raise ValueError("count must be >= 1")
    fields = []
    for i in range(count):
        sub = 0
        while True:
            rng = np.random.default_rng([seed, i, sub])
            f = _smooth_field(rng, w, h)
            if all(abs(normalized_correlation(f, g)) < MAX_CORRELATION for g in fields):
                break
            sub += 1
        fields.append(f)
    return [ImageGrid(f) for f in fields]


def _fill(spec, rng, shape):
    if spec.fill == "noise":
        return rng.integers(0, 256, size=shape).astype(float)
    return np.full(shape, float(spec.fill))


def _band_mask(h, w, rows, anchor):
    mask = np.zeros((h, w), dtype=bool)
    if rows:
        if anchor == "top":
            mask[:rows] = True
        else:
            mask[h - rows:] = True
    return mask


def _patch_mask(h, w, area, rng, row_lo=0, row_hi=None):
    row_hi = h if row_hi is None else row_hi
    mask = np.zeros((h, w), dtype=bool)
    avail = row_hi - row_lo
    if area <= 0 or avail <= 0:
        return mask
    aspect = rng.uniform(0.5, 2.0)
    ph = int(np.clip(round(np.sqrt(area / aspect)), 1, avail))
    pw = int(np.clip(round(area / ph), 1, w))
    top = row_lo + int(rng.integers(0, avail - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    mask[top:top + ph, left:left + pw] = True
    return mask


def gen_macro(template: ImageGrid, spec: OverlaySpec, seed: int = 0):
    """Overlay ``template`` per ``spec``; returns ``(macro, mask)``.

    Pixels outside the boolean ``(height, width)`` mask are copied verbatim.
    """
    rng = np.random.default_rng(seed)
    h, w = template.height, template.width
    anchor = spec.anchor or ("top" if rng.random() < 0.5 else "bottom")
    target = spec.coverage * h * w

    if spec.kind == "text-band":
        mask = _band_mask(h, w, int(round(spec.coverage * h)), anchor)
    elif spec.kind == "image-patch":
        mask = _patch_mask(h, w, target, rng)
    else:
        rows = int(round(spec.coverage * h / 2))
        band = _band_mask(h, w, rows, anchor)
        # keep the patch clear of the band so the union hits the requested area
        lo, hi = (rows, h) if anchor == "top" else (0, h - rows)
        patch = _patch_mask(h, w, target - band.sum(), rng, lo, hi)
        mask = band | patch

    data = template.data.copy()
    fill = _fill(spec, rng, (int(mask.sum()), template.channels))
    data[mask] = fill
    return ImageGrid(data), mask


def random_overlay(rng, max_coverage: float, min_coverage: float = 0.05) -> OverlaySpec:
    """Draw a random overlay spec: kind, coverage, and fill."""
    kind = OVERLAY_KINDS[int(rng.integers(0, 3))]
    coverage = float(rng.uniform(min(min_coverage, max_coverage), max_coverage))
    fill = "noise" if rng.random() < 0.5 else float(rng.choice([0.0, 255.0]))
    return OverlaySpec(kind, coverage, fill)


def gen_noise(seed: int = 0, w: int = 48, h: int = 48) -> ImageGrid:
    rng = np.random.default_rng(seed)
    return ImageGrid(rng.integers(0, 256, size=(h, w)).astype(float))


@dataclass
class Corpus:
    templates: list
    macros: list
    labels: list
    masks: list


def gen_corpus(n_templates: int, per_template: int, max_coverage: float = 0.3,
               seed: int = 0, w: int = 48, h: int = 48,
               interleave: bool = True) -> Corpus:
    """Templates plus ``per_template`` macros each.

    With ``interleave`` the macro order cycles through the templates
    (0, 1, .., K-1, 0, 1, ..); otherwise macros are grouped by template.
    """
    templates = gen_templates(n_templates, seed, w, h)
    rng = np.random.default_rng([seed, 1])
    order = ([(j, t) for j in range(per_template) for t in range(n_templates)]
             if interleave else
             [(j, t) for t in range(n_templates) for j in range(per_template)])
    macros, labels, masks = [], [], []
    for j, t in order:
        spec = random_overlay(rng, max_coverage)
        macro, mask = gen_macro(templates[t], spec, seed=int(rng.integers(2**31)))
        macros.append(macro)
        labels.append(t)
        masks.append(mask)
    return Corpus(templates, macros, labels, masks)
