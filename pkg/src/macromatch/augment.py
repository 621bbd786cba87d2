"""Flip and crop augmentation of template images."""
from __future__ import annotations

import numpy as np

from .imagecore import ImageGrid, resample

DEFAULT_CROPS = 3
DEFAULT_CROP_AREA = 0.81


def hflip(img: ImageGrid) -> ImageGrid:
    return ImageGrid(img.data[:, ::-1, :], normalized=img.normalized)


def augment(template: ImageGrid, n_crops: int = DEFAULT_CROPS,
            crop_area_fraction: float = DEFAULT_CROP_AREA, seed: int = 0) -> list[ImageGrid]:
    """Return ``[original, hflip]`` followed by ``n_crops`` random crops.

    Each crop keeps ``crop_area_fraction`` of the area (same fraction per side)
    and is resized back to the template's size.
    """
    if n_crops < 0:
        raise ValueError("n_crops must be >= 0")
    if not 0.0 < crop_area_fraction <= 1.0:
        raise ValueError("crop_area_fraction must be in (0, 1]")
    h, w = template.height, template.width
    side = np.sqrt(crop_area_fraction)
    ch = max(1, int(round(h * side)))
    cw = max(1, int(round(w * side)))
    rng = np.random.default_rng(seed)
    out = [template, hflip(template)]
    for _ in range(n_crops):
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        crop = ImageGrid(template.data[top:top + ch, left:left + cw],
                         normalized=template.normalized)
        out.append(resample(crop, w, h))
    return out
