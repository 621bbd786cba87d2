"""Template matching by sparse-code class voting, with target fallback."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from .augment import DEFAULT_CROP_AREA, augment
from .imagecore import ImageGrid, sub, vectorize
from .l1solver import (DEFAULT_LAMBDA_RATIO, DEFAULT_MAX_ITER, DEFAULT_TOL,
                       Dictionary, SparseCode, residual_norm, solve_l1)

# residual threshold as a fraction of ||y||_2
DEFAULT_TR = 0.95
DEFAULT_EPS_Z = 1e-6
DEFAULT_AUGMENT = 4


@dataclass(frozen=True, eq=False)
class MatchResult:
    matched: bool
    template_id: int | None
    votes: np.ndarray
    residual: float
    threshold: float
    template_image: ImageGrid
    overlay: ImageGrid
    code: SparseCode | None = None


def _as_groups(templates):
    groups = []
    for t in templates:
        group = [t] if isinstance(t, ImageGrid) else list(t)
        if not group:
            raise ValueError("empty template group")
        groups.append(group)
    return groups


def build_dictionary(templates: Sequence, augment_per_template: int = DEFAULT_AUGMENT,
                     seed: int = 0, crop_area_fraction: float = DEFAULT_CROP_AREA) -> Dictionary:
    """Stack working-space templates and their augmentations into unit columns.

    ``templates[c]`` is either one grid or a list of sample grids for template
    ``c``; the first grid of a group is its blank image. Each template adds
    ``augment_per_template`` extra columns: a horizontal flip, then random
    crops.
    """
    groups = _as_groups(templates)
    if not groups:
        raise ValueError("empty template list")
    shape = groups[0][0].shape
    vectors, ids, blanks = [], [], []
    for c, group in enumerate(groups):
        if any(g.shape != shape for g in group):
            raise ValueError(f"template {c} has mismatched dimensions")
        extra = []
        if augment_per_template > 0:
            extra = augment(group[0], max(augment_per_template - 1, 0),
                            crop_area_fraction, seed=[seed, c])[1:1 + augment_per_template]
        for g in group + extra:
            vectors.append(vectorize(g))
            ids.append(c)
        blanks.append(group[0])
    return Dictionary.from_vectors(vectors, ids, blanks)


def class_votes(code, A: Dictionary, eps_z: float = DEFAULT_EPS_Z,
                count_abs: bool = False) -> np.ndarray:
    """Per-template count of coefficients above ``eps_z``.

    Only positive coefficients count unless ``count_abs`` is set.
    """
    x = code.coeffs if isinstance(code, SparseCode) else np.asarray(code, dtype=float)
    if x.shape != (A.m,):
        raise ValueError(f"code dim {x.shape} != dictionary size {A.m}")
    hits = (np.abs(x) if count_abs else x) > eps_z
    return np.bincount(A.template_ids[hits], minlength=A.k)


def pick_template(votes, code, A: Dictionary) -> int:
    """Argmax of votes; ties go to the larger positive coefficient mass, then the lower id."""
    votes = np.asarray(votes)
    tied = np.flatnonzero(votes == votes.max())
    if tied.size == 1:
        return int(tied[0])
    x = code.coeffs if isinstance(code, SparseCode) else np.asarray(code, dtype=float)
    mass = np.bincount(A.template_ids, weights=np.maximum(x, 0.0), minlength=A.k)
    best = mass[tied].max()
    return int(tied[np.flatnonzero(mass[tied] == best)[0]])


def decouple(target: ImageGrid, template: ImageGrid) -> ImageGrid:
    """Overlay = target - template, elementwise."""
    return sub(target, template)


def match_template(A: Dictionary, target: ImageGrid, t_r: float = DEFAULT_TR,
                   lam: float | None = None, eps_z: float = DEFAULT_EPS_Z,
                   count_abs: bool = False, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER,
                   lam_ratio: float = DEFAULT_LAMBDA_RATIO) -> MatchResult:
    """Match one working-space target against ``A``.

    ``t_r`` is relative: the target matches when ``||A x - y|| <= t_r * ||y||``.
    On a miss the target itself stands in for its template and the overlay
    is zero.
    """
    if not t_r > 0:
        raise ValueError("t_r must be positive")
    y = vectorize(target)
    code = solve_l1(A, y, lam, tol=tol, max_iter=max_iter, lam_ratio=lam_ratio)
    res = residual_norm(A, code, y)
    threshold = t_r * float(np.linalg.norm(y))
    votes = class_votes(code, A, eps_z, count_abs)
    if res <= threshold:
        tid = pick_template(votes, code, A)
        blank = A.blanks[tid]
        if blank.shape != target.shape:
            raise ValueError("target and template dimensions differ")
        return MatchResult(True, tid, votes, res, threshold, blank,
                           decouple(target, blank), code)
    zero = ImageGrid(np.zeros(target.shape), normalized=target.normalized)
    return MatchResult(False, None, votes, res, threshold, target, zero, code)


def match_many(A: Dictionary, targets: Sequence[ImageGrid], jobs: int | None = None,
               **kwargs) -> list[MatchResult]:
    """Match every target; results come back in input order for any ``jobs``."""
    jobs = jobs or os.cpu_count() or 1
    fn = partial(match_template, A, **kwargs)
    if jobs <= 1 or len(targets) < 2:
        return [fn(t) for t in targets]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, targets, chunksize=max(1, len(targets) // (4 * jobs))))
