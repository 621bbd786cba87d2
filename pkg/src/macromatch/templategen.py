"""Template discovery from a target set by sparse matching and median blending."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import DEFAULT_CROP_AREA, DEFAULT_CROPS, augment
from .imagecore import ImageGrid, vectorize
from .l1solver import DEFAULT_LAMBDA_RATIO, Dictionary, residual_norm, solve_l1
from .matcher import DEFAULT_EPS_Z, DEFAULT_TR, class_votes, pick_template

# convergence when the blend moves by less than this RMS gray level
DEFAULT_TB_RMS = 2.0


def default_tb(n: int) -> float:
    return float(DEFAULT_TB_RMS * np.sqrt(n))


def median_blend(images: Sequence[ImageGrid]) -> ImageGrid:
    """Pixel-wise median; an even stack averages the two middle values.

    Taking the lower middle instead would make a two-image blend the pixelwise
    minimum, which equals a seed carrying a dark overlay and freezes it.
    """
    if not images:
        raise ValueError("median of an empty stack")
    shape = images[0].shape
    if any(img.shape != shape for img in images):
        raise ValueError("images in a median stack must share dimensions")
    return ImageGrid(np.median(np.stack([img.data for img in images]), axis=0),
                     normalized=any(img.normalized for img in images))


@dataclass
class Template:
    template_id: int
    image: ImageGrid
    members: list
    converged: bool = False


@dataclass
class TemplateLibrary:
    templates: list
    t_r: float
    t_b: float
    dictionary: Dictionary | None = None
    # one (target index, template id, action) triple per target
    trace: list = field(default_factory=list)

    @property
    def images(self) -> list[ImageGrid]:
        return [t.image for t in self.templates]

    def assignment(self) -> dict[int, int]:
        """target index -> template id."""
        return {i: t.template_id for t in self.templates for i in t.members}


def _current_dictionary(templates):
    vectors = [vectorize(t.image) for t in templates]
    ids = [t.template_id for t in templates]
    blanks = [t.image for t in templates]
    return Dictionary.from_vectors(vectors, ids, blanks)


def construct_templates(targets: Sequence[ImageGrid], t_r: float = DEFAULT_TR,
                        t_b: float | None = None, lam: float | None = None,
                        seed: int = 0, n_crops: int = DEFAULT_CROPS,
                        crop_area_fraction: float = DEFAULT_CROP_AREA,
                        eps_z: float = DEFAULT_EPS_Z,
                        lam_ratio: float = DEFAULT_LAMBDA_RATIO) -> TemplateLibrary:
    """Grow a template set in one ordered pass over working-space ``targets``.

    Each target either joins the template it matches (relative residual
    ``<= t_r``), whose image is re-blended from all members until successive
    blends differ by at most ``t_b`` in l2, or seeds a new template. The
    returned library carries a dictionary of every template plus its flips
    and crops.
    """
    if not targets:
        raise ValueError("empty target list")
    if not t_r > 0:
        raise ValueError("t_r must be positive")
    if t_b is None:
        t_b = default_tb(targets[0].data.size)
    if not t_b > 0:
        raise ValueError("t_b must be positive")

    library = TemplateLibrary([], t_r, float(t_b))
    A = None
    for i, t in enumerate(targets):
        if not library.templates:
            library.templates.append(Template(0, t, [i]))
            library.trace.append((i, 0, "seed"))
            A = None
            continue
        if A is None:
            A = _current_dictionary(library.templates)
        y = vectorize(t)
        if y.shape[0] != A.n:
            raise ValueError(f"target {i} has mismatched dimensions")
        code = solve_l1(A, y, lam, lam_ratio=lam_ratio)
        if residual_norm(A, code, y) <= t_r * np.linalg.norm(y):
            tid = pick_template(class_votes(code, A, eps_z), code, A)
            tpl = library.templates[tid]
            tpl.members.append(i)
            if tpl.converged:
                library.trace.append((i, tid, "join"))
                continue
            v = median_blend([targets[j] for j in tpl.members])
            action = "blend"
            if np.linalg.norm(v.data - tpl.image.data) <= t_b:
                tpl.converged = True
                action = "converge"
            tpl.image = v
            library.trace.append((i, tid, action))
            A = None
        else:
            tid = len(library.templates)
            library.templates.append(Template(tid, t, [i]))
            library.trace.append((i, tid, "seed"))
            A = None

    vectors, ids, blanks = [], [], []
    for tpl in library.templates:
        for g in augment(tpl.image, n_crops, crop_area_fraction, seed=[seed, tpl.template_id]):
            vectors.append(vectorize(g))
            ids.append(tpl.template_id)
        blanks.append(tpl.image)
    library.dictionary = Dictionary.from_vectors(vectors, ids, blanks)
    return library
