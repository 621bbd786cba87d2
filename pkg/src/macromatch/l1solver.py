"""Penalized l1 reconstruction (basis pursuit denoising) by coordinate descent.

Minimizes ``0.5 * ||A x - y||^2 + lam * ||x||_1`` over a dictionary of
unit-norm columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA_RATIO = 0.4
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-l2 columns grouped by template id.

    ``blanks[c]`` is the un-augmented working-space image of template ``c``;
    it is what a match hands back as the recovered template.
    """

    columns: np.ndarray
    template_ids: np.ndarray
    blanks: tuple = ()

    def __post_init__(self):
        cols = np.array(self.columns, dtype=np.float64)
        if cols.ndim != 2 or cols.shape[1] < 1:
            raise ValueError("dictionary needs at least one column")
        if not np.all(np.isfinite(cols)):
            raise ValueError("dictionary contains non-finite values")
        norms = np.linalg.norm(cols, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("dictionary columns must have unit l2 norm")
        ids = np.asarray(self.template_ids, dtype=np.int64)
        if ids.shape != (cols.shape[1],):
            raise ValueError("one template id per column required")
        if set(ids.tolist()) != set(range(int(ids.max()) + 1)):
            raise ValueError("template ids must be contiguous from 0")
        cols.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "template_ids", ids)
        object.__setattr__(self, "blanks", tuple(self.blanks))
        object.__setattr__(self, "_gram", cols.T @ cols)

    @classmethod
    def from_vectors(cls, vectors, template_ids, blanks=()) -> "Dictionary":
        """Normalize raw column vectors to unit length; zero vectors are rejected."""
        cols = np.column_stack([np.asarray(v, dtype=np.float64) for v in vectors])
        norms = np.linalg.norm(cols, axis=0)
        if np.any(norms == 0):
            raise ValueError("cannot normalize a zero column")
        return cls(cols / norms, template_ids, blanks)

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def m(self) -> int:
        return self.columns.shape[1]

    @property
    def k(self) -> int:
        return int(self.template_ids.max()) + 1

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.template_ids, minlength=self.k)

    @property
    def gram(self) -> np.ndarray:
        return self._gram


@dataclass(frozen=True, eq=False)
class SparseCode:
    coeffs: np.ndarray
    iterations: int
    converged: bool
    objective: float
    lam: float
    history: tuple = field(default=(), repr=False)


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def default_lambda(A: Dictionary, y, ratio: float = DEFAULT_LAMBDA_RATIO) -> float:
    """``ratio * ||A^T y||_inf``, floored so that a zero target still gets lam > 0.

    The 0.4 default keeps off-template coefficients at zero on occluded
    targets; much smaller ratios let other templates soak up the overlay.
    """
    corr = np.max(np.abs(A.columns.T @ np.asarray(y, dtype=np.float64)))
    return max(ratio * corr, np.finfo(float).tiny)


def _objective(yy, b, gram, x, lam):
    # 0.5 * ||Ax - y||^2 expanded through the Gram matrix; clipped at 0 for roundoff
    quad = 0.5 * yy - x @ b + 0.5 * x @ (gram @ x)
    return max(quad, 0.0) + lam * np.abs(x).sum()


def solve_l1(A: Dictionary, y, lam: float | None = None, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, x0=None,
             lam_ratio: float = DEFAULT_LAMBDA_RATIO) -> SparseCode:
    """Cyclic coordinate descent with soft-thresholding.

    One iteration is a full sweep over the columns. Convergence is declared
    when the largest coefficient change within a sweep drops below ``tol``.
    Without an explicit ``lam`` the penalty is ``lam_ratio * ||A^T y||_inf``.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != A.n:
        raise ValueError(f"target dim {y.shape[0]} != dictionary dim {A.n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite values")
    if lam is None:
        lam = default_lambda(A, y, lam_ratio)
    if not lam > 0 or not tol > 0:
        raise ValueError("lam and tol must be positive")

    gram = A.gram
    b = A.columns.T @ y
    yy = float(y @ y)
    x = np.zeros(A.m) if x0 is None else np.array(x0, dtype=np.float64)
    # q = A^T (y - A x); unit columns make the coordinate update x_j + q_j
    q = b - gram @ x

    history = [_objective(yy, b, gram, x, lam)]
    converged = False
    it = 0
    # lam >= ||A^T y||_inf means x = 0 is optimal
    if x0 is None and np.max(np.abs(b)) <= lam:
        return SparseCode(x, 0, True, history[0], lam, tuple(history))

    for it in range(1, max_iter + 1):
        max_change = 0.0
        for j in range(A.m):
            old = x[j]
            z = old + q[j]
            new = np.sign(z) * max(abs(z) - lam, 0.0)
            if new != old:
                delta = new - old
                x[j] = new
                q -= gram[:, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        history.append(_objective(yy, b, gram, x, lam))
        if max_change < tol:
            converged = True
            break

    return SparseCode(x, it, converged, history[-1], lam, tuple(history))


def residual_norm(A: Dictionary, x, y) -> float:
    """||A x - y||_2; ``x`` may be a SparseCode or a coefficient vector."""
    coeffs = x.coeffs if isinstance(x, SparseCode) else np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if coeffs.shape != (A.m,) or y.shape != (A.n,):
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(A.columns @ coeffs - y))
