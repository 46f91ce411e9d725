"""Embedding math: normalization, category subspaces, suppression, fusion.

All public functions operate on 1-D float64 numpy arrays of a shared
dimension ``d``. Vectors are validated for finiteness; zero-norm inputs
raise instead of silently producing NaN.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateFusionError,
    DimensionMismatchError,
    EmptyCategoryError,
    NonFiniteVectorError,
    ZeroVectorError,
)

# Norms at or below this are treated as zero.
ZERO_NORM_EPS = 1e-12


def as_vector(values, d: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array, optionally checking ``d``."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise DimensionMismatchError(f"expected dimension {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteVectorError("vector contains NaN or infinite entries")
    return v


def normalize(v) -> np.ndarray:
    """Return ``v / ||v||``.

    Raises :class:`ZeroVectorError` when the norm is at or below
    ``ZERO_NORM_EPS`` and :class:`NonFiniteVectorError` on NaN/inf input.
    """
    v = as_vector(v)
    n = float(np.linalg.norm(v))
    if n <= ZERO_NORM_EPS:
        raise ZeroVectorError(f"cannot normalize vector with norm {n!r}")
    return v / n


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    u = as_vector(u)
    v = as_vector(v, d=u.shape[0])
    un = float(np.linalg.norm(u))
    vn = float(np.linalg.norm(v))
    if un <= ZERO_NORM_EPS or vn <= ZERO_NORM_EPS:
        raise ZeroVectorError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (un * vn), -1.0, 1.0))


def canonical_rows(embeddings: np.ndarray) -> np.ndarray:
    """Normalize rows in float64 and cast to float32.

    This is the single canonical representation for stored index rows.
    Search and the brute-force oracle must both score against rows produced
    here, otherwise float32 rounding flips near-tied ranks between them.
    """
    m = np.asarray(embeddings, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteVectorError("embedding matrix contains NaN or infinite entries")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= ZERO_NORM_EPS):
        raise ZeroVectorError("embedding matrix contains a zero row")
    return (m / norms[:, None]).astype(np.float32)


@dataclass(frozen=True)
class CategorySubspace:
    """Low-rank subspace capturing the embedding variation of one category.

    ``basis`` has shape (d, rank) with orthonormal columns: the top right
    singular vectors of the stacked (uncentered by default) embeddings.
    """

    category_id: str
    basis: np.ndarray
    rank: int
    singular_values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.basis.ndim != 2 or self.basis.shape[1] != self.rank:
            raise DimensionMismatchError(
                f"basis shape {self.basis.shape} inconsistent with rank {self.rank}"
            )

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    def project(self, v) -> np.ndarray:
        """Orthogonal projection of ``v`` onto the subspace."""
        v = as_vector(v, d=self.dim)
        return self.basis @ (self.basis.T @ v)


def compute_category_subspace(
    category_id: str,
    embeddings,
    *,
    rank: int | None = None,
    variance_threshold: float = 0.90,
    max_rank: int = 16,
    center: bool = False,
) -> CategorySubspace:
    """SVD-derived subspace for one category's embeddings.

    ``embeddings`` stacks one row per asset. By default rows enter the SVD
    uncentered, so the leading direction tracks the category mean; pass
    ``center=True`` to subtract the mean first. With ``rank=None`` the rank
    is the smallest r whose squared singular values cover
    ``variance_threshold`` of the total energy, capped at ``max_rank``.
    An explicit ``rank`` is clamped to min(n, d).
    """
    m = np.asarray(embeddings, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    n, d = m.shape
    if n == 0:
        raise EmptyCategoryError(f"category {category_id!r} has no embeddings")
    if not np.all(np.isfinite(m)):
        raise NonFiniteVectorError("embedding matrix contains NaN or infinite entries")
    if center:
        m = m - m.mean(axis=0, keepdims=True)

    _, s, vt = np.linalg.svd(m, full_matrices=False)

    if rank is not None:
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        r = min(rank, n, d)
    else:
        energy = s**2
        total = float(energy.sum())
        if total <= ZERO_NORM_EPS:
            # All-zero rows after centering; keep a single direction.
            r = 1
        else:
            covered = np.cumsum(energy) / total
            r = int(np.searchsorted(covered, variance_threshold) + 1)
        r = min(r, max_rank, n, d)

    return CategorySubspace(
        category_id=category_id,
        basis=np.ascontiguousarray(vt[:r].T),
        rank=r,
        singular_values=s[:r].copy(),
    )


def suppress(g, others: dict[str, CategorySubspace]) -> np.ndarray:
    """Remove other categories' subspace components from a global embedding.

    Applies one projection-subtraction per subspace in ascending
    ``category_id`` order and returns the raw residual without
    renormalizing. The caller decides whether the residual is still usable
    (see the collapse threshold in :mod:`lookforge.retrieval`).
    """
    r = as_vector(g).copy()
    for cid in sorted(others):
        sub = others[cid]
        if sub.dim != r.shape[0]:
            raise DimensionMismatchError(
                f"subspace {cid!r} has dim {sub.dim}, residual has dim {r.shape[0]}"
            )
        r -= sub.project(r)
    return r


@dataclass(frozen=True)
class FusionWeights:
    """Branch mixing weights: ``alpha`` for parts, ``beta`` for residuals."""

    alpha: float = 0.7
    beta: float = 0.7

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {w}")


def fuse(primary, text_prior, w: float) -> np.ndarray:
    """Weighted fusion ``normalize(w * primary + (1 - w) * text_prior)``.

    Raises :class:`DegenerateFusionError` when the combination cancels to
    (numerical) zero, which otherwise would manufacture an arbitrary
    direction out of noise.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fusion weight must lie in [0, 1], got {w}")
    p = as_vector(primary)
    t = as_vector(text_prior, d=p.shape[0])
    fused = w * p + (1.0 - w) * t
    n = float(np.linalg.norm(fused))
    if n <= ZERO_NORM_EPS:
        raise DegenerateFusionError("fused vector has no direction")
    return fused / n
