"""Two-branch retrieval and candidate pooling.

Each routed category gets up to two query vectors:

- a part branch, when usable part evidence exists: the part embedding
  fused with the category text prior at weight ``alpha``;
- a concept-residual branch, always: the global view embedding with every
  *other* category's subspace projected out, renormalized, and fused with
  the text prior at weight ``beta``.

Branch hits merge into a single pool by max score, with hits found by
both branches tagged as such. Suppression can collapse the residual to
numerical zero when the global embedding lies entirely in other
categories' subspaces; the branch then degrades to the text prior alone
rather than searching with noise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .catalog import Taxonomy
from .evidence import EvidenceStore, resolve_part_or_global, select_views
from .index import CategoryIndex, SearchHit
from .vecmath import CategorySubspace, fuse, normalize, suppress

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievalConfig:
    alpha: float = 0.7
    beta: float = 0.7
    branch_k: int = 40
    pool_k: int = 40
    gate_k: int = 20
    residual_collapse_eps: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {w}")
        for name in ("branch_k", "pool_k", "gate_k"):
            k = getattr(self, name)
            if k < 1:
                raise ValueError(f"{name} must be >= 1, got {k}")
        if self.gate_k > self.pool_k:
            raise ValueError(
                f"gate_k ({self.gate_k}) cannot exceed pool_k ({self.pool_k})"
            )
        if self.residual_collapse_eps <= 0:
            raise ValueError("residual_collapse_eps must be positive")


@dataclass(frozen=True)
class Candidate:
    asset_id: str
    score: float
    source: str  # "part", "concept_residual", or "both"


@dataclass
class CategoryRetrieval:
    """Pooled retrieval outcome for one category."""

    category_id: str
    pool: list[Candidate]
    used_part_evidence: bool
    residual_collapsed: bool
    source_view: str | None
    warnings: list[str] = field(default_factory=list)


def _to_candidates(hits: list[SearchHit], source: str) -> list[Candidate]:
    return [Candidate(h.asset_id, h.score, source) for h in hits]


def retrieve_part(
    index: CategoryIndex,
    part_embedding,
    text_prior,
    cfg: RetrievalConfig,
) -> list[Candidate]:
    """Part branch: fuse(part, text prior, alpha), search branch_k."""
    q = fuse(part_embedding, text_prior, cfg.alpha)
    return _to_candidates(index.search(q, cfg.branch_k), "part")


def retrieve_concept_residual(
    index: CategoryIndex,
    global_embedding,
    text_prior,
    subspaces: dict[str, CategorySubspace],
    cfg: RetrievalConfig,
) -> tuple[list[Candidate], bool]:
    """Concept-residual branch for ``index.category_id``.

    Suppresses every *other* category's subspace out of the global
    embedding. Passing an empty ``subspaces`` mapping disables suppression
    (the ablation path) without changing anything else. Returns the
    candidates and whether the residual collapsed to the text prior.
    """
    others = {
        cid: sub for cid, sub in subspaces.items() if cid != index.category_id
    }
    residual = suppress(global_embedding, others)
    collapsed = bool(np.linalg.norm(residual) <= cfg.residual_collapse_eps)
    if collapsed:
        logger.warning(
            "residual for category %r collapsed; querying with text prior only",
            index.category_id,
        )
        q = normalize(text_prior)
    else:
        q = fuse(normalize(residual), text_prior, cfg.beta)
    return _to_candidates(index.search(q, cfg.branch_k), "concept_residual"), collapsed


def build_pool(
    part: list[Candidate],
    residual: list[Candidate],
    pool_k: int,
) -> list[Candidate]:
    """Merge branch candidates into one ranked pool.

    Max-score dedup: an asset found by both branches keeps its higher
    score and the source tag "both". Ordering is score descending with
    ties broken by ascending asset id, truncated to ``pool_k``.
    """
    merged: dict[str, Candidate] = {}
    for cand in [*part, *residual]:
        prev = merged.get(cand.asset_id)
        if prev is None:
            merged[cand.asset_id] = cand
            continue
        merged[cand.asset_id] = Candidate(
            asset_id=cand.asset_id,
            score=max(prev.score, cand.score),
            source="both" if prev.source != cand.source else prev.source,
        )
    ranked = sorted(merged.values(), key=lambda c: (-c.score, c.asset_id))
    return ranked[:pool_k]


def retrieve_category(
    category_id: str,
    index: CategoryIndex,
    store: EvidenceStore,
    taxonomy: Taxonomy,
    subspaces: dict[str, CategorySubspace],
    cfg: RetrievalConfig,
) -> CategoryRetrieval:
    """Run both branches for one routed category and pool the results."""
    if index.category_id != category_id:
        raise ValueError(
            f"index is for {index.category_id!r}, not {category_id!r}"
        )
    warnings: list[str] = []
    t_c = store.text_prior(category_id)

    resolved = resolve_part_or_global(category_id, store)
    part_candidates: list[Candidate] = []
    if resolved.kind == "part":
        part_candidates = retrieve_part(index, resolved.embedding, t_c, cfg)

    views, view_warning = select_views(category_id, store, taxonomy)
    if view_warning:
        warnings.append(view_warning)
    source_view = views[0]
    g = store.view_embedding(source_view)
    residual_candidates, collapsed = retrieve_concept_residual(
        index, g, t_c, subspaces, cfg
    )

    pool = build_pool(part_candidates, residual_candidates, cfg.pool_k)
    return CategoryRetrieval(
        category_id=category_id,
        pool=pool,
        used_part_evidence=resolved.kind == "part",
        residual_collapsed=collapsed,
        source_view=source_view,
        warnings=warnings,
    )
