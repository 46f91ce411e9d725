"""End-to-end orchestration: prompt to verified winning look.

Order of operations: route the prompt, index the routed categories,
estimate suppression subspaces from the whole catalog, retrieve pooled
candidates per category, gate them through the judge, assemble and refine
a slate, and crown a tournament winner. Each stage is importable on its
own; this module only wires them together and collects warnings.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .assembly import (
    AvatarLook,
    GenerationBudget,
    assemble_initial,
    filter_pools,
    generate_candidates,
    tournament,
)
from .catalog import AssetCatalog, Taxonomy
from .evidence import EvidenceStore
from .index import build_indices
from .retrieval import Candidate, CategoryRetrieval, RetrievalConfig, retrieve_category
from .router import PromptSpec, RoutingPlan, route
from .synth import estimate_subspaces

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    plan: RoutingPlan
    retrievals: dict[str, CategoryRetrieval]
    filtered_pools: dict[str, list[Candidate]]
    base_look: AvatarLook
    candidates: list[AvatarLook]
    winner: AvatarLook
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class SubspaceParams:
    rank: int | None = None
    variance_threshold: float = 0.90
    max_rank: int = 16
    center: bool = False


def bundle_map(catalog: AssetCatalog) -> dict[str, str]:
    return {
        a.asset_id: a.bundle_id for a in catalog.iter_assets() if a.bundle_id is not None
    }


def run_retrieval(
    plan: RoutingPlan,
    catalog: AssetCatalog,
    store: EvidenceStore,
    taxonomy: Taxonomy,
    cfg: RetrievalConfig,
    subspace_params: SubspaceParams = SubspaceParams(),
    indices: dict | None = None,
) -> dict[str, CategoryRetrieval]:
    """Pooled retrieval for every routed category.

    Suppression subspaces are estimated over the whole catalog, not just
    the routed categories; interference comes from whatever else is in the
    embedding, routed or not. Pass ``indices`` (for example, loaded from
    snapshots) to skip the in-memory index build; it must cover every
    routed category.
    """
    if indices is None:
        indices = build_indices(catalog, list(plan.target_categories))
    subspaces = estimate_subspaces(
        catalog,
        rank=subspace_params.rank,
        variance_threshold=subspace_params.variance_threshold,
        max_rank=subspace_params.max_rank,
        center=subspace_params.center,
    )
    out: dict[str, CategoryRetrieval] = {}
    for cat in plan.target_categories:
        out[cat] = retrieve_category(
            cat, indices[cat], store, taxonomy, subspaces, cfg
        )
    return out


def run_assembly(
    pools: dict[str, list[Candidate]],
    judge,
    budget: GenerationBudget,
    *,
    taxonomy: Taxonomy,
    bundles: dict[str, str],
    body_category: str | None,
    gate_k: int,
) -> tuple[dict[str, list[Candidate]], AvatarLook, list[AvatarLook], AvatarLook, list[str]]:
    filtered, warnings = filter_pools(pools, judge, gate_k)
    base = assemble_initial(
        filtered,
        judge,
        required_core=taxonomy.required_core,
        exclusion_groups=taxonomy.exclusion_groups,
        bundles=bundles,
        body_category=body_category,
        look_id="look-base",
    )
    candidates = generate_candidates(
        filtered,
        judge,
        budget,
        required_core=taxonomy.required_core,
        exclusion_groups=taxonomy.exclusion_groups,
        bundles=bundles,
        body_category=body_category,
        base_look=base,
    )
    winner = tournament(candidates, judge, budget.batch_size)
    return filtered, base, candidates, winner, warnings


def run_pipeline(
    catalog: AssetCatalog,
    taxonomy: Taxonomy,
    store: EvidenceStore,
    prompt: PromptSpec,
    judge,
    *,
    advisor=None,
    retrieval_cfg: RetrievalConfig = RetrievalConfig(),
    budget: GenerationBudget = GenerationBudget(),
    subspace_params: SubspaceParams = SubspaceParams(),
    body_category: str | None = None,
) -> PipelineResult:
    plan = route(prompt, taxonomy, advisor=advisor)
    retrievals = run_retrieval(
        plan, catalog, store, taxonomy, retrieval_cfg, subspace_params
    )
    filtered, base, candidates, winner, warnings = run_assembly(
        {cat: r.pool for cat, r in retrievals.items()},
        judge,
        budget,
        taxonomy=taxonomy,
        bundles=bundle_map(catalog),
        body_category=body_category,
        gate_k=retrieval_cfg.gate_k,
    )
    all_warnings = list(plan.warnings)
    for r in retrievals.values():
        all_warnings.extend(r.warnings)
    all_warnings.extend(warnings)
    return PipelineResult(
        plan=plan,
        retrievals=retrievals,
        filtered_pools=filtered,
        base_look=base,
        candidates=candidates,
        winner=winner,
        warnings=all_warnings,
    )
