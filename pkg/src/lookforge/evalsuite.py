"""Seeded ablation runs over planted interference scenarios.

Every scenario hides one recoverable target asset behind cross-category
interference baked into the global embedding. The suite then measures
what each retrieval stage contributes by switching it off:

    none         full concept-residual branch (suppression + text fusion)
    suppression  other-category subspaces withheld from the residual query
    router       naive single-category routing instead of recall-first
                 expansion; scenarios routed to the wrong category count
                 as outright misses
    scaffold     no global embedding at all, text prior only

Part evidence is withheld in every arm on purpose: the residual branch
is the thing under measurement, and a clean part crop would paper over
its failures.
"""
from __future__ import annotations

from dataclasses import dataclass

from .assembly import AvatarLook, GenerationBudget, refine
from .catalog import Taxonomy
from .index import CategoryIndex
from .judge import PassThroughJudge
from .retrieval import Candidate, RetrievalConfig, build_pool, retrieve_concept_residual
from .router import Concept, PromptSpec, route, route_naive
from .synth import (
    DEFAULT_LAMBDA,
    CategorySpec,
    SynthSpec,
    generate_interference_scenario,
)

ABLATIONS = ("none", "suppression", "router", "scaffold")

EVAL_CATEGORIES = ("arms", "hat", "legs")
EVAL_CONCEPT = "garment"
EVAL_D = 64
EVAL_RANK = 4
EVAL_ASSETS_PER_CATEGORY = 48


@dataclass(frozen=True)
class EvalReport:
    ablation: str
    n_scenarios: int
    top1_accuracy: float
    pool_recall: float
    routed_coverage: float
    mean_iterations: float

    def to_dict(self) -> dict:
        return {
            "ablation": self.ablation,
            "n_scenarios": self.n_scenarios,
            "top1_accuracy": self.top1_accuracy,
            "pool_recall": self.pool_recall,
            "routed_coverage": self.routed_coverage,
            "mean_iterations": self.mean_iterations,
        }


class _CountingJudge:
    """Pass-through judge that counts verify calls."""

    def __init__(self) -> None:
        self._inner = PassThroughJudge()
        self.verify_calls = 0

    def verify(self, look_doc: dict) -> dict:
        self.verify_calls += 1
        return self._inner.verify(look_doc)

    def __getattr__(self, name):
        return getattr(self._inner, name)


def _eval_spec(seed: int, noise_sigma: float) -> SynthSpec:
    return SynthSpec(
        d=EVAL_D,
        categories=tuple(
            CategorySpec(c, EVAL_RANK, EVAL_ASSETS_PER_CATEGORY)
            for c in EVAL_CATEGORIES
        ),
        noise_sigma=noise_sigma,
        seed=seed,
    )


def _routing_fixture(target: str, interference: str) -> tuple[Taxonomy, PromptSpec]:
    """Taxonomy and prompt where one concept is ambiguous between the
    scenario's two categories. Recall-first routing targets both; a naive
    router has to guess."""
    pair = tuple(sorted((target, interference)))
    taxonomy = Taxonomy(
        categories=EVAL_CATEGORIES,
        concept_map={EVAL_CONCEPT: pair},
    )
    prompt = PromptSpec(
        text=f"a figure wearing a {EVAL_CONCEPT}",
        concepts=(Concept(EVAL_CONCEPT, ()),),
    )
    return taxonomy, prompt


def run_interference_suite(
    n_scenarios: int,
    base_seed: int = 0,
    ablate: str = "none",
    *,
    lam: float = DEFAULT_LAMBDA,
    cfg: RetrievalConfig | None = None,
) -> EvalReport:
    """Fresh scenario per index i (seed = base_seed + i), aggregated metrics.

    top1_accuracy and pool_recall are end-to-end: a scenario whose target
    category never gets routed scores zero on both. mean_iterations
    averages verify rounds over the looks that were actually assembled.
    """
    if ablate not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablate!r}; pick from {ABLATIONS}")
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    cfg = cfg or RetrievalConfig()

    top1 = 0
    recall = 0
    routed = 0
    iterations: list[int] = []
    for i in range(n_scenarios):
        scn = generate_interference_scenario(
            _eval_spec(base_seed + i, noise_sigma=0.3), lam=lam, cfg=cfg
        )
        truth = scn.truth
        taxonomy, prompt = _routing_fixture(
            truth.target_category, truth.interference_category
        )
        plan = (
            route_naive(prompt, taxonomy)
            if ablate == "router"
            else route(prompt, taxonomy)
        )
        if truth.target_category not in plan.target_categories:
            continue
        routed += 1

        ids, rows = scn.catalog.embedding_matrix(truth.target_category)
        index = CategoryIndex(truth.target_category, ids, rows)
        if ablate == "scaffold":
            hits = index.search(truth.t_c, k=cfg.branch_k)
            residual = [
                Candidate(h.asset_id, h.score, "concept_residual") for h in hits
            ]
        else:
            subspaces = {} if ablate == "suppression" else scn.subspaces
            residual, _ = retrieve_concept_residual(
                index, truth.g, truth.t_c, subspaces, cfg
            )
        pool = build_pool([], residual, cfg.pool_k)
        if not pool:
            continue
        if pool[0].asset_id == truth.target_asset_id:
            top1 += 1
        if any(c.asset_id == truth.target_asset_id for c in pool):
            recall += 1

        judge = _CountingJudge()
        look = AvatarLook(
            look_id=f"eval-{i:03d}",
            selections={truth.target_category: pool[0].asset_id},
        )
        refine(look, judge, GenerationBudget(), {truth.target_category: pool})
        iterations.append(judge.verify_calls)

    return EvalReport(
        ablation=ablate,
        n_scenarios=n_scenarios,
        top1_accuracy=top1 / n_scenarios,
        pool_recall=recall / n_scenarios,
        routed_coverage=routed / n_scenarios,
        mean_iterations=sum(iterations) / len(iterations) if iterations else 0.0,
    )


def markdown_table(reports: list[EvalReport]) -> str:
    header = (
        "| ablation | scenarios | top-1 accuracy | pool recall "
        "| routed coverage | mean iterations |\n"
        "|---|---|---|---|---|---|\n"
    )
    rows = [
        f"| {r.ablation} | {r.n_scenarios} | {r.top1_accuracy:.3f} "
        f"| {r.pool_recall:.3f} | {r.routed_coverage:.3f} "
        f"| {r.mean_iterations:.2f} |"
        for r in reports
    ]
    return header + "\n".join(rows) + "\n"
