"""Judge-gated assembly: from candidate pools to one verified look.

The stages, in pipeline order:

1. :func:`filter_pools` shows each category's top candidates to the judge
   and keeps the survivors.
2. :func:`assemble_initial` asks the judge for an outfit selection and
   repairs it into a consistent draft look.
3. :func:`refine` runs the verify/edit loop until the judge passes the
   look or the iteration budget runs out.
4. :func:`generate_candidates` produces a diversified slate under
   per-asset and per-bundle caps with body-bundle rotation.
5. :func:`tournament` reduces the slate to a single winner with batched
   comparisons.

Looks never leave this module in an inconsistent state: every mutation is
checked against the pool, exclusion, and core-category invariants.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import BudgetInfeasibleError, MissingCoreCategoryError
from .retrieval import Candidate

logger = logging.getLogger(__name__)

EDIT_ACTIONS = ("replace", "add", "remove")


@dataclass(frozen=True)
class GenerationBudget:
    n_candidates: int = 6
    per_asset_cap: int = 2
    per_bundle_cap: int = 2
    bundle_rotation: int = 3
    max_refine_iters: int = 3
    batch_size: int = 4

    def __post_init__(self) -> None:
        for name in (
            "n_candidates",
            "per_asset_cap",
            "per_bundle_cap",
            "bundle_rotation",
            "max_refine_iters",
            "batch_size",
        ):
            v = getattr(self, name)
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")


@dataclass(frozen=True)
class Edit:
    action: str
    category_id: str
    asset_id: str | None = None

    def __post_init__(self) -> None:
        if self.action not in EDIT_ACTIONS:
            raise ValueError(f"unknown edit action {self.action!r}")
        if self.action in ("replace", "add") and not self.asset_id:
            raise ValueError(f"{self.action} edit requires an asset_id")

    @classmethod
    def from_dict(cls, doc: dict) -> Edit:
        return cls(
            action=str(doc.get("action", "")),
            category_id=str(doc.get("category_id", "")),
            asset_id=doc.get("asset_id"),
        )


@dataclass(frozen=True)
class Issue:
    description: str
    category_id: str | None = None


@dataclass(frozen=True)
class VerificationReport:
    verdict: str
    issues: tuple[Issue, ...] = ()
    edits: tuple[Edit, ...] = ()

    def __post_init__(self) -> None:
        if self.verdict not in ("pass", "fail"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "fail" and not self.issues and not self.edits:
            raise ValueError("fail report must carry issues or edits")

    @classmethod
    def from_dict(cls, doc: dict) -> VerificationReport:
        return cls(
            verdict=str(doc.get("verdict", "")),
            issues=tuple(
                Issue(
                    description=str(i.get("description", i) if isinstance(i, dict) else i),
                    category_id=i.get("category_id") if isinstance(i, dict) else None,
                )
                for i in doc.get("issues", [])
            ),
            edits=tuple(Edit.from_dict(e) for e in doc.get("edits", [])),
        )


@dataclass
class AvatarLook:
    look_id: str
    selections: dict[str, str] = field(default_factory=dict)
    body_bundle_id: str | None = None
    status: str = "draft"
    history: list[str] = field(default_factory=list)
    last_report: VerificationReport | None = None

    def to_doc(self) -> dict:
        """Stable document form for judge payloads and pipeline output."""
        return {
            "look_id": self.look_id,
            "selections": dict(sorted(self.selections.items())),
            "body_bundle_id": self.body_bundle_id,
            "status": self.status,
            "history": list(self.history),
        }


def validate_look(
    look: AvatarLook,
    pools: dict[str, list[Candidate]],
    exclusion_groups: tuple[tuple[str, ...], ...],
    required_core: tuple[str, ...],
) -> list[str]:
    """Invariant check; returns violations (empty when consistent)."""
    problems: list[str] = []
    for cat, aid in look.selections.items():
        pool_ids = {c.asset_id for c in pools.get(cat, [])}
        if aid not in pool_ids:
            problems.append(f"selection {aid!r} not in pool for {cat!r}")
    for group in exclusion_groups:
        chosen = [c for c in group if c in look.selections]
        if len(chosen) > 1:
            problems.append(f"exclusion group {list(group)} violated by {chosen}")
    for cat in required_core:
        if cat not in look.selections:
            problems.append(f"required core category {cat!r} missing")
    return problems


# --- stage 1: judge gating -----------------------------------------------------


def filter_pools(
    pools: dict[str, list[Candidate]],
    judge,
    gate_k: int,
) -> tuple[dict[str, list[Candidate]], list[str]]:
    """Keep only judge-approved candidates from each pool's top ``gate_k``.

    Pool order is preserved. Judge answers naming assets outside the shown
    grid are dropped with a warning; an empty answer leaves the category
    at risk (flagged, not fatal). Judge transport errors propagate.
    """
    filtered: dict[str, list[Candidate]] = {}
    warnings: list[str] = []
    for cat in sorted(pools):
        gated = pools[cat][:gate_k]
        if not gated:
            filtered[cat] = []
            continue
        keep = judge.filter_grid(cat, gated)
        shown = {c.asset_id for c in gated}
        foreign = [a for a in keep if a not in shown]
        if foreign:
            warnings.append(
                f"judge kept unknown assets {foreign} for {cat!r}; dropped"
            )
        keep_set = set(keep) & shown
        filtered[cat] = [c for c in gated if c.asset_id in keep_set]
        if not filtered[cat]:
            warnings.append(f"judge filtered out every candidate for {cat!r}")
    for w in warnings:
        logger.warning("%s", w)
    return filtered, warnings


# --- stage 2: initial assembly --------------------------------------------------


def _conflicts(cat: str, chosen: dict[str, str],
               exclusion_groups: tuple[tuple[str, ...], ...]) -> str | None:
    for group in exclusion_groups:
        if cat in group:
            for other in group:
                if other != cat and other in chosen:
                    return other
    return None


def assemble_initial(
    pools: dict[str, list[Candidate]],
    judge,
    *,
    required_core: tuple[str, ...],
    exclusion_groups: tuple[tuple[str, ...], ...] = (),
    bundles: dict[str, str] | None = None,
    body_category: str | None = None,
    look_id: str = "look-000",
) -> AvatarLook:
    """Draft look from the judge's outfit selection.

    Judge picks outside the pool are replaced by the pool's top candidate.
    When two picks land in one exclusion group, the non-core (or later)
    category is dropped. Required-core categories the judge omitted are
    filled from the top of their pools; an empty core pool is fatal.
    """
    bundles = bundles or {}
    pool_ids = {cat: [c.asset_id for c in pool] for cat, pool in pools.items()}
    picks = judge.select_outfit(pool_ids, {"required_core": list(required_core)})

    look = AvatarLook(look_id=look_id)
    for cat in sorted(picks):
        aid = picks[cat]
        if cat not in pools:
            look.history.append(f"dropped pick for unknown category {cat}")
            continue
        if aid not in pool_ids[cat]:
            if not pools[cat]:
                look.history.append(f"no candidates for {cat}; pick dropped")
                continue
            top = pools[cat][0].asset_id
            look.history.append(f"replaced off-pool pick {aid} with {top} for {cat}")
            aid = top
        conflict = _conflicts(cat, look.selections, exclusion_groups)
        if conflict is not None:
            # Core categories win conflicts; otherwise the earlier pick stays.
            if cat in required_core and conflict not in required_core:
                del look.selections[conflict]
                look.history.append(
                    f"dropped {conflict} (excluded against core {cat})"
                )
            else:
                look.history.append(f"dropped {cat} (excluded against {conflict})")
                continue
        look.selections[cat] = aid

    for cat in required_core:
        if cat in look.selections:
            continue
        pool = pools.get(cat, [])
        if not pool:
            raise MissingCoreCategoryError(
                f"required core category {cat!r} has no usable candidates"
            )
        conflict = _conflicts(cat, look.selections, exclusion_groups)
        if conflict is not None:
            if conflict in required_core:
                look.history.append(
                    f"cannot fill {cat}: excluded against core {conflict}"
                )
                continue
            del look.selections[conflict]
            look.history.append(f"dropped {conflict} (excluded against core {cat})")
        look.selections[cat] = pool[0].asset_id
        look.history.append(f"filled core category {cat} with {pool[0].asset_id}")

    if body_category and body_category in look.selections:
        look.body_bundle_id = bundles.get(look.selections[body_category])
    return look


# --- stage 3: refinement ---------------------------------------------------------


def _apply_edit(
    look: AvatarLook,
    edit: Edit,
    pools: dict[str, list[Candidate]],
    exclusion_groups: tuple[tuple[str, ...], ...],
    required_core: tuple[str, ...],
) -> bool:
    """Apply one judge edit if it keeps the look consistent."""
    cat = edit.category_id
    pool_ids = {c.asset_id for c in pools.get(cat, [])}

    if edit.action == "remove":
        if cat not in look.selections:
            look.history.append(f"skipped remove of unselected {cat}")
            return False
        if cat in required_core:
            look.history.append(f"skipped remove of core category {cat}")
            return False
        removed = look.selections.pop(cat)
        look.history.append(f"remove {removed}")
        return True

    if edit.asset_id not in pool_ids:
        look.history.append(
            f"skipped {edit.action} of off-pool asset {edit.asset_id} for {cat}"
        )
        return False

    if edit.action == "add":
        if cat in look.selections:
            look.history.append(f"skipped add for already-selected {cat}")
            return False
        conflict = _conflicts(cat, look.selections, exclusion_groups)
        if conflict is not None:
            look.history.append(f"skipped add of {cat} (excluded against {conflict})")
            return False
        look.selections[cat] = edit.asset_id
        look.history.append(f"add {edit.asset_id}")
        return True

    # replace
    if cat not in look.selections:
        look.history.append(f"skipped replace for unselected {cat}")
        return False
    look.selections[cat] = edit.asset_id
    look.history.append(f"replace {edit.asset_id}")
    return True


def refine(
    look: AvatarLook,
    judge,
    budget: GenerationBudget,
    pools: dict[str, list[Candidate]],
    *,
    exclusion_groups: tuple[tuple[str, ...], ...] = (),
    required_core: tuple[str, ...] = (),
) -> AvatarLook:
    """Verify/edit loop: at most ``max_refine_iters`` judge verifications.

    Each fail report's edits apply in order, each one re-checked against
    the look invariants (and rolled back if it breaks them). A look that
    never passes stays a draft carrying its final report.
    """
    report: VerificationReport | None = None
    for _ in range(budget.max_refine_iters):
        report = VerificationReport.from_dict(judge.verify(look.to_doc()))
        if report.verdict == "pass":
            look.status = "verified"
            look.last_report = report
            return look
        for edit in report.edits:
            before = dict(look.selections)
            if not _apply_edit(look, edit, pools, exclusion_groups, required_core):
                continue
            problems = validate_look(look, pools, exclusion_groups, required_core)
            if problems:
                look.selections = before
                look.history.append(
                    f"rolled back {edit.action} on {edit.category_id}: {problems[0]}"
                )
    look.status = "draft"
    look.last_report = report
    return look


# --- stage 4: candidate generation ----------------------------------------------


def rank_bundles(body_pool: list[Candidate], bundles: dict[str, str]) -> list[str]:
    """Distinct bundle ids in order of first appearance in the body pool."""
    seen: list[str] = []
    for c in body_pool:
        b = bundles.get(c.asset_id)
        if b is not None and b not in seen:
            seen.append(b)
    return seen


def generate_candidates(
    pools: dict[str, list[Candidate]],
    judge,
    budget: GenerationBudget,
    *,
    required_core: tuple[str, ...],
    exclusion_groups: tuple[tuple[str, ...], ...] = (),
    bundles: dict[str, str] | None = None,
    body_category: str | None = None,
    base_look: AvatarLook | None = None,
    look_id_prefix: str = "look",
) -> list[AvatarLook]:
    """Diversified slate of refined looks under usage caps.

    Body bundles rotate through the top ``bundle_rotation`` ranked bundles
    so the slate spans body types. No asset appears in more than
    ``per_asset_cap`` looks and no bundle in more than ``per_bundle_cap``;
    capped choices fall through to the next-ranked unblocked candidate.
    A required-core category with nothing left to pick raises
    :class:`BudgetInfeasibleError`; other categories are omitted. Usage
    counters reflect each look's final, post-refinement selections.
    """
    bundles = bundles or {}
    asset_use: dict[str, int] = {}
    bundle_use: dict[str, int] = {}

    rotation: list[str] = []
    if body_category and body_category in pools:
        rotation = rank_bundles(pools[body_category], bundles)[: budget.bundle_rotation]

    def asset_blocked(aid: str) -> bool:
        return asset_use.get(aid, 0) >= budget.per_asset_cap

    def bundle_blocked(aid: str) -> bool:
        b = bundles.get(aid)
        return b is not None and bundle_use.get(b, 0) >= budget.per_bundle_cap

    def pick_body(target_bundle: str | None) -> str | None:
        pool = pools.get(body_category, [])
        if target_bundle is not None:
            for c in pool:
                if (
                    bundles.get(c.asset_id) == target_bundle
                    and not asset_blocked(c.asset_id)
                    and not bundle_blocked(c.asset_id)
                ):
                    return c.asset_id
        for c in pool:  # fallback: any unblocked body asset
            if not asset_blocked(c.asset_id) and not bundle_blocked(c.asset_id):
                return c.asset_id
        return None

    def pick_regular(cat: str, look: AvatarLook) -> str | None:
        if _conflicts(cat, look.selections, exclusion_groups) is not None:
            return None
        pool = pools.get(cat, [])
        preferred = base_look.selections.get(cat) if base_look else None
        ordered = pool
        if preferred is not None and any(c.asset_id == preferred for c in pool):
            ordered = [c for c in pool if c.asset_id == preferred] + [
                c for c in pool if c.asset_id != preferred
            ]
        for c in ordered:
            if not asset_blocked(c.asset_id):
                return c.asset_id
        return None

    looks: list[AvatarLook] = []
    categories = sorted(pools)
    core_first = [c for c in categories if c in required_core] + [
        c for c in categories if c not in required_core
    ]
    for i in range(budget.n_candidates):
        look = AvatarLook(look_id=f"{look_id_prefix}-{i:03d}")
        target_bundle = rotation[i % len(rotation)] if rotation else None
        for cat in core_first:
            if not pools.get(cat):
                if cat in required_core:
                    raise BudgetInfeasibleError(
                        f"required core category {cat!r} has no candidates"
                    )
                continue
            if cat == body_category:
                aid = pick_body(target_bundle)
            else:
                aid = pick_regular(cat, look)
            if aid is None:
                if cat in required_core:
                    raise BudgetInfeasibleError(
                        f"caps leave no usable candidate for core category {cat!r} "
                        f"in look {i}"
                    )
                look.history.append(f"omitted {cat}: caps or exclusions")
                continue
            look.selections[cat] = aid
        if body_category and body_category in look.selections:
            look.body_bundle_id = bundles.get(look.selections[body_category])

        look = refine(
            look,
            judge,
            budget,
            pools,
            exclusion_groups=exclusion_groups,
            required_core=required_core,
        )
        for aid in look.selections.values():
            asset_use[aid] = asset_use.get(aid, 0) + 1
            b = bundles.get(aid)
            if b is not None:
                bundle_use[b] = bundle_use.get(b, 0) + 1
        looks.append(look)
    return looks


# --- stage 5: tournament ---------------------------------------------------------


def tournament(looks: list[AvatarLook], judge, batch_size: int) -> AvatarLook:
    """Reduce looks to one winner via batched judge comparisons.

    Looks are compared in insertion-order batches; each batch's winner
    advances. A batch of one advances without spending a judge call. An
    out-of-range winner index from the judge falls back to the batch's
    first look with a warning.
    """
    if not looks:
        raise ValueError("tournament needs at least one look")
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    current = list(looks)
    while len(current) > 1:
        survivors: list[AvatarLook] = []
        for start in range(0, len(current), batch_size):
            batch = current[start : start + batch_size]
            if len(batch) == 1:
                survivors.append(batch[0])
                continue
            winner = judge.compare_batch([lk.to_doc() for lk in batch])
            if not 0 <= winner < len(batch):
                logger.warning(
                    "judge returned winner %r for a batch of %d; using first",
                    winner,
                    len(batch),
                )
                winner = 0
            survivors.append(batch[winner])
        current = survivors
    return current[0]
