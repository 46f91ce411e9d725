"""Prompt routing: concepts to categories, exclusions, query templates.

Routing is recall-first. Every category a concept could denote enters the
target set, and the exclusion step then removes contradictions using
modifier evidence, so "a hoodie with a zip" reaches the jacket index
instead of being guessed into sweaters up front.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Taxonomy
from .errors import AdvisorUnavailableError

logger = logging.getLogger(__name__)

PROMPT_SCHEMA_VERSION = 1

# Words in the prompt fallback query when no concept covers a category.
FALLBACK_QUERY_WORDS = 12

# Modifier keyword support per category. A category "supports" a modifier
# when the modifier (or any of its hyphen/space tokens) appears in its set;
# exclusion conflicts keep the category with the most supported modifiers.
DEFAULT_MODIFIER_KEYWORDS: dict[str, frozenset[str]] = {
    "jacket": frozenset(
        {"zip", "zip-up", "zipper", "zippered", "coat", "windbreaker",
         "bomber", "shell", "outer", "parka", "rain"}
    ),
    "sweater": frozenset(
        {"knit", "knitted", "pullover", "wool", "woolen", "crewneck",
         "cable", "cozy", "chunky"}
    ),
    "hat": frozenset({"brim", "brimmed", "cap", "beanie", "straw", "visor"}),
    "pants": frozenset(
        {"cargo", "denim", "jeans", "trouser", "tactical", "chino"}
    ),
    "shoes": frozenset({"laced", "sneaker", "boot", "heel", "sole"}),
}


@dataclass(frozen=True)
class Concept:
    """One noun phrase from the prompt plus its attached modifiers."""

    noun: str
    modifiers: tuple[str, ...] = ()


@dataclass(frozen=True)
class PromptSpec:
    """Structured prompt: free text plus pre-parsed concepts."""

    text: str
    concepts: tuple[Concept, ...] = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": PROMPT_SCHEMA_VERSION,
            "text": self.text,
            "concepts": [
                {"noun": c.noun, "modifiers": list(c.modifiers)} for c in self.concepts
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PromptSpec:
        return cls(
            text=str(doc.get("text", "")),
            concepts=tuple(
                Concept(noun=str(c["noun"]), modifiers=tuple(c.get("modifiers", [])))
                for c in doc.get("concepts", [])
            ),
        )


def load_prompt(path: str | Path) -> PromptSpec:
    with open(path, encoding="utf-8") as fh:
        return PromptSpec.from_dict(json.load(fh))


def save_prompt(spec: PromptSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class ExclusionResolution:
    group: tuple[str, ...]
    kept: str
    dropped: tuple[str, ...]
    reason: str


@dataclass
class RoutingPlan:
    """Where to search and with what query text.

    ``provenance`` explains why each category is targeted:
    ``concept-expanded`` (a prompt concept maps there), ``required-core``
    (the taxonomy demands it), or ``advisor-added``.
    """

    target_categories: tuple[str, ...]
    queries: dict[str, str]
    provenance: dict[str, str]
    resolved_exclusions: list[ExclusionResolution] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target_categories": list(self.target_categories),
            "queries": dict(sorted(self.queries.items())),
            "provenance": dict(sorted(self.provenance.items())),
            "resolved_exclusions": [
                {
                    "group": list(r.group),
                    "kept": r.kept,
                    "dropped": list(r.dropped),
                    "reason": r.reason,
                }
                for r in self.resolved_exclusions
            ],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> RoutingPlan:
        return cls(
            target_categories=tuple(doc.get("target_categories", [])),
            queries={str(k): str(v) for k, v in doc.get("queries", {}).items()},
            provenance={str(k): str(v) for k, v in doc.get("provenance", {}).items()},
            resolved_exclusions=[
                ExclusionResolution(
                    group=tuple(r.get("group", [])),
                    kept=str(r.get("kept", "")),
                    dropped=tuple(r.get("dropped", [])),
                    reason=str(r.get("reason", "")),
                )
                for r in doc.get("resolved_exclusions", [])
            ],
            warnings=[str(w) for w in doc.get("warnings", [])],
        )


def match_concept_key(noun: str, concept_map: dict[str, tuple[str, ...]]) -> str | None:
    """Find the concept-map key matching a noun phrase.

    Case-insensitive whole-word containment; the longest key (most words,
    then most characters, then lexicographic) wins so "cargo pants" beats
    "pants" when both are mapped.
    """
    words = noun.lower().split()
    best: str | None = None
    best_rank: tuple[int, int, str] | None = None
    for key in concept_map:
        kw = key.lower().split()
        if not kw:
            continue
        hit = any(words[i : i + len(kw)] == kw for i in range(len(words) - len(kw) + 1))
        if not hit:
            continue
        rank = (len(kw), len(key))
        if best is None or rank > best_rank[:2] or (rank == best_rank[:2] and key < best):
            best, best_rank = key, (len(kw), len(key), key)
    return best


def modifier_support(category_id: str, modifiers: tuple[str, ...],
                     keyword_table: dict[str, frozenset[str]]) -> int:
    """Count how many modifiers the category's keyword set supports."""
    table = keyword_table.get(category_id, frozenset())
    count = 0
    for m in modifiers:
        ml = m.lower()
        tokens = ml.replace("-", " ").split()
        if ml in table or any(t in table for t in tokens):
            count += 1
    return count


def _fallback_query(text: str, category_id: str) -> str:
    head = " ".join(text.split()[:FALLBACK_QUERY_WORDS])
    return f"{head}, {category_id}" if head else category_id


def build_query(concept: Concept, category_id: str) -> str:
    """Query template: noun, modifiers in order, then the category name."""
    return ", ".join([concept.noun, *concept.modifiers, category_id])


def route(
    spec: PromptSpec,
    taxonomy: Taxonomy,
    *,
    keyword_table: dict[str, frozenset[str]] | None = None,
    advisor=None,
) -> RoutingPlan:
    """Produce the routing plan for one prompt.

    Expansion adds every category each concept may denote; required-core
    categories are always present; exclusion groups are then resolved by
    modifier support (ties to the lower category id). An advisor, when
    given, may add categories or rewrite queries subject to the same
    taxonomy and exclusion constraints; advisor failure degrades to a
    warning.
    """
    table = keyword_table if keyword_table is not None else DEFAULT_MODIFIER_KEYWORDS
    warnings: list[str] = []
    provenance: dict[str, str] = {}
    # category -> concepts that brought it in, in prompt order
    sources: dict[str, list[Concept]] = {}

    for concept in spec.concepts:
        key = match_concept_key(concept.noun, taxonomy.concept_map)
        if key is None:
            warnings.append(f"concept {concept.noun!r} matched no taxonomy entry")
            continue
        for cid in taxonomy.concept_map[key]:
            provenance.setdefault(cid, "concept-expanded")
            sources.setdefault(cid, []).append(concept)

    for cid in taxonomy.required_core:
        provenance.setdefault(cid, "required-core")

    targets = set(provenance)
    resolutions: list[ExclusionResolution] = []
    for group in taxonomy.exclusion_groups:
        present = [c for c in group if c in targets]
        if len(present) < 2:
            continue
        protected = [c for c in present if c in taxonomy.required_core]
        if len(protected) >= 2:
            warnings.append(
                f"exclusion group {list(group)} keeps conflicting required-core "
                "categories; taxonomy needs review"
            )
            continue
        if protected:
            kept = protected[0]
            reason = "required-core category retained"
        else:
            def support_of(cid: str) -> int:
                mods: list[str] = []
                for concept in sources.get(cid, []):
                    mods.extend(concept.modifiers)
                return modifier_support(cid, tuple(mods), table)

            scores = {c: support_of(c) for c in present}
            best = max(scores.values())
            kept = min(c for c in present if scores[c] == best)
            reason = f"modifier support {scores[kept]}"
            if sum(1 for c in present if scores[c] == best) > 1:
                reason += ", tie broken by category id"
        dropped = tuple(c for c in present if c != kept)
        for c in dropped:
            targets.discard(c)
        resolutions.append(
            ExclusionResolution(group=tuple(group), kept=kept, dropped=dropped,
                                reason=reason)
        )

    queries: dict[str, str] = {}
    for cid in sorted(targets):
        concepts = sources.get(cid, [])
        if concepts:
            queries[cid] = build_query(concepts[0], cid)
        else:
            queries[cid] = _fallback_query(spec.text, cid)

    plan = RoutingPlan(
        target_categories=tuple(sorted(targets)),
        queries=queries,
        provenance={c: provenance[c] for c in sorted(targets)},
        resolved_exclusions=resolutions,
        warnings=warnings,
    )

    if advisor is not None:
        _apply_advisor(plan, spec, taxonomy, advisor)
    return plan


def _violates_exclusion(cid: str, targets: set[str], taxonomy: Taxonomy) -> bool:
    for group in taxonomy.exclusion_groups:
        if cid in group and any(t in group and t != cid for t in targets):
            return True
    return False


def _apply_advisor(plan: RoutingPlan, spec: PromptSpec, taxonomy: Taxonomy, advisor) -> None:
    """Merge advisor output into the plan, rejecting unsound suggestions."""
    try:
        suggestion = advisor.advise(
            {
                "text": spec.text,
                "target_categories": list(plan.target_categories),
                "queries": dict(plan.queries),
            }
        )
    except AdvisorUnavailableError as exc:
        plan.warnings.append(f"advisor unavailable: {exc}")
        logger.warning("advisor unavailable: %s", exc)
        return

    targets = set(plan.target_categories)
    for entry in suggestion.get("add_categories", []):
        cid = entry.get("category_id") if isinstance(entry, dict) else entry
        if cid in targets:
            continue
        if cid not in taxonomy.categories:
            plan.warnings.append(f"advisor suggested unknown category {cid!r}")
            continue
        if _violates_exclusion(cid, targets, taxonomy):
            plan.warnings.append(
                f"advisor suggestion {cid!r} rejected: exclusion conflict"
            )
            continue
        targets.add(cid)
        plan.provenance[cid] = "advisor-added"
        query = entry.get("query") if isinstance(entry, dict) else None
        plan.queries[cid] = query or _fallback_query(spec.text, cid)

    for cid, query in suggestion.get("query_rewrites", {}).items():
        if cid not in targets:
            plan.warnings.append(f"advisor rewrite for untargeted category {cid!r}")
            continue
        plan.queries[cid] = str(query)

    plan.target_categories = tuple(sorted(targets))
    plan.provenance = {c: plan.provenance[c] for c in plan.target_categories}
    plan.queries = {c: plan.queries[c] for c in plan.target_categories}


def route_naive(spec: PromptSpec, taxonomy: Taxonomy) -> RoutingPlan:
    """Ablation baseline: one category per concept, no expansion.

    Each concept routes only to the lowest category id it maps to, so
    ambiguous concepts cover roughly half their true categories. Required
    core categories still enter; exclusions are not resolved.
    """
    provenance: dict[str, str] = {}
    sources: dict[str, list[Concept]] = {}
    for concept in spec.concepts:
        key = match_concept_key(concept.noun, taxonomy.concept_map)
        if key is None:
            continue
        cid = min(taxonomy.concept_map[key])
        provenance.setdefault(cid, "concept-expanded")
        sources.setdefault(cid, []).append(concept)
    for cid in taxonomy.required_core:
        provenance.setdefault(cid, "required-core")
    queries = {}
    for cid in sorted(provenance):
        concepts = sources.get(cid, [])
        queries[cid] = (
            build_query(concepts[0], cid) if concepts else _fallback_query(spec.text, cid)
        )
    return RoutingPlan(
        target_categories=tuple(sorted(provenance)),
        queries=queries,
        provenance=dict(sorted(provenance.items())),
    )
