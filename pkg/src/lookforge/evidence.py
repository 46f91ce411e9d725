"""Visual evidence and text priors for one prompt/look.

An :class:`EvidenceStore` carries everything retrieval conditions on:
global embeddings of rendered views, per-category part evidence (crops,
when a detector found the part), and per-category text prior embeddings.
Part evidence has an explicit status so downstream code can tell a usable
crop from a failed detection instead of guessing from missing fields.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import VIEWS, Taxonomy
from .errors import MissingTextPriorError, NoViewsAvailableError
from .vecmath import as_vector

logger = logging.getLogger(__name__)

EVIDENCE_SCHEMA_VERSION = 1

PART_STATUSES = ("valid", "fallback_keyword", "failed")


@dataclass(frozen=True)
class PartEvidence:
    """Evidence for one category's part.

    ``valid`` and ``fallback_keyword`` statuses require an embedding;
    ``failed`` must carry none. ``source_view`` names the view the crop
    came from, when there was one.
    """

    category_id: str
    status: str
    embedding: np.ndarray | None = None
    source_view: str | None = None

    def __post_init__(self) -> None:
        if self.status not in PART_STATUSES:
            raise ValueError(f"unknown part status {self.status!r}")
        if self.status == "failed":
            if self.embedding is not None:
                raise ValueError("failed part evidence cannot carry an embedding")
        else:
            if self.embedding is None:
                raise ValueError(f"{self.status} part evidence requires an embedding")
        if self.source_view is not None and self.source_view not in VIEWS:
            raise ValueError(f"unknown view {self.source_view!r}")

    @property
    def usable(self) -> bool:
        return self.status in ("valid", "fallback_keyword")


@dataclass(frozen=True)
class ResolvedEvidence:
    """Outcome of the part-or-global decision for one category."""

    kind: str  # "part" or "global"
    embedding: np.ndarray | None = None
    source_view: str | None = None
    status: str | None = None


class EvidenceStore:
    """Evidence for one prompt: view globals, parts, and text priors."""

    def __init__(self, prompt_text: str = "") -> None:
        self.prompt_text = prompt_text
        self._views: dict[str, np.ndarray] = {}
        self._parts: dict[str, PartEvidence] = {}
        self._text_priors: dict[str, np.ndarray] = {}
        self._dim: int | None = None
        self._frozen = False

    # --- population ----------------------------------------------------------

    def _check_dim(self, v: np.ndarray) -> np.ndarray:
        v = as_vector(v, d=self._dim)
        if self._dim is None:
            self._dim = int(v.shape[0])
        return v

    def _check_mutable(self) -> None:
        if self._frozen:
            raise RuntimeError("evidence store is frozen")

    def add_view(self, view: str, embedding) -> None:
        self._check_mutable()
        if view not in VIEWS:
            raise ValueError(f"unknown view {view!r}")
        self._views[view] = self._check_dim(embedding)

    def add_part(self, part: PartEvidence) -> None:
        self._check_mutable()
        if part.embedding is not None:
            part = PartEvidence(
                category_id=part.category_id,
                status=part.status,
                embedding=self._check_dim(part.embedding),
                source_view=part.source_view,
            )
        self._parts[part.category_id] = part

    def add_text_prior(self, category_id: str, embedding) -> None:
        self._check_mutable()
        self._text_priors[category_id] = self._check_dim(embedding)

    def freeze(self) -> EvidenceStore:
        self._frozen = True
        return self

    # --- access --------------------------------------------------------------

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def available_views(self) -> tuple[str, ...]:
        return tuple(v for v in VIEWS if v in self._views)

    def view_embedding(self, view: str) -> np.ndarray:
        return self._views[view]

    def part(self, category_id: str) -> PartEvidence | None:
        return self._parts.get(category_id)

    @property
    def parts(self) -> dict[str, PartEvidence]:
        return dict(self._parts)

    def text_prior(self, category_id: str) -> np.ndarray:
        try:
            return self._text_priors[category_id]
        except KeyError:
            raise MissingTextPriorError(
                f"no text prior for category {category_id!r}"
            ) from None

    def has_text_prior(self, category_id: str) -> bool:
        return category_id in self._text_priors

    @property
    def text_priors(self) -> dict[str, np.ndarray]:
        return dict(self._text_priors)


def select_views(
    category_id: str,
    store: EvidenceStore,
    taxonomy: Taxonomy,
) -> tuple[list[str], str | None]:
    """Views to read global evidence from, most preferred first.

    Uses the taxonomy's per-category preference when any preferred view is
    available; otherwise falls back to the default front/back/left/right
    order, with a warning when a stated preference went unmet. Raises
    :class:`NoViewsAvailableError` when the store has no views at all.
    """
    available = store.available_views
    if not available:
        raise NoViewsAvailableError("evidence store has no rendered views")
    preference = taxonomy.view_map.get(category_id, ())
    chosen = [v for v in preference if v in available]
    if chosen:
        return chosen, None
    warning = None
    if preference:
        warning = (
            f"no preferred view of {category_id!r} available "
            f"(wanted {list(preference)}); falling back to default order"
        )
        logger.warning("%s", warning)
    return list(available), warning


def resolve_part_or_global(category_id: str, store: EvidenceStore) -> ResolvedEvidence:
    """Decide whether retrieval may trust part evidence for a category.

    Part evidence wins iff present with a usable status. Otherwise the
    caller should fall back to global view evidence.
    """
    part = store.part(category_id)
    if part is not None and part.usable:
        return ResolvedEvidence(
            kind="part",
            embedding=part.embedding,
            source_view=part.source_view,
            status=part.status,
        )
    return ResolvedEvidence(kind="global", status=part.status if part else None)


# --- file format --------------------------------------------------------------


def save_evidence(store: EvidenceStore, path: str | Path) -> None:
    doc = {
        "schema_version": EVIDENCE_SCHEMA_VERSION,
        "prompt_text": store.prompt_text,
        "views": {v: [float(x) for x in store.view_embedding(v)]
                  for v in store.available_views},
        "parts": [
            {
                "category_id": p.category_id,
                "status": p.status,
                "source_view": p.source_view,
                "embedding": None
                if p.embedding is None
                else [float(x) for x in p.embedding],
            }
            for _, p in sorted(store.parts.items())
        ],
        "text_priors": {
            c: [float(x) for x in v] for c, v in sorted(store.text_priors.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_evidence(path: str | Path) -> EvidenceStore:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("schema_version", EVIDENCE_SCHEMA_VERSION)
    if version != EVIDENCE_SCHEMA_VERSION:
        raise ValueError(f"unsupported evidence schema version {version!r}")
    store = EvidenceStore(prompt_text=str(doc.get("prompt_text", "")))
    for view, emb in doc.get("views", {}).items():
        store.add_view(view, emb)
    for entry in doc.get("parts", []):
        emb = entry.get("embedding")
        store.add_part(
            PartEvidence(
                category_id=entry["category_id"],
                status=entry["status"],
                embedding=None if emb is None else np.asarray(emb, dtype=np.float64),
                source_view=entry.get("source_view"),
            )
        )
    for cid, emb in doc.get("text_priors", {}).items():
        store.add_text_prior(cid, emb)
    return store
