"""Catalog and taxonomy ingestion.

Catalogs arrive as JSONL, one asset per line:

    {"asset_id": "hat-001", "category_id": "hat", "embedding": [...],
     "title": "straw sun hat", "quality_flag": "curated", "bundle_id": "b1"}

``bundle_id`` is optional. Bad records are skipped and reported per line;
only a dimension mismatch between otherwise-valid records aborts the
ingest, because a mixed-dimension catalog cannot be indexed at all.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidTaxonomyError,
    UnknownCategoryError,
)

logger = logging.getLogger(__name__)

# All views a look can be rendered from; order is the fallback preference.
VIEWS: tuple[str, ...] = ("front", "back", "left", "right")

QUALITY_FLAGS = frozenset({"curated", "unfiltered"})

TAXONOMY_SCHEMA_VERSION = 1
REQUIRED_ASSET_FIELDS = ("asset_id", "category_id", "embedding", "title", "quality_flag")


@dataclass(frozen=True)
class Asset:
    asset_id: str
    category_id: str
    embedding: np.ndarray
    title: str
    quality_flag: str
    bundle_id: str | None = None


@dataclass(frozen=True)
class Taxonomy:
    """Declared categories plus the routing and assembly side tables.

    ``concept_map`` sends a surface concept phrase to the categories it may
    denote. ``exclusion_groups`` lists sets of mutually exclusive
    categories. ``view_map`` gives per-category preferred render views, and
    ``required_core`` names the categories every look must fill.
    """

    categories: tuple[str, ...]
    concept_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    exclusion_groups: tuple[tuple[str, ...], ...] = ()
    view_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    required_core: tuple[str, ...] = ()

    def validate(self) -> list[str]:
        """Return human-readable structural violations (empty when valid)."""
        problems: list[str] = []
        declared = set(self.categories)
        if len(declared) != len(self.categories):
            problems.append("duplicate category ids")
        if not self.categories:
            problems.append("no categories declared")
        for concept, cats in self.concept_map.items():
            if not cats:
                problems.append(f"concept {concept!r} maps to no categories")
            for c in cats:
                if c not in declared:
                    problems.append(f"concept {concept!r} maps to unknown category {c!r}")
        for group in self.exclusion_groups:
            if len(group) < 2:
                problems.append(f"exclusion group {list(group)} has fewer than 2 members")
            for c in group:
                if c not in declared:
                    problems.append(f"exclusion group references unknown category {c!r}")
        for cat, views in self.view_map.items():
            if cat not in declared:
                problems.append(f"view map references unknown category {cat!r}")
            for v in views:
                if v not in VIEWS:
                    problems.append(f"view map for {cat!r} lists unknown view {v!r}")
        for c in self.required_core:
            if c not in declared:
                problems.append(f"required core references unknown category {c!r}")
        return problems

    def to_dict(self) -> dict:
        return {
            "schema_version": TAXONOMY_SCHEMA_VERSION,
            "categories": list(self.categories),
            "concept_map": {k: list(v) for k, v in self.concept_map.items()},
            "exclusion_groups": [list(g) for g in self.exclusion_groups],
            "view_map": {k: list(v) for k, v in self.view_map.items()},
            "required_core": list(self.required_core),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Taxonomy:
        version = doc.get("schema_version", TAXONOMY_SCHEMA_VERSION)
        if version != TAXONOMY_SCHEMA_VERSION:
            raise InvalidTaxonomyError(f"unsupported taxonomy schema version {version!r}")
        try:
            tax = cls(
                categories=tuple(doc["categories"]),
                concept_map={k: tuple(v) for k, v in doc.get("concept_map", {}).items()},
                exclusion_groups=tuple(tuple(g) for g in doc.get("exclusion_groups", [])),
                view_map={k: tuple(v) for k, v in doc.get("view_map", {}).items()},
                required_core=tuple(doc.get("required_core", [])),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidTaxonomyError(f"malformed taxonomy document: {exc}") from exc
        problems = tax.validate()
        if problems:
            raise InvalidTaxonomyError("; ".join(problems))
        return tax


def load_taxonomy(path: str | Path) -> Taxonomy:
    with open(path, encoding="utf-8") as fh:
        return Taxonomy.from_dict(json.load(fh))


def save_taxonomy(tax: Taxonomy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tax.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class RejectedRecord:
    line_no: int
    reason: str
    detail: str


@dataclass
class IngestReport:
    n_loaded: int = 0
    rejections: list[RejectedRecord] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejections)

    def reject(self, line_no: int, reason: str, detail: str) -> None:
        self.rejections.append(RejectedRecord(line_no, reason, detail))
        logger.warning("catalog line %d rejected (%s): %s", line_no, reason, detail)


class AssetCatalog:
    """In-memory asset store keyed by asset id, grouped by category."""

    def __init__(self, taxonomy: Taxonomy, dimension: int | None = None) -> None:
        self.taxonomy = taxonomy
        self.dimension = dimension
        self._assets: dict[str, Asset] = {}
        self._by_category: dict[str, list[str]] = {c: [] for c in taxonomy.categories}

    def __len__(self) -> int:
        return len(self._assets)

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self._assets

    def get(self, asset_id: str) -> Asset:
        return self._assets[asset_id]

    def add(self, asset: Asset) -> None:
        if asset.category_id not in self._by_category:
            raise UnknownCategoryError(f"unknown category {asset.category_id!r}")
        if self.dimension is None:
            self.dimension = int(asset.embedding.shape[0])
        elif asset.embedding.shape[0] != self.dimension:
            raise DimensionMismatchError(
                f"asset {asset.asset_id!r} has dimension {asset.embedding.shape[0]}, "
                f"catalog has {self.dimension}"
            )
        if asset.asset_id in self._assets:
            raise ValueError(f"duplicate asset id {asset.asset_id!r}")
        self._assets[asset.asset_id] = asset
        self._by_category[asset.category_id].append(asset.asset_id)

    def assets_of(self, category_id: str) -> list[Asset]:
        """Assets in one category, sorted by ascending asset id."""
        if category_id not in self._by_category:
            raise UnknownCategoryError(f"unknown category {category_id!r}")
        return [self._assets[a] for a in sorted(self._by_category[category_id])]

    def embedding_matrix(self, category_id: str) -> tuple[list[str], np.ndarray]:
        """(asset_ids, stacked embeddings) for a category, in asset-id order."""
        assets = self.assets_of(category_id)
        if not assets:
            d = self.dimension or 0
            return [], np.empty((0, d), dtype=np.float64)
        ids = [a.asset_id for a in assets]
        return ids, np.vstack([a.embedding for a in assets])

    def iter_assets(self) -> Iterator[Asset]:
        for aid in sorted(self._assets):
            yield self._assets[aid]


def _parse_record(doc: dict, taxonomy: Taxonomy, dimension: int | None) -> Asset:
    """Validate one parsed JSONL record. Raises ValueError with a reason tag."""
    for field_name in REQUIRED_ASSET_FIELDS:
        if field_name not in doc:
            raise ValueError(f"missing_field: {field_name}")
    asset_id = doc["asset_id"]
    category_id = doc["category_id"]
    if not isinstance(asset_id, str) or not asset_id:
        raise ValueError("missing_field: asset_id must be a non-empty string")
    if category_id not in taxonomy.categories:
        raise ValueError(f"unknown_category: {category_id!r}")
    flag = doc["quality_flag"]
    if flag not in QUALITY_FLAGS:
        raise ValueError(f"invalid_quality_flag: {flag!r}")
    raw = doc["embedding"]
    if not isinstance(raw, list) or not raw:
        raise ValueError("bad_embedding: embedding must be a non-empty list")
    try:
        emb = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad_embedding: {exc}") from exc
    if emb.ndim != 1 or not np.all(np.isfinite(emb)) or np.linalg.norm(emb) <= 1e-12:
        raise ValueError("bad_embedding: must be a finite nonzero 1-D vector")
    if dimension is not None and emb.shape[0] != dimension:
        # Dimension disagreement is not a per-record defect.
        raise DimensionMismatchError(
            f"asset {asset_id!r} has dimension {emb.shape[0]}, catalog has {dimension}"
        )
    bundle = doc.get("bundle_id")
    if bundle is not None and not isinstance(bundle, str):
        raise ValueError("bad_embedding: bundle_id must be a string when present")
    return Asset(
        asset_id=asset_id,
        category_id=category_id,
        embedding=emb,
        title=str(doc["title"]),
        quality_flag=flag,
        bundle_id=bundle,
    )


def ingest_catalog(
    source: str | Path | Iterable[str],
    taxonomy: Taxonomy,
) -> tuple[AssetCatalog, IngestReport]:
    """Stream a JSONL catalog into memory.

    Returns the catalog plus a report of skipped lines. Raises
    :class:`DimensionMismatchError` if valid records disagree on embedding
    dimension (the first valid record fixes it).
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return ingest_catalog(list(fh), taxonomy)

    catalog = AssetCatalog(taxonomy)
    report = IngestReport()
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            report.reject(line_no, "malformed_json", str(exc))
            continue
        if not isinstance(doc, dict):
            report.reject(line_no, "malformed_json", "record is not an object")
            continue
        try:
            asset = _parse_record(doc, taxonomy, catalog.dimension)
        except DimensionMismatchError:
            raise
        except ValueError as exc:
            reason, _, detail = str(exc).partition(": ")
            report.reject(line_no, reason, detail)
            continue
        if asset.asset_id in catalog:
            report.reject(line_no, "duplicate_asset_id", asset.asset_id)
            continue
        catalog.add(asset)
        report.n_loaded += 1
    return catalog, report


def export_catalog(catalog: AssetCatalog, path: str | Path) -> None:
    """Write the catalog back out as JSONL in ascending asset-id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for asset in catalog.iter_assets():
            doc = {
                "asset_id": asset.asset_id,
                "category_id": asset.category_id,
                "embedding": [float(x) for x in asset.embedding],
                "title": asset.title,
                "quality_flag": asset.quality_flag,
            }
            if asset.bundle_id is not None:
                doc["bundle_id"] = asset.bundle_id
            fh.write(json.dumps(doc, sort_keys=True) + "\n")
