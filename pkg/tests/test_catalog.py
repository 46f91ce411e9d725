from __future__ import annotations

import json

import numpy as np
import pytest

from lookforge.catalog import (
    Asset,
    AssetCatalog,
    Taxonomy,
    export_catalog,
    ingest_catalog,
    load_taxonomy,
    save_taxonomy,
)
from lookforge.errors import (
    DimensionMismatchError,
    InvalidTaxonomyError,
    UnknownCategoryError,
)


def make_taxonomy() -> Taxonomy:
    return Taxonomy(
        categories=("body", "hat", "jacket", "sweater"),
        concept_map={"hoodie": ("sweater", "jacket"), "cap": ("hat",)},
        exclusion_groups=(("jacket", "sweater"),),
        view_map={"hat": ("front", "left")},
        required_core=("body",),
    )


def line(asset_id="a1", category="hat", emb=(1.0, 0.0), **extra) -> str:
    doc = {
        "asset_id": asset_id,
        "category_id": category,
        "embedding": list(emb),
        "title": "thing",
        "quality_flag": "curated",
    }
    doc.update(extra)
    return json.dumps(doc)


def test_ingest_happy_path():
    tax = make_taxonomy()
    cat, report = ingest_catalog([line("a1"), line("a2", emb=(0.0, 1.0))], tax)
    assert report.n_loaded == 2
    assert report.n_rejected == 0
    assert cat.dimension == 2
    assert [a.asset_id for a in cat.assets_of("hat")] == ["a1", "a2"]


def test_ingest_skips_bad_records_with_reasons():
    tax = make_taxonomy()
    lines = [
        "not json",
        json.dumps(["not", "an", "object"]),
        line("a1"),
        line("a1"),  # duplicate
        line("a2", category="pants"),
        line("a3", emb=()),
        json.dumps({"asset_id": "a4", "category_id": "hat", "embedding": [1, 0]}),
        line("a5", emb=(0.0, 0.0)),
    ]
    lines.append(
        json.dumps(
            {
                "asset_id": "a6",
                "category_id": "hat",
                "embedding": [1, 0],
                "title": "x",
                "quality_flag": "premium",
            }
        )
    )
    cat, report = ingest_catalog(lines, tax)
    assert report.n_loaded == 1
    reasons = [r.reason for r in report.rejections]
    assert reasons == [
        "malformed_json",
        "malformed_json",
        "duplicate_asset_id",
        "unknown_category",
        "bad_embedding",
        "missing_field",
        "bad_embedding",
        "invalid_quality_flag",
    ]
    assert [r.line_no for r in report.rejections] == [1, 2, 4, 5, 6, 7, 8, 9]


def test_ingest_dimension_mismatch_is_fatal():
    tax = make_taxonomy()
    with pytest.raises(DimensionMismatchError):
        ingest_catalog([line("a1"), line("a2", emb=(1.0, 0.0, 0.0))], tax)


def test_ingest_blank_lines_ignored():
    tax = make_taxonomy()
    cat, report = ingest_catalog(["", line("a1"), "   ", ""], tax)
    assert report.n_loaded == 1
    assert report.n_rejected == 0


def test_assets_of_sorted_and_unknown_category():
    tax = make_taxonomy()
    cat, _ = ingest_catalog([line("z9"), line("a1"), line("m5")], tax)
    assert [a.asset_id for a in cat.assets_of("hat")] == ["a1", "m5", "z9"]
    assert cat.assets_of("body") == []
    with pytest.raises(UnknownCategoryError):
        cat.assets_of("pants")


def test_embedding_matrix_order_matches_ids():
    tax = make_taxonomy()
    cat, _ = ingest_catalog(
        [line("b", emb=(0.0, 1.0)), line("a", emb=(1.0, 0.0))], tax
    )
    ids, m = cat.embedding_matrix("hat")
    assert ids == ["a", "b"]
    assert np.allclose(m, [[1.0, 0.0], [0.0, 1.0]])
    ids_empty, m_empty = cat.embedding_matrix("body")
    assert ids_empty == [] and m_empty.shape == (0, 2)


def test_catalog_add_rejects_unknown_category():
    cat = AssetCatalog(make_taxonomy())
    with pytest.raises(UnknownCategoryError):
        cat.add(
            Asset("x", "pants", np.array([1.0, 0.0]), "t", "curated")
        )


def test_bundle_id_round_trip(tmp_path):
    tax = make_taxonomy()
    cat, _ = ingest_catalog([line("a1", bundle_id="bundle-7"), line("a2")], tax)
    assert cat.get("a1").bundle_id == "bundle-7"
    assert cat.get("a2").bundle_id is None
    out = tmp_path / "out.jsonl"
    export_catalog(cat, out)
    cat2, report2 = ingest_catalog(out, tax)
    assert report2.n_rejected == 0
    assert cat2.get("a1").bundle_id == "bundle-7"
    assert np.allclose(cat2.get("a1").embedding, cat.get("a1").embedding)


def test_taxonomy_validation_catches_structural_problems():
    bad = Taxonomy(
        categories=("hat", "hat"),
        concept_map={"x": ("nope",), "y": ()},
        exclusion_groups=(("hat",), ("hat", "ghost")),
        view_map={"ghost": ("front",), "hat": ("top",)},
        required_core=("ghost",),
    )
    problems = bad.validate()
    assert any("duplicate category" in p for p in problems)
    assert any("unknown category 'nope'" in p for p in problems)
    assert any("maps to no categories" in p for p in problems)
    assert any("fewer than 2" in p for p in problems)
    assert any("unknown view 'top'" in p for p in problems)
    assert any("required core references unknown" in p for p in problems)
    assert make_taxonomy().validate() == []


def test_taxonomy_file_round_trip(tmp_path):
    tax = make_taxonomy()
    path = tmp_path / "tax.json"
    save_taxonomy(tax, path)
    loaded = load_taxonomy(path)
    assert loaded == tax


def test_taxonomy_load_rejects_invalid(tmp_path):
    path = tmp_path / "tax.json"
    path.write_text(json.dumps({"categories": ["hat"], "required_core": ["ghost"]}))
    with pytest.raises(InvalidTaxonomyError):
        load_taxonomy(path)
    path.write_text(json.dumps({"schema_version": 99, "categories": ["hat"]}))
    with pytest.raises(InvalidTaxonomyError):
        load_taxonomy(path)
