"""Command-line surface for the whole pipeline.

Stage commands (ingest, build-index, route, retrieve, assemble) read a
JSON run config and compose through files: each writes the document the
next one reads. synth fabricates a runnable scenario bundle and eval runs
seeded ablation suites. Every output document is versioned and embeds the
sha256 of the config that produced it; with a scripted judge, identical
config and seed give byte-identical outputs.

Failures exit 1 and print one JSON error document to stderr with a
stage-prefixed code, for example:

    {"error": {"code": "route.FileNotFound", "message": "...", "stage": "route"}}
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .assembly import GenerationBudget
from .catalog import ingest_catalog, load_taxonomy
from .errors import PipelineError
from .evalsuite import ABLATIONS, markdown_table, run_interference_suite
from .evidence import load_evidence
from .index import CategoryIndex, build_indices
from .judge import (
    DEFAULT_HTTP_TIMEOUT,
    AdvisorClient,
    HttpSource,
    JudgeClient,
    PassThroughJudge,
    ScriptedSource,
)
from .pipeline import SubspaceParams, bundle_map, run_assembly, run_retrieval
from .retrieval import Candidate, RetrievalConfig
from .router import RoutingPlan, load_prompt, route
from .synth import generate_pipeline_scenario

RUN_CONFIG_SCHEMA_VERSION = 1
OUTPUT_SCHEMA_VERSION = 1

ENV_JUDGE_URL = "LOOKFORGE_JUDGE_URL"
ENV_JUDGE_TIMEOUT = "LOOKFORGE_JUDGE_TIMEOUT"

PATH_KEYS = ("catalog", "taxonomy", "evidence", "prompt", "index_dir", "output_dir")


@dataclass(frozen=True)
class RunConfig:
    root: Path
    seed: int
    body_category: str | None
    paths: dict[str, Path]
    retrieval: RetrievalConfig
    budget: GenerationBudget
    subspace: SubspaceParams
    judge_spec: str
    advisor_spec: str | None
    config_sha256: str


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a run config; relative paths resolve against the
    config file's directory."""
    p = Path(path)
    raw = p.read_bytes()
    doc = json.loads(raw)
    if not isinstance(doc, dict):
        raise ValueError("run config must be a JSON object")
    version = doc.get("schema_version", RUN_CONFIG_SCHEMA_VERSION)
    if version != RUN_CONFIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported run config schema version {version!r}")

    path_doc = doc.get("paths", {})
    for key in ("catalog", "taxonomy"):
        if key not in path_doc:
            raise ValueError(f"run config paths must include {key!r}")
    defaults = {"index_dir": "indices", "output_dir": "output"}
    paths: dict[str, Path] = {}
    for key in PATH_KEYS:
        value = path_doc.get(key, defaults.get(key))
        if value is not None:
            paths[key] = p.parent / value

    try:
        retrieval = RetrievalConfig(**doc.get("retrieval", {}))
        budget = GenerationBudget(**doc.get("budget", {}))
        subspace = SubspaceParams(**doc.get("subspace", {}))
    except TypeError as exc:
        raise ValueError(f"bad run config section: {exc}") from exc

    return RunConfig(
        root=p.parent,
        seed=int(doc.get("seed", 0)),
        body_category=doc.get("body_category"),
        paths=paths,
        retrieval=retrieval,
        budget=budget,
        subspace=subspace,
        judge_spec=str(doc.get("judge", "passthrough")),
        advisor_spec=doc.get("advisor"),
        config_sha256=hashlib.sha256(raw).hexdigest(),
    )


def _require_path(cfg: RunConfig, key: str) -> Path:
    if key not in cfg.paths:
        raise ValueError(f"run config paths entry {key!r} is required for this command")
    return cfg.paths[key]


def parse_judge_spec(spec: str) -> tuple[str, str | None]:
    """Split a judge spec into (kind, target).

    Accepted forms: ``passthrough``, ``scripted:<path>``, ``http:<url>``.
    A bare ``http://host`` or ``https://host`` also works.
    """
    if spec == "passthrough":
        return "passthrough", None
    if spec.startswith("scripted:"):
        return "scripted", spec[len("scripted:"):]
    if spec.startswith(("http:", "https:")):
        rest = spec.split(":", 1)[1]
        return "http", spec if rest.startswith("//") else rest
    raise ValueError(
        f"unrecognized judge spec {spec!r}; "
        "use passthrough, scripted:<path>, or http:<url>"
    )


def _build_source(spec: str, root: Path, timeout: float):
    kind, target = parse_judge_spec(spec)
    if kind == "passthrough":
        return None
    if kind == "scripted":
        return ScriptedSource(root / target)
    return HttpSource(target, timeout=timeout)


def build_judge(spec: str, root: Path, timeout: float):
    source = _build_source(spec, root, timeout)
    return PassThroughJudge() if source is None else JudgeClient(source)


def build_advisor(spec: str | None, root: Path, timeout: float):
    if spec is None:
        return None
    source = _build_source(str(spec), root, timeout)
    return None if source is None else AdvisorClient(source)


def effective_judge_spec(flag: str | None, config_spec: str) -> str:
    """CLI flag beats the environment; the environment beats the config."""
    if flag:
        return flag
    env_url = os.environ.get(ENV_JUDGE_URL)
    if env_url:
        return env_url if env_url.startswith(("http:", "https:")) else f"http:{env_url}"
    return config_spec


def effective_timeout() -> float:
    raw = os.environ.get(ENV_JUDGE_TIMEOUT)
    if raw is None:
        return DEFAULT_HTTP_TIMEOUT
    timeout = float(raw)
    if timeout <= 0:
        raise ValueError(f"{ENV_JUDGE_TIMEOUT} must be positive, got {raw!r}")
    return timeout


def write_doc(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_doc(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.paths["output_dir"]


# --- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(_require_path(cfg, "taxonomy"))
    catalog, report = ingest_catalog(_require_path(cfg, "catalog"), taxonomy)
    out = _out_dir(args, cfg) / "ingest_report.json"
    write_doc(out, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_sha256": cfg.config_sha256,
        "n_loaded": report.n_loaded,
        "n_rejected": report.n_rejected,
        "rejections": [
            {"line_no": r.line_no, "reason": r.reason, "detail": r.detail}
            for r in report.rejections
        ],
        "dimension": catalog.dimension,
        "categories": {c: len(catalog.assets_of(c)) for c in taxonomy.categories},
    })
    print(f"loaded {report.n_loaded} assets, rejected {report.n_rejected} -> {out}")
    return 0


def cmd_build_index(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(_require_path(cfg, "taxonomy"))
    catalog, _ = ingest_catalog(_require_path(cfg, "catalog"), taxonomy)
    index_dir = Path(args.out) if args.out else cfg.paths["index_dir"]
    index_dir.mkdir(parents=True, exist_ok=True)
    indices = build_indices(catalog)
    entries: dict[str, dict] = {}
    for cat in sorted(indices):
        filename = f"{cat}.idx"
        target = index_dir / filename
        indices[cat].save(target)
        entries[cat] = {
            "file": filename,
            "n_assets": indices[cat].size,
            "sha256": hashlib.sha256(target.read_bytes()).hexdigest(),
        }
    write_doc(index_dir / "manifest.json", {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_sha256": cfg.config_sha256,
        "dimension": catalog.dimension,
        "indices": entries,
    })
    print(f"built {len(entries)} indices -> {index_dir}")
    return 0


def cmd_route(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(_require_path(cfg, "taxonomy"))
    prompt = load_prompt(_require_path(cfg, "prompt"))
    advisor = build_advisor(cfg.advisor_spec, cfg.root, effective_timeout())
    plan = route(prompt, taxonomy, advisor=advisor)
    out = _out_dir(args, cfg) / "plan.json"
    write_doc(out, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_sha256": cfg.config_sha256,
        "plan": plan.to_dict(),
    })
    print(f"routed to {', '.join(plan.target_categories)} -> {out}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(_require_path(cfg, "taxonomy"))
    catalog, _ = ingest_catalog(_require_path(cfg, "catalog"), taxonomy)
    store = load_evidence(_require_path(cfg, "evidence"))
    out_dir = _out_dir(args, cfg)
    plan = RoutingPlan.from_dict(read_doc(out_dir / "plan.json")["plan"])
    index_dir = cfg.paths["index_dir"]
    indices = {
        cat: CategoryIndex.load(index_dir / f"{cat}.idx")
        for cat in plan.target_categories
    }
    retrievals = run_retrieval(
        plan, catalog, store, taxonomy, cfg.retrieval,
        subspace_params=cfg.subspace, indices=indices,
    )
    pools_doc = {
        cat: {
            "pool": [
                {"asset_id": c.asset_id, "score": float(c.score), "source": c.source}
                for c in r.pool
            ],
            "used_part_evidence": r.used_part_evidence,
            "residual_collapsed": r.residual_collapsed,
            "source_view": r.source_view,
            "warnings": list(r.warnings),
        }
        for cat, r in retrievals.items()
    }
    out = out_dir / "pools.json"
    write_doc(out, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_sha256": cfg.config_sha256,
        "pools": pools_doc,
    })
    sizes = ", ".join(f"{cat}:{len(r.pool)}" for cat, r in sorted(retrievals.items()))
    print(f"pooled candidates ({sizes}) -> {out}")
    return 0


def cmd_assemble(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(_require_path(cfg, "taxonomy"))
    catalog, _ = ingest_catalog(_require_path(cfg, "catalog"), taxonomy)
    out_dir = _out_dir(args, cfg)
    pools_doc = read_doc(out_dir / "pools.json")["pools"]
    pools = {
        cat: [
            Candidate(str(c["asset_id"]), float(c["score"]), str(c["source"]))
            for c in entry["pool"]
        ]
        for cat, entry in pools_doc.items()
    }
    judge = build_judge(
        effective_judge_spec(args.judge, cfg.judge_spec),
        cfg.root,
        effective_timeout(),
    )
    filtered, base, candidates, winner, warnings = run_assembly(
        pools,
        judge,
        cfg.budget,
        taxonomy=taxonomy,
        bundles=bundle_map(catalog),
        body_category=cfg.body_category,
        gate_k=cfg.retrieval.gate_k,
    )
    out = out_dir / "look.json"
    write_doc(out, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_sha256": cfg.config_sha256,
        "winner": winner.to_doc(),
        "base_look": base.to_doc(),
        "candidates": [c.to_doc() for c in candidates],
        "gated_pools": {
            cat: [c.asset_id for c in cands] for cat, cands in filtered.items()
        },
        "warnings": list(warnings),
    })
    print(f"winner {winner.look_id} ({winner.status}) -> {out}")
    return 0


def cmd_synth(args) -> int:
    truth = generate_pipeline_scenario(args.out, seed=args.seed)
    planted = ", ".join(
        f"{cat}={aid}" for cat, aid in sorted(truth["planted_selections"].items())
    )
    print(f"scenario bundle in {args.out} (planted {planted})")
    return 0


def cmd_eval(args) -> int:
    report = run_interference_suite(args.n, base_seed=args.seed, ablate=args.ablate)
    sys.stdout.write(markdown_table([report]))
    if args.out:
        params = {"ablate": args.ablate, "n_scenarios": args.n, "base_seed": args.seed}
        canonical = json.dumps(params, sort_keys=True).encode("utf-8")
        write_doc(Path(args.out) / f"eval_{args.ablate}.json", {
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "params": params,
            "params_sha256": hashlib.sha256(canonical).hexdigest(),
            "report": report.to_dict(),
        })
    return 0


# --- argument parsing -----------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lookforge",
        description="catalog-grounded avatar look retrieval and assembly",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, func, help_text, *, judge_flag=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=None, help="override the config output dir")
        if judge_flag:
            p.add_argument(
                "--judge", default=None,
                help="judge spec: passthrough, scripted:<path>, or http:<url>",
            )
        p.set_defaults(func=func)
        return p

    stage("ingest", cmd_ingest, "validate a catalog file and report rejections")
    stage("build-index", cmd_build_index, "persist per-category index snapshots")
    stage("route", cmd_route, "turn the prompt into a category routing plan")
    stage("retrieve", cmd_retrieve, "pool ranked candidates per routed category")
    stage("assemble", cmd_assemble, "assemble, refine, and pick the winning look",
          judge_flag=True)

    p = sub.add_parser("synth", help="write a runnable synthetic scenario bundle")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="run a seeded interference ablation suite")
    p.add_argument("--ablate", choices=ABLATIONS, default="none")
    p.add_argument("--n", type=int, default=100, help="number of scenarios")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--out", default=None, help="directory for the report JSON")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # every failure becomes one machine-readable line
        code = exc.code if isinstance(exc, PipelineError) else _generic_code(exc)
        doc = {
            "error": {
                "stage": args.command,
                "code": f"{args.command}.{code}",
                "message": str(exc),
            }
        }
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1


def _generic_code(exc: Exception) -> str:
    if isinstance(exc, FileNotFoundError):
        return "FileNotFound"
    if isinstance(exc, json.JSONDecodeError):
        return "InvalidJson"
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return "InvalidValue"
    if isinstance(exc, OSError):
        return "Io"
    return type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
