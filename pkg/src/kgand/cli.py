"""Command-line pipeline: ingest, train, disambiguate, baseline, evaluate,
sweep, dedupe.

Every command reads a flat ``key=value`` config file (when ``--config``
is given) with explicit flags taking precedence, writes its artifacts
atomically under ``--out``, and derives all randomness from one master
seed so a single integer reproduces a full run.  ``LAND_THREADS`` caps
the worker count for the per-block clustering map.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import baselines, clustering, evaluation, features, kg as kgmod, model as modelmod, report
from .errors import ConfigError, KgandError
from .training import TrainConfig, train_model

logger = logging.getLogger(__name__)

VARIANT_CHOICES = ("unimodal", "glin", "ggru")

# Fixed offsets from the master seed.
SEED_SPLIT = 0
SEED_TRAIN = 1
SEED_EMBED = 3

CONFIG_KEYS = {
    "triples", "schema", "variant", "vectors", "truth", "threshold", "grid",
    "baseline", "post_filter", "seed", "out", "embedding_dim", "learning_rate",
    "negatives", "batch_size", "smoothing", "max_epochs", "eval_frequency",
    "patience", "embed_dim", "ratios", "raw_features",
}


def read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as stream:
        for line_no, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = value.strip()
    return values


def worker_count() -> int:
    raw = os.environ.get("LAND_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("ignoring non-integer LAND_THREADS=%r", raw)
        return 1


def parallel_map(fn: Callable, items: Iterable) -> list:
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:step`` into an inclusive list of thresholds."""
    try:
        lo, hi, step = (float(part) for part in spec.split(":"))
    except ValueError:
        raise ConfigError(f"grid must be lo:hi:step, got {spec!r}") from None
    if step <= 0 or hi < lo:
        raise ConfigError(f"grid must have positive step and hi >= lo, got {spec!r}")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def sniff_and_parse(path: str | Path, schema: str) -> kgmod.KnowledgeGraph:
    """Parse canonical TSV, or the N-Triples subset when the file looks like it."""
    with open(path, "r", encoding="utf-8") as stream:
        first = ""
        for line in stream:
            if line.strip():
                first = line.strip()
                break
    if first.startswith("<") and first.endswith("."):
        return kgmod.parse_ntriples(path, schema)
    return kgmod.parse_triples(path, schema)


def require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing artifact {path}; run the '{producer}' command first")
    return path


def atomic_save_checkpoint(params: modelmod.ModelParams, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".npz")
    os.close(fd)
    try:
        modelmod.save_checkpoint(params, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_truth(args) -> dict[str, str] | None:
    return kgmod.load_orcid_truth(args.truth) if args.truth else None


def _embed_dim(args) -> int:
    """Title vector width: the encoder's 768 for files, 64 for the fallback."""
    if args.embed_dim:
        return args.embed_dim
    return 768 if args.vectors else 64


def _text_features(args, graph, dim_needed):
    """Title vectors from the vector file, or the hashing fallback."""
    if args.vectors:
        return features.load_text_vectors(args.vectors, dim_needed, graph.entities)
    embed_seed = args.seed + SEED_EMBED
    table = features.build_fallback_text_features(graph, dim_needed, embed_seed)
    logger.info("no vector file given; hashed %d titles at dim %d", len(table.vectors), dim_needed)
    table.dim = dim_needed
    return table


def _train_config(args, schema: str) -> TrainConfig:
    base = TrainConfig.aminer_defaults if schema == "aminer" else TrainConfig.oc_defaults
    overrides = {}
    for attr, key in [
        ("embedding_dim", "embedding_dim"), ("learning_rate", "learning_rate"),
        ("negatives_per_triple", "negatives"), ("batch_size", "batch_size"),
        ("smoothing", "smoothing"), ("max_epochs", "max_epochs"),
        ("eval_frequency", "eval_frequency"), ("patience", "patience"),
    ]:
        value = getattr(args, key)
        if value is not None:
            overrides[attr] = value
    overrides["seed"] = args.seed + SEED_TRAIN
    return base(**overrides)


def cmd_ingest(args) -> int:
    graph = sniff_and_parse(args.triples, args.schema)
    out = Path(args.out)
    report.atomic_write(out / "triples.tsv", lambda s: kgmod.serialize_triples(graph, s))
    kgmod.write_index_csv(graph.entities, out / "entities.csv")
    kgmod.write_index_csv(graph.relations, out / "relations.csv")
    stats = (
        f"object_triples\t{len(graph.object_triples)}\n"
        f"text_triples\t{len(graph.text_triples)}\n"
        f"numeric_triples\t{len(graph.numeric_triples)}\n"
        f"entities\t{graph.num_entities}\n"
    )
    report.atomic_write(out / "ingest_stats.tsv", lambda s: s.write(stats))
    print(stats, end="")
    return 0


def _load_graph(args) -> kgmod.KnowledgeGraph:
    if args.triples:
        return sniff_and_parse(args.triples, args.schema)
    canonical = require(Path(args.out) / "triples.tsv", "ingest")
    return kgmod.parse_triples(canonical, args.schema)


def cmd_train(args) -> int:
    graph = _load_graph(args)
    config = _train_config(args, args.schema)
    split = kgmod.split_structural(graph, _ratios(args), seed=args.seed + SEED_SPLIT)

    text = numeric = None
    if args.variant != "unimodal":
        text = _text_features(args, graph, _embed_dim(args))
        numeric = features.build_numeric_features(graph)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "training.log.tmp", "w", encoding="utf-8") as log_stream:
        params, history = train_model(
            graph, split, args.variant, text, numeric, config, log_stream=log_stream
        )
    os.replace(out / "training.log.tmp", out / "training.log")
    params.index_ref = "entities.csv"
    kgmod.write_index_csv(graph.entities, out / "entities.csv")
    kgmod.write_index_csv(graph.relations, out / "relations.csv")
    atomic_save_checkpoint(params, out / "model.npz")
    best = f" (best epoch {history.best_epoch})" if history.best_epoch else ""
    print(f"trained {args.variant} for {history.stopped_epoch} epochs{best}; "
          f"final loss {history.losses[-1]:.6f}")
    return 0


def _ratios(args) -> tuple[float, float, float]:
    if args.ratios is None:
        return (0.64, 0.16, 0.20)
    parts = tuple(float(x) for x in args.ratios.split(","))
    if len(parts) != 3:
        raise ConfigError(f"ratios must be three comma-separated fractions, got {args.ratios!r}")
    return parts


def _load_model_and_features(args, graph):
    params = modelmod.load_checkpoint(require(Path(args.out) / "model.npz", "train"))
    text = numeric = None
    if params.variant != "unimodal":
        text = _text_features(args, graph, params.literal_dim)
        numeric = features.build_numeric_features(graph)
    return params, text, numeric


def cmd_disambiguate(args) -> int:
    graph = _load_graph(args)
    truth = _load_truth(args)
    records = kgmod.extract_author_records(graph, truth)
    if not records:
        raise ConfigError("no author records to disambiguate")
    params, text, numeric = _load_model_and_features(args, graph)
    blocks = clustering.build_blocks(records, params, text, numeric, fused=not args.raw_features)
    threshold = args.threshold if args.threshold is not None else 0.6
    clusterings = parallel_map(lambda b: clustering.cluster_block(b, threshold), blocks)
    if args.post_filter:
        clusterings = [
            clustering.post_block_filter(c, b.members) for c, b in zip(clusterings, blocks)
        ]
    out = Path(args.out)
    report.write_clustering_csv(clusterings, out / "clusters.csv")
    print(f"clustered {sum(len(c.assignment) for c in clusterings)} records "
          f"in {len(blocks)} blocks at threshold {threshold:g}")
    if truth:
        _write_eval_artifacts(clusterings, truth, out)
    return 0


def _write_eval_artifacts(clusterings, truth, out: Path) -> None:
    result = evaluation.evaluate_clusterings(clusterings, truth)
    report.write_eval_report(result, out / "report.txt")
    report.write_confusion_csv(result.micro_counts, out / "confusion.csv")
    report.plot_block_metrics(result, out / "block_f1.png")
    print(f"micro  P={result.micro[0]:.2f} R={result.micro[1]:.2f} F1={result.micro[2]:.2f}")
    print(f"macro  P={result.macro[0]:.2f} R={result.macro[1]:.2f} F1={result.macro[2]:.2f}")


def cmd_baseline(args) -> int:
    graph = _load_graph(args)
    truth = _load_truth(args)
    records = kgmod.extract_author_records(graph, truth)
    if not records:
        raise ConfigError("no author records to disambiguate")
    grouped: dict[str, list] = {}
    for rec in records:
        grouped.setdefault(baselines.ln_fi_key(rec.family_name, rec.given_name), []).append(rec)

    out = Path(args.out)
    if args.baseline == "score-pairs":
        threshold = int(args.threshold) if args.threshold is not None else baselines.DEFAULT_RULES.threshold
        index = baselines.PublicationIndex(graph)
        clusterings = parallel_map(
            lambda item: baselines.score_pairs_cluster(item[1], index, threshold, block_key=item[0]),
            sorted(grouped.items()),
        )
    else:
        threshold = args.threshold if args.threshold is not None else 0.18
        vectors = _text_features(args, graph, _embed_dim(args))
        clusterings = parallel_map(
            lambda item: baselines.title_similarity_cluster(item[1], vectors, threshold, block_key=item[0]),
            sorted(grouped.items()),
        )
    report.write_clustering_csv(clusterings, out / "baseline_clusters.csv")
    print(f"{args.baseline}: clustered {len(records)} records in {len(grouped)} blocks "
          f"at threshold {threshold:g}")
    if truth:
        _write_eval_artifacts(clusterings, truth, out)
    return 0


def cmd_evaluate(args) -> int:
    if not args.truth:
        raise ConfigError("evaluate requires --truth")
    clusters_path = Path(args.clusters) if args.clusters else require(Path(args.out) / "clusters.csv", "disambiguate")
    clusterings = report.read_clustering_csv(clusters_path)
    truth = kgmod.load_orcid_truth(args.truth)
    _write_eval_artifacts(clusterings, truth, Path(args.out))
    return 0


def cmd_sweep(args) -> int:
    graph = _load_graph(args)
    if not args.truth:
        raise ConfigError("sweep requires --truth")
    truth = kgmod.load_orcid_truth(args.truth)
    records = kgmod.extract_author_records(graph, truth)
    if not records:
        raise ConfigError("no labeled evaluation records for the sweep")
    params, text, numeric = _load_model_and_features(args, graph)
    blocks = clustering.build_blocks(records, params, text, numeric, fused=not args.raw_features)
    grid = parse_grid(args.grid or "0:2:0.05")
    rows = clustering.threshold_sweep(blocks, grid, truth)
    out = Path(args.out)
    curve = evaluation.pr_curve_points(rows)
    report.write_sweep_csv(curve, out / "sweep.csv")
    report.plot_pr_curves(curve, out / "pr_curves.png")
    best = max(rows, key=lambda r: r[3])
    print(f"sweep over {len(rows)} thresholds; best F1 {best[3]:.2f} at threshold {best[0]:g}")
    return 0


def cmd_dedupe(args) -> int:
    graph = _load_graph(args)
    records = kgmod.extract_author_records(graph)
    params, text, numeric = _load_model_and_features(args, graph)
    blocks = clustering.build_blocks(records, params, text, numeric, fused=not args.raw_features)
    threshold = args.threshold if args.threshold is not None else 0.6
    clusterings = parallel_map(lambda b: clustering.cluster_block(b, threshold), blocks)
    if args.post_filter:
        clusterings = [
            clustering.post_block_filter(c, b.members) for c, b in zip(clusterings, blocks)
        ]
    deduped, merge_map = clustering.dedupe_kg(graph, clusterings)
    out = Path(args.out)
    report.atomic_write(out / "deduped.tsv", lambda s: kgmod.serialize_triples(deduped, s))
    report.write_merge_map_csv(merge_map, out / "merge_map.csv")
    merged = sum(1 for old, canon in merge_map.items() if old != canon)
    print(f"authors: {len(records)} records -> {len(records) - merged} canonical "
          f"entities ({graph.num_entities} -> {deduped.num_entities} total)")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "disambiguate": cmd_disambiguate,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "dedupe": cmd_dedupe,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgand",
        description="Author name disambiguation on scholarly knowledge graphs",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key=value config file; flags win")
    parser.add_argument("--triples", help="triple file (canonical TSV or N-Triples subset)")
    parser.add_argument("--schema", choices=("oc", "aminer"), default=None)
    parser.add_argument("--variant", choices=VARIANT_CHOICES, default=None)
    parser.add_argument("--vectors", help="precomputed title vector file")
    parser.add_argument("--truth", help="ground-truth CSV author_iri,orcid")
    parser.add_argument("--threshold", type=float, default=None)
    parser.add_argument("--grid", help="threshold grid lo:hi:step")
    parser.add_argument("--baseline", choices=("score-pairs", "title-similarity"), default=None)
    parser.add_argument("--post-filter", action="store_true", default=None,
                        help="split clusters on unequal full names")
    parser.add_argument("--raw-features", dest="raw_features", action="store_true", default=None,
                        help="cluster on raw embedding rows, bypassing literal fusion")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", help="artifact directory (default ./artifacts)")
    parser.add_argument("--clusters", help="clustering CSV for evaluate")
    parser.add_argument("--ratios", help="train,valid,test fractions (default 0.64,0.16,0.20)")
    parser.add_argument("--embedding-dim", dest="embedding_dim", type=int, default=None)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    parser.add_argument("--negatives", type=int, default=None)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--smoothing", type=float, default=None)
    parser.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    parser.add_argument("--eval-frequency", dest="eval_frequency", type=int, default=None)
    parser.add_argument("--patience", type=int, default=None)
    parser.add_argument("--embed-dim", dest="embed_dim", type=int, default=None,
                        help="fallback title embedding dimension (default 64)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


_BOOL_KEYS = {"post_filter", "raw_features"}
_INT_KEYS = {"seed", "embedding_dim", "negatives", "batch_size", "max_epochs",
             "eval_frequency", "patience", "embed_dim"}
_FLOAT_KEYS = {"threshold", "learning_rate", "smoothing"}


def apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then apply hard defaults."""
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if getattr(args, key, None) is None:
                if key in _BOOL_KEYS:
                    value = raw.lower() in ("1", "true", "yes", "on")
                elif key in _INT_KEYS:
                    value = int(raw)
                elif key in _FLOAT_KEYS:
                    value = float(raw)
                else:
                    value = raw
                setattr(args, key, value)
    if args.schema is None:
        args.schema = "oc"
    if args.variant is None:
        args.variant = "unimodal"
    if args.seed is None:
        args.seed = 0
    if args.out is None:
        args.out = "artifacts"
    if args.post_filter is None:
        args.post_filter = False
    if args.raw_features is None:
        args.raw_features = False
    if args.baseline is None:
        args.baseline = "score-pairs"
    return args


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = apply_config(args)
        if args.command in ("train", "disambiguate", "sweep", "dedupe", "baseline", "ingest"):
            if args.triples is None and not (Path(args.out) / "triples.tsv").exists():
                raise ConfigError("no --triples given and no ingested triples.tsv; run 'ingest' first")
        return COMMANDS[args.command](args)
    except KgandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
