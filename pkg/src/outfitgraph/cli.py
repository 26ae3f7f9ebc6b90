"""Command-line entry point wiring the pipeline end to end.

Subcommands: prepare, synth, embed-text, train, eval, score, gradcheck.
Configuration comes from defaults, then an optional ``key = value`` config
file, then flags (flags win). Exit codes are a stable contract:
0 ok, 1 I/O or data error, 2 usage, 3 numeric, 4 lookup, 5 verification.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from . import artifacts
from .data import (
    Outfit,
    build_compat_pairs,
    build_fitb_questions,
    filter_dataset,
    generate_synthetic,
    parse_outfit_files,
    split_dataset,
)
from .errors import (
    FeatureLookupError,
    FormatError,
    NumericError,
    OutfitGraphError,
)
from .evaluation import EvalReport, compat_auc, emit_report, fitb_accuracy, format_table
from .features import (
    EmbeddingStore,
    ModalityConfig,
    Vocabulary,
    build_vocabulary,
    read_store,
    text_store,
    write_store,
)
from .models import CompatModel, ModelConfig
from .nn import load_checkpoint
from .training import TrainConfig, build_model, train
from .verify import GRADCHECK_THRESHOLD, run_gradcheck

SEED_ENV = "COMPAT_GRAPH_SEED"

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_LOOKUP = 4
EXIT_VERIFY = 5


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(datetime.timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """Materialize config-file values under flag precedence."""
    merged = dict(vars(args))
    config_path = merged.pop("config", None)
    if config_path:
        file_values = parse_config_file(config_path)
        for key, raw in file_values.items():
            if key not in merged:
                raise ValueError(f"unknown config key {key!r}")
            default = parser_defaults.get(key)
            # a flag explicitly given on the command line wins
            if merged[key] != default:
                continue
            current = merged[key]
            if isinstance(current, bool):
                merged[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                merged[key] = int(raw)
            elif isinstance(current, float):
                merged[key] = float(raw)
            else:
                merged[key] = raw
    return merged


def _write_resolved(run_dir, resolved: dict) -> None:
    run = Path(run_dir)
    run.mkdir(parents=True, exist_ok=True)
    lines = [f"{key} = {resolved[key]}" for key in sorted(resolved)
             if key not in ("func",)]
    (run / "config.resolved").write_text("\n".join(lines) + "\n")


def _load_stores(resolved: dict, modality: str) -> dict[str, EmbeddingStore]:
    stores: dict[str, EmbeddingStore] = {}
    needed = ModalityConfig(modality).channels()
    paths = {"visual": resolved.get("visual_store"),
             "textual": resolved.get("text_store")}
    for channel, _ in needed:
        path = paths[channel]
        if not path:
            raise ValueError(f"modality {modality!r} requires --{'visual' if channel == 'visual' else 'text'}-store")
        stores[channel] = read_store(path)
    return stores


# --------------------------------------------------------------------------
# subcommands


def cmd_prepare(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    data_dir = Path(resolved["data_dir"])
    candidates = []
    for stem in ("train", "valid", "test"):
        for name in (f"{stem}.json", f"{stem}_no_dup.json"):
            if (data_dir / name).exists():
                candidates.append((stem, data_dir / name))
                break
    if not candidates:
        single = data_dir / "outfits.json"
        if single.exists():
            candidates = [("all", single)]
        else:
            raise FileNotFoundError(
                f"{data_dir}: expected train/valid/test .json (or *_no_dup.json) "
                "or a single outfits.json")

    raw_blobs = [path.read_bytes() for _, path in candidates]
    outfits, item_table = parse_outfit_files(raw_blobs)
    membership: dict[str, str] = {}
    offset = 0
    for (stem, _), blob in zip(candidates, raw_blobs):
        batch, _ = parse_outfit_files([blob])
        for o in batch:
            membership[o.set_id] = stem
        offset += len(batch)

    filtered, category_set = filter_dataset(
        outfits, item_table,
        min_category_count=resolved["min_category_count"],
        min_outfit_size=resolved["min_outfit_size"])

    seed = resolved["seed"]
    if resolved["subset"] or len(candidates) == 1:
        pool = filtered
        if resolved["subset"]:
            rng = np.random.default_rng(seed)
            order = rng.permutation(len(pool))[: resolved["subset"]]
            pool = [pool[i] for i in sorted(order)]
        split = split_dataset(pool, resolved["train_fraction"], seed,
                              validation_fraction=resolved["val_fraction"],
                              item_table=item_table)
        split.category_set = category_set
    else:
        buckets = {"train": [], "valid": [], "test": []}
        for o in filtered:
            buckets[membership[o.set_id]].append(o)
        from .data import DatasetSplit
        split = DatasetSplit(buckets["train"], buckets["valid"], buckets["test"],
                             category_set)

    retained_items = [item_table[i] for o in split.all_outfits() for i in o.items]
    vocab = build_vocabulary(retained_items, resolved["min_word_freq"])
    table = {i.item_id: i for i in retained_items}
    stats = artifacts.write_prepared(resolved["out_dir"], split, table, vocab)
    print(json.dumps(stats, indent=1))
    return EXIT_OK


def cmd_synth(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    seed = resolved["seed"]
    syn = generate_synthetic(
        n_outfits=resolved["n_outfits"],
        n_categories=resolved["n_categories"],
        items_per_category=resolved["items_per_category"],
        planted_groups=resolved["groups"],
        noise=resolved["noise"],
        seed=seed,
    )
    split = split_dataset(syn.outfits, resolved["train_fraction"], seed,
                          validation_fraction=resolved["val_fraction"],
                          item_table=syn.items)
    vocab = build_vocabulary(list(syn.items.values()), min_frequency=1)
    stats = artifacts.write_prepared(resolved["out_dir"], split, syn.items, vocab)

    out = Path(resolved["out_dir"])
    dim = next(iter(syn.visual.values())).size
    write_store(EmbeddingStore(dim=dim, vectors=syn.visual), out / "visual.embd")
    (out / "groups.json").write_text(json.dumps({
        "n_groups": syn.n_groups,
        "item_group": syn.item_group,
        "outfit_group": syn.outfit_group,
    }, indent=1) + "\n")
    print(json.dumps(stats, indent=1))
    return EXIT_OK


def cmd_embed_text(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    split, item_table, vocab = artifacts.load_prepared(resolved["prepared"])
    if not len(vocab):
        raise FormatError("prepared dir has an empty vocabulary")
    store = text_store(list(item_table.values()), vocab)
    out = resolved["out"] or str(Path(resolved["prepared"]) / "textual.embd")
    write_store(store, out)
    print(f"wrote {len(store.vectors)} text vectors (dim {store.dim}) to {out}")
    return EXIT_OK


def cmd_train(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    config = TrainConfig(
        model=resolved["model"],
        modality=resolved["modality"],
        learning_rate=resolved["learning_rate"],
        batch_size=resolved["batch_size"],
        beta=resolved["beta"],
        lambda_l2=resolved["lambda_l2"],
        hidden_d=resolved["hidden_d"],
        steps_t=resolved["steps_t"],
        optimizer=resolved["optimizer"],
        max_epochs=resolved["max_epochs"],
        patience=resolved["patience"],
        min_delta=resolved["min_delta"],
        seed=resolved["seed"],
    )
    split, item_table, _ = artifacts.load_prepared(resolved["prepared"])
    stores = _load_stores(resolved, config.modality)
    run_dir = resolved["run_dir"]
    _write_resolved(run_dir, resolved)
    result = train(config, split, item_table, stores, run_dir=run_dir, log=print)
    print(f"best validation loss {result.best_val_loss:.6f} "
          f"after {len(result.history.epochs)} epochs")
    return EXIT_OK


def _model_from_checkpoint(checkpoint_path, split, item_table, stores):
    params, meta, _ = load_checkpoint(checkpoint_path)
    try:
        kind = meta["model"]
        modality = ModalityConfig(meta["modality"], float(meta["beta"]))
        hidden_d = int(meta["hidden_d"])
        steps = int(meta["steps_t"])
        categories = tuple(int(c) for c in meta["categories"].split(","))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint {checkpoint_path} lacks model metadata: {exc}") from exc
    channel_dims = {}
    for channel, _ in modality.channels():
        probe = f"{channel}/W_map_{categories[0]}"
        if probe not in params:
            raise FormatError(f"checkpoint is missing parameter {probe!r}")
        channel_dims[channel] = params[probe].shape[1]
        if channel not in stores:
            raise ValueError(f"checkpoint modality {modality.mode!r} needs a {channel} store")
        if stores[channel].dim != channel_dims[channel]:
            raise FormatError(
                f"{channel} store dim {stores[channel].dim} does not match "
                f"checkpoint dim {channel_dims[channel]}")
    config = ModelConfig(kind=kind, modality=modality, categories=categories,
                         channel_dims=channel_dims, hidden_d=hidden_d, steps=steps)
    graph = None
    if kind == "ngnn":
        from .graphs import build_cooccurrence_graph
        graph = build_cooccurrence_graph(split.train, item_table)
    return CompatModel(config, graph), params, meta


def _random_scorer(seed: int):
    def scorer(outfit: Outfit) -> float:
        digest = zlib.crc32(f"{seed}|{','.join(outfit.items)}".encode())
        return digest / 2**32
    return scorer


def cmd_eval(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    seed = resolved["seed"]
    prepared = resolved["prepared"]
    split, item_table, _ = artifacts.load_prepared(prepared)
    corpus_ids = sorted(item_table)

    if resolved["random_baseline"]:
        scorer = _random_scorer(seed)
        model_id = "random"
        modality = "none"
    else:
        if not resolved["checkpoint"]:
            raise ValueError("eval needs --checkpoint or --random-baseline")
        stores = {}
        for channel, path_key in (("visual", "visual_store"), ("textual", "text_store")):
            if resolved.get(path_key):
                stores[channel] = read_store(resolved[path_key])
        model, params, meta = _model_from_checkpoint(
            resolved["checkpoint"], split, item_table, stores)
        scorer = lambda o: model.score(o, params, item_table, stores)
        model_id = Path(resolved["checkpoint"]).stem
        modality = meta["modality"]

    task = resolved["task"]
    n_questions = 0
    accuracy = 0.0
    n_pairs = 0
    auc_value = 0.0
    threads = resolved["threads"]
    if task in ("fitb", "both"):
        questions = artifacts.load_questions(prepared, seed)
        if questions is None:
            questions = build_fitb_questions(split.test, corpus_ids, seed)
            artifacts.persist_questions(prepared, seed, questions)
        accuracy = fitb_accuracy(scorer, questions, threads=threads)
        n_questions = len(questions)
    if task in ("compat", "both"):
        pairs = artifacts.load_pairs(prepared, seed)
        if pairs is None:
            pairs = build_compat_pairs(split.test, corpus_ids, seed)
            artifacts.persist_pairs(prepared, seed, pairs)
        auc_value = compat_auc(scorer, pairs, threads=threads)
        n_pairs = len(pairs)

    report = EvalReport(
        model_id=model_id,
        modality=modality,
        n_fitb_questions=n_questions,
        fitb_accuracy=accuracy,
        n_compat_pairs=n_pairs,
        auc=auc_value,
        seed=seed,
        timestamp=_timestamp(),
    )
    out = resolved["out"] or "report.json"
    emit_report(report, out)
    if resolved["table"]:
        Path(resolved["table"]).write_text(
            format_table([(model_id, accuracy, auc_value)]))
    print(f"{model_id}: fitb_accuracy={accuracy:.4f} ({n_questions} questions) "
          f"auc={auc_value:.4f} ({n_pairs} pairs) -> {out}")
    return EXIT_OK


def cmd_score(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    split, item_table, _ = artifacts.load_prepared(resolved["prepared"])
    for item_id in resolved["items"]:
        if item_id not in item_table:
            raise FeatureLookupError(item_id, "item table")
    stores = {}
    for channel, path_key in (("visual", "visual_store"), ("textual", "text_store")):
        if resolved.get(path_key):
            stores[channel] = read_store(resolved[path_key])
    model, params, _ = _model_from_checkpoint(
        resolved["checkpoint"], split, item_table, stores)
    outfit = Outfit("adhoc", tuple(resolved["items"]))
    score = model.score(outfit, params, item_table, stores)
    print(f"{score:.6f}")
    return EXIT_OK


def cmd_gradcheck(args, defaults) -> int:
    resolved = _resolve(args, defaults)
    results = run_gradcheck(seed=resolved["seed"], hidden_d=resolved["hidden_d"],
                            h=resolved["h"])
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.label}: max rel error {r.max_rel_error:.3e} "
              f"at {r.worst_coordinate}")
    if failed:
        worst = max(failed, key=lambda r: r.max_rel_error)
        print(f"gradient check FAILED: {worst.label} {worst.worst_coordinate} "
              f"error {worst.max_rel_error:.3e} >= {GRADCHECK_THRESHOLD:g}",
              file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict]]:
    parser = argparse.ArgumentParser(
        prog="outfitgraph",
        description="Outfit compatibility scoring with graph neural models.")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults_by_command: dict[str, dict] = {}

    def register(name, p):
        defaults_by_command[name] = {
            action.dest: action.default for action in p._actions
            if action.dest not in ("help",)
        }

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=_default_seed())

    p = sub.add_parser("prepare", help="filter raw outfit files and build artifacts")
    add_common(p)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-category-count", type=int, default=100)
    p.add_argument("--min-outfit-size", type=int, default=3)
    p.add_argument("--min-word-freq", type=int, default=5)
    p.add_argument("--subset", type=int, default=0,
                   help="randomly subset to N outfits after filtering")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--val-fraction", type=float, default=0.0)
    register("prepare", p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a planted-structure synthetic dataset")
    add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-outfits", type=int, default=1600)
    p.add_argument("--n-categories", type=int, default=20)
    p.add_argument("--items-per-category", type=int, default=40)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--val-fraction", type=float, default=0.1)
    register("synth", p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed-text", help="write the one-hot text embedding store")
    add_common(p)
    p.add_argument("--prepared", required=True)
    p.add_argument("--out", default="")
    register("embed-text", p)
    p.set_defaults(func=cmd_embed_text)

    p = sub.add_parser("train", help="train a compatibility model")
    add_common(p)
    p.add_argument("--prepared", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--model", choices=("ngnn", "hgnn"), default="ngnn")
    p.add_argument("--modality", choices=("visual", "textual", "multimodal"),
                   default="multimodal")
    p.add_argument("--visual-store", default="")
    p.add_argument("--text-store", default="")
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--lambda-l2", type=float, default=0.001)
    p.add_argument("--hidden-d", type=int, default=12)
    p.add_argument("--steps-t", type=int, default=3)
    p.add_argument("--optimizer", choices=("adam", "rmsprop"), default="adam")
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--min-delta", type=float, default=1e-4)
    register("train", p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate FITB accuracy and compatibility AUC")
    add_common(p)
    p.add_argument("--prepared", required=True)
    p.add_argument("--checkpoint", default="")
    p.add_argument("--random-baseline", action="store_true")
    p.add_argument("--task", choices=("fitb", "compat", "both"), default="both")
    p.add_argument("--visual-store", default="")
    p.add_argument("--text-store", default="")
    p.add_argument("--out", default="")
    p.add_argument("--table", default="")
    p.add_argument("--threads", type=int, default=1)
    register("eval", p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score one outfit given item ids")
    add_common(p)
    p.add_argument("--prepared", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--visual-store", default="")
    p.add_argument("--text-store", default="")
    p.add_argument("items", nargs="+")
    register("score", p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    add_common(p)
    p.add_argument("--hidden-d", type=int, default=4)
    p.add_argument("--h", type=float, default=1e-3)
    register("gradcheck", p)
    p.set_defaults(func=cmd_gradcheck)

    return parser, defaults_by_command


def main(argv=None) -> int:
    parser, defaults_by_command = build_parser()
    args = parser.parse_args(argv)
    defaults = defaults_by_command[args.command]
    try:
        return args.func(args, defaults)
    except FeatureLookupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOOKUP
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, OutfitGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
