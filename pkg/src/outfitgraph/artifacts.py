"""Prepared-dataset directory layout: reading and writing the artifacts the
CLI pipeline passes between its stages.

Layout of a prepared directory:
    items.json        item table (id, categoryid, name, image, price, likes)
    outfits.json      filtered outfits as {"set_id", "items": [item_id...]}
    split.tsv         set_id<TAB>{train|validation|test}
    categories.txt    retained category ids, one per line
    vocab.txt         text vocabulary, one token per line
    cooccurrence.tsv  cat_a<TAB>cat_b<TAB>count over the train split
    hypergraph.json   hypergraph summary (vertices, hyperedges, dropped)
    stats.json        outfit/category counts and size statistics
"""

from __future__ import annotations

import json
from pathlib import Path

from .data import (
    CompatPair,
    DatasetSplit,
    FITBQuestion,
    Item,
    Outfit,
    read_split_manifest,
    write_split_manifest,
)
from .errors import FormatError
from .features import Vocabulary
from .graphs import build_cooccurrence_graph, build_hypergraph, write_edge_list


def write_prepared(out_dir, split: DatasetSplit, item_table: dict[str, Item],
                   vocab: Vocabulary) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outfits = split.all_outfits()

    items_payload = [
        {
            "item_id": item.item_id,
            "categoryid": item.category_id,
            "name": item.name,
            "image": item.image_ref,
            "price": item.price,
            "likes": item.likes,
        }
        for item in sorted(item_table.values(), key=lambda i: i.item_id)
    ]
    (out / "items.json").write_text(json.dumps(items_payload, indent=1) + "\n")
    outfits_payload = [
        {"set_id": o.set_id, "items": list(o.items)} for o in outfits
    ]
    (out / "outfits.json").write_text(json.dumps(outfits_payload, indent=1) + "\n")
    write_split_manifest(split, out / "split.tsv")
    (out / "categories.txt").write_text(
        "".join(f"{c}\n" for c in sorted(split.category_set)))
    (out / "vocab.txt").write_text("".join(f"{w}\n" for w in vocab.words))

    graph = build_cooccurrence_graph(split.train, item_table)
    write_edge_list(graph, out / "cooccurrence.tsv")
    hyper = build_hypergraph(split.train, item_table)
    (out / "hypergraph.json").write_text(json.dumps({
        "n_vertices": len(hyper.vertices),
        "n_hyperedges": len(hyper.hyperedges),
        "dropped_degenerate": hyper.dropped,
    }, indent=1) + "\n")

    sizes = [len(o.items) for o in outfits]
    stats = {
        "outfit_count": len(outfits),
        "item_count": len(item_table),
        "category_count": len(split.category_set),
        "mean_outfit_size": sum(sizes) / len(sizes),
        "max_outfit_size": max(sizes),
        "train": len(split.train),
        "validation": len(split.validation),
        "test": len(split.test),
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=1) + "\n")
    return stats


def load_prepared(prepared_dir) -> tuple[DatasetSplit, dict[str, Item], Vocabulary]:
    prep = Path(prepared_dir)
    for required in ("items.json", "outfits.json", "split.tsv"):
        if not (prep / required).exists():
            raise FileNotFoundError(f"prepared dir {prep} is missing {required}")
    item_table: dict[str, Item] = {}
    for raw in json.loads((prep / "items.json").read_text()):
        item = Item(
            item_id=raw["item_id"],
            category_id=int(raw["categoryid"]),
            name=raw.get("name", ""),
            image_ref=raw.get("image", ""),
            price=raw.get("price"),
            likes=raw.get("likes"),
        )
        item_table[item.item_id] = item
    outfits = [
        Outfit(raw["set_id"], tuple(raw["items"]))
        for raw in json.loads((prep / "outfits.json").read_text())
    ]
    split = read_split_manifest(prep / "split.tsv", outfits)
    categories = frozenset(
        int(line) for line in (prep / "categories.txt").read_text().split() if line
    )
    split.category_set = categories
    vocab_path = prep / "vocab.txt"
    words = tuple(
        line for line in vocab_path.read_text().splitlines() if line
    ) if vocab_path.exists() else ()
    return split, item_table, Vocabulary(words)


def _questions_path(prepared_dir, seed: int) -> Path:
    return Path(prepared_dir) / f"eval_fitb_{seed}.json"


def _pairs_path(prepared_dir, seed: int) -> Path:
    return Path(prepared_dir) / f"eval_pairs_{seed}.json"


def persist_questions(prepared_dir, seed: int, questions: list[FITBQuestion]) -> None:
    payload = [
        {
            "set_id": q.partial.set_id,
            "partial_items": list(q.partial.items),
            "masked_position": q.masked_position,
            "choices": list(q.choices),
            "answer_index": q.answer_index,
        }
        for q in questions
    ]
    _questions_path(prepared_dir, seed).write_text(json.dumps(payload, indent=1) + "\n")


def load_questions(prepared_dir, seed: int) -> list[FITBQuestion] | None:
    path = _questions_path(prepared_dir, seed)
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text())
        return [
            FITBQuestion(
                partial=Outfit(raw["set_id"], tuple(raw["partial_items"])),
                masked_position=int(raw["masked_position"]),
                choices=tuple(raw["choices"]),  # type: ignore[arg-type]
                answer_index=int(raw["answer_index"]),
            )
            for raw in payload
        ]
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt persisted questions at {path}: {exc}") from exc


def persist_pairs(prepared_dir, seed: int, pairs: list[CompatPair]) -> None:
    payload = [
        {
            "set_id": p.positive.set_id,
            "positive_items": list(p.positive.items),
            "negative_items": list(p.negative.items),
            "replaced_position": p.replaced_position,
        }
        for p in pairs
    ]
    _pairs_path(prepared_dir, seed).write_text(json.dumps(payload, indent=1) + "\n")


def load_pairs(prepared_dir, seed: int) -> list[CompatPair] | None:
    path = _pairs_path(prepared_dir, seed)
    if not path.exists():
        return None
    try:
        payload = json.loads(path.read_text())
        return [
            CompatPair(
                positive=Outfit(raw["set_id"], tuple(raw["positive_items"])),
                negative=Outfit(raw["set_id"] + "~neg", tuple(raw["negative_items"])),
                replaced_position=int(raw["replaced_position"]),
            )
            for raw in payload
        ]
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt persisted pairs at {path}: {exc}") from exc
