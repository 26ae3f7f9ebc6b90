"""Outfit dataset ingestion, filtering, splitting, and sampling.

Everything here is a pure function of its inputs plus an explicit seeded
random generator, so callers get reproducible pipelines for free.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, ParseError, SamplingError, StructureError


@dataclass(frozen=True)
class Item:
    """One clothing or accessory piece."""

    item_id: str
    category_id: int
    name: str
    image_ref: str = ""
    price: float | None = None
    likes: int | None = None


@dataclass(frozen=True)
class Outfit:
    """An ordered list of item ids, semantically a set."""

    set_id: str
    items: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class DatasetSplit:
    train: list[Outfit]
    validation: list[Outfit]
    test: list[Outfit]
    category_set: frozenset[int] = frozenset()

    def all_outfits(self) -> list[Outfit]:
        return self.train + self.validation + self.test


@dataclass(frozen=True)
class FITBQuestion:
    """A partial outfit (one item removed) plus 4 candidate completions."""

    partial: Outfit
    masked_position: int
    choices: tuple[str, str, str, str]
    answer_index: int

    def completed(self, choice_index: int) -> Outfit:
        """The outfit obtained by filling the blank with the given choice."""
        items = list(self.partial.items)
        items.insert(self.masked_position, self.choices[choice_index])
        return Outfit(f"{self.partial.set_id}#{choice_index}", tuple(items))


@dataclass(frozen=True)
class CompatPair:
    """A true outfit and a corrupted copy differing in exactly one position."""

    positive: Outfit
    negative: Outfit
    replaced_position: int


def parse_outfits(raw: bytes | str) -> tuple[list[Outfit], dict[str, Item]]:
    """Parse one outfit-list JSON file into outfits plus an item table.

    Item ids are derived as ``<set_id>_<index>``.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        entries = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid outfit JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(entries, list):
        raise ParseError("outfit file must contain a JSON array")

    outfits: list[Outfit] = []
    items: dict[str, Item] = {}
    seen_sets: set[str] = set()
    for entry in entries:
        try:
            set_id = str(entry["set_id"])
            raw_items = entry["items"]
        except (TypeError, KeyError) as exc:
            raise ParseError(f"outfit entry missing field: {exc}") from exc
        if set_id in seen_sets:
            raise StructureError(f"duplicate set_id {set_id!r}")
        seen_sets.add(set_id)

        member_ids: list[str] = []
        for raw_item in raw_items:
            try:
                index = int(raw_item["index"])
                category_id = int(raw_item["categoryid"])
                name = str(raw_item.get("name", ""))
            except (TypeError, KeyError, ValueError) as exc:
                raise ParseError(f"bad item in outfit {set_id!r}: {exc}") from exc
            item_id = f"{set_id}_{index}"
            if item_id in member_ids:
                raise StructureError(f"duplicate item index {index} in outfit {set_id!r}")
            if category_id < 0:
                raise StructureError(f"negative category id for item {item_id!r}")
            price = raw_item.get("price")
            likes = raw_item.get("likes")
            items[item_id] = Item(
                item_id=item_id,
                category_id=category_id,
                name=name,
                image_ref=str(raw_item.get("image", "")),
                price=None if price is None else float(price),
                likes=None if likes is None else int(likes),
            )
            member_ids.append(item_id)
        outfits.append(Outfit(set_id, tuple(member_ids)))
    return outfits, items


def parse_outfit_files(raw_blobs) -> tuple[list[Outfit], dict[str, Item]]:
    """Parse several outfit files and merge their item tables."""
    outfits: list[Outfit] = []
    items: dict[str, Item] = {}
    seen: set[str] = set()
    for raw in raw_blobs:
        batch_outfits, batch_items = parse_outfits(raw)
        for o in batch_outfits:
            if o.set_id in seen:
                raise StructureError(f"duplicate set_id {o.set_id!r} across files")
            seen.add(o.set_id)
        outfits.extend(batch_outfits)
        items.update(batch_items)
    return outfits, items


def category_counts(outfits: list[Outfit], item_table: dict[str, Item]) -> Counter:
    """Number of item occurrences per category over the given outfits."""
    counts: Counter = Counter()
    for outfit in outfits:
        for item_id in outfit.items:
            counts[item_table[item_id].category_id] += 1
    return counts


def filter_dataset(
    outfits: list[Outfit],
    item_table: dict[str, Item],
    min_category_count: int = 100,
    min_outfit_size: int = 3,
) -> tuple[list[Outfit], frozenset[int]]:
    """Drop rare-category items, then undersized outfits, until stable.

    Runs to a fixpoint so that after filtering every retained category
    meets the count threshold and every outfit has >= min_outfit_size
    items; a single pass would not guarantee either (dropping short
    outfits lowers category counts again).
    """
    current = list(outfits)
    while True:
        counts = category_counts(current, item_table)
        retained = {c for c, n in counts.items() if n >= min_category_count}
        next_outfits: list[Outfit] = []
        changed = False
        for outfit in current:
            kept = tuple(
                i for i in outfit.items if item_table[i].category_id in retained
            )
            if len(kept) < min_outfit_size:
                changed = True
                continue
            if len(kept) != len(outfit.items):
                changed = True
                outfit = Outfit(outfit.set_id, kept)
            next_outfits.append(outfit)
        current = next_outfits
        if not changed:
            break
    if not current:
        raise DatasetError("filtering removed every outfit")
    final_counts = category_counts(current, item_table)
    return current, frozenset(final_counts)


def split_dataset(
    outfits: list[Outfit],
    train_fraction: float,
    seed: int,
    validation_fraction: float = 0.0,
    item_table: dict[str, Item] | None = None,
) -> DatasetSplit:
    """Deterministically shuffle and split outfits into train/val/test.

    ``validation_fraction`` carves the validation set out of the train
    portion (as a fraction of the original total).
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    if validation_fraction < 0 or validation_fraction >= train_fraction:
        raise ValueError("validation_fraction must be in [0, train_fraction)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(outfits))
    shuffled = [outfits[i] for i in order]
    n_train = int(len(outfits) * train_fraction)
    n_val = int(len(outfits) * validation_fraction)
    train = shuffled[: n_train - n_val]
    validation = shuffled[n_train - n_val : n_train]
    test = shuffled[n_train:]
    category_set: frozenset[int] = frozenset()
    if item_table is not None:
        category_set = frozenset(category_counts(outfits, item_table))
    return DatasetSplit(train, validation, test, category_set)


def _sample_replacement(
    outfit_items: frozenset[str], corpus_ids, rng: np.random.Generator
) -> str:
    """Uniform draw from corpus ids not already in the outfit."""
    n = len(corpus_ids)
    if n > len(outfit_items):
        # Rejection sampling first: expected O(1) draws.
        for _ in range(100):
            candidate = corpus_ids[int(rng.integers(n))]
            if candidate not in outfit_items:
                return candidate
    eligible = [i for i in corpus_ids if i not in outfit_items]
    if not eligible:
        raise SamplingError("corpus has no item outside the outfit")
    return eligible[int(rng.integers(len(eligible)))]


def sample_negative_outfit(
    outfit: Outfit, corpus_ids, rng: np.random.Generator
) -> CompatPair:
    """Corrupt one uniformly chosen position with a random corpus item."""
    position = int(rng.integers(len(outfit.items)))
    replacement = _sample_replacement(frozenset(outfit.items), corpus_ids, rng)
    negative_items = list(outfit.items)
    negative_items[position] = replacement
    negative = Outfit(f"{outfit.set_id}~neg", tuple(negative_items))
    return CompatPair(outfit, negative, position)


def build_fitb_questions(
    outfits: list[Outfit], corpus_ids, seed: int
) -> list[FITBQuestion]:
    """One fill-in-the-blank question per outfit: mask one item, add 3 negatives."""
    rng = np.random.default_rng(seed)
    questions: list[FITBQuestion] = []
    for outfit in outfits:
        if len(outfit.items) < 3:
            raise DatasetError(f"outfit {outfit.set_id!r} has fewer than 3 items")
        masked_position = int(rng.integers(len(outfit.items)))
        truth = outfit.items[masked_position]
        forbidden = set(outfit.items)
        negatives: list[str] = []
        while len(negatives) < 3:
            candidate = _sample_replacement(frozenset(forbidden), corpus_ids, rng)
            negatives.append(candidate)
            forbidden.add(candidate)
        choices = [truth] + negatives
        order = rng.permutation(4)
        shuffled = tuple(choices[i] for i in order)
        answer_index = int(np.argwhere(order == 0)[0][0])
        partial_items = outfit.items[:masked_position] + outfit.items[masked_position + 1 :]
        questions.append(
            FITBQuestion(
                partial=Outfit(outfit.set_id, partial_items),
                masked_position=masked_position,
                choices=shuffled,  # type: ignore[arg-type]
                answer_index=answer_index,
            )
        )
    return questions


def build_compat_pairs(
    outfits: list[Outfit], corpus_ids, seed: int
) -> list[CompatPair]:
    """One positive/negative pair per outfit, deterministic under seed."""
    rng = np.random.default_rng(seed)
    return [sample_negative_outfit(o, corpus_ids, rng) for o in outfits]


@dataclass
class SyntheticDataset:
    """A planted-structure corpus whose compatibility is decided by latent groups."""

    outfits: list[Outfit]
    items: dict[str, Item]
    visual: dict[str, np.ndarray]
    item_group: dict[str, int]
    outfit_group: dict[str, int] = field(default_factory=dict)
    n_groups: int = 0

    def corpus_ids(self) -> list[str]:
        return sorted(self.items)


def generate_synthetic(
    n_outfits: int,
    n_categories: int,
    items_per_category: int,
    planted_groups: int,
    noise: float,
    seed: int,
    signal_scale: float = 2.0,
    feature_noise: float = 0.1,
) -> SyntheticDataset:
    """Generate a deterministic dataset with group-planted compatibility.

    Each item belongs to a latent group; a positive outfit draws its items
    from one group, except a ``noise`` fraction of cross-group picks.
    Visual features concatenate a group one-hot (scaled by signal_scale)
    and a category one-hot, plus seeded Gaussian jitter, so the planted
    structure is learnable and a Bayes oracle over the latent labels exists.
    """
    if planted_groups < 2:
        raise ValueError("planted_groups must be >= 2")
    if n_categories < 4:
        raise ValueError("n_categories must be >= 4")
    if items_per_category < planted_groups:
        raise ValueError("items_per_category must be >= planted_groups")
    if n_outfits < 1:
        raise ValueError("n_outfits must be >= 1")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be in [0, 1]")

    rng = np.random.default_rng(seed)
    dim = planted_groups + n_categories
    items: dict[str, Item] = {}
    visual: dict[str, np.ndarray] = {}
    item_group: dict[str, int] = {}
    by_cat_group: dict[tuple[int, int], list[str]] = {}
    by_cat: dict[int, list[str]] = {}
    for cat in range(n_categories):
        for slot in range(items_per_category):
            group = slot % planted_groups
            item_id = f"c{cat}_{slot}"
            items[item_id] = Item(
                item_id=item_id,
                category_id=cat,
                name=f"group{group} cat{cat} tone{slot}",
            )
            vec = np.zeros(dim)
            vec[group] = signal_scale
            vec[planted_groups + cat] = 1.0
            vec += feature_noise * rng.standard_normal(dim)
            visual[item_id] = vec
            item_group[item_id] = group
            by_cat_group.setdefault((cat, group), []).append(item_id)
            by_cat.setdefault(cat, []).append(item_id)

    # small outfits keep the one-item corruption visible in the pooled score
    max_size = min(5, n_categories)
    outfits: list[Outfit] = []
    outfit_group: dict[str, int] = {}
    for k in range(n_outfits):
        size = int(rng.integers(3, max_size + 1))
        cats = rng.choice(n_categories, size=size, replace=False)
        group = int(rng.integers(planted_groups))
        member_ids: list[str] = []
        for cat in cats:
            if noise > 0 and rng.random() < noise:
                pool = by_cat[int(cat)]
            else:
                pool = by_cat_group[(int(cat), group)]
            member_ids.append(pool[int(rng.integers(len(pool)))])
        set_id = f"s{k}"
        outfits.append(Outfit(set_id, tuple(member_ids)))
        outfit_group[set_id] = group
    return SyntheticDataset(
        outfits=outfits,
        items=items,
        visual=visual,
        item_group=item_group,
        outfit_group=outfit_group,
        n_groups=planted_groups,
    )


def write_split_manifest(split: DatasetSplit, path) -> None:
    """Newline-delimited ``set_id<TAB>split`` manifest, deterministic order."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, outfits in (
            ("train", split.train),
            ("validation", split.validation),
            ("test", split.test),
        ):
            for outfit in outfits:
                fh.write(f"{outfit.set_id}\t{name}\n")


def read_split_manifest(path, outfits: list[Outfit]) -> DatasetSplit:
    """Rebuild a DatasetSplit from a manifest plus the outfit list."""
    by_id = {o.set_id: o for o in outfits}
    buckets: dict[str, list[Outfit]] = {"train": [], "validation": [], "test": []}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                set_id, split_name = line.split("\t")
                buckets[split_name].append(by_id[set_id])
            except (ValueError, KeyError) as exc:
                raise ParseError(f"bad manifest line {lineno}: {exc}") from exc
    return DatasetSplit(buckets["train"], buckets["validation"], buckets["test"])
