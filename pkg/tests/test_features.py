import numpy as np
import pytest

from outfitgraph.data import Item
from outfitgraph.errors import FeatureLookupError, FormatError
from outfitgraph.features import (
    EmbeddingStore,
    ModalityConfig,
    build_vocabulary,
    encode_text,
    get_features,
    read_store,
    text_store,
    write_store,
)


def item(name, item_id="i1", category_id=0):
    return Item(item_id=item_id, category_id=category_id, name=name)


class TestVocabulary:
    def test_empty(self):
        assert len(build_vocabulary([])) == 0

    def test_min_frequency(self):
        vocab = build_vocabulary([item("red dress"), item("red hat", "i2")],
                                 min_frequency=2)
        assert vocab.words == ("red",)

    def test_ordering_frequency_then_lexicographic(self):
        vocab = build_vocabulary(
            [item("b a"), item("a c", "i2"), item("c", "i3")], min_frequency=1)
        assert vocab.words == ("a", "c", "b")

    def test_permutation_invariant(self):
        items = [item(n, f"i{k}") for k, n in
                 enumerate(["silk scarf", "red silk dress", "red shoes", "hat"])]
        forward = build_vocabulary(items, 1)
        backward = build_vocabulary(items[::-1], 1)
        assert forward == backward

    def test_tokenizer_lowercase_nonalnum(self):
        vocab = build_vocabulary([item("Red-Dress!! 2x")], 1)
        assert set(vocab.words) == {"red", "dress", "2x"}


class TestEncodeText:
    def vocab(self, *words):
        from outfitgraph.features import Vocabulary
        return Vocabulary(tuple(words))

    def test_basic(self):
        vec = encode_text(item("red dress"), self.vocab("red", "dress", "hat"))
        assert vec.tolist() == [1.0, 1.0, 0.0]

    def test_unknown_tokens_all_zero(self):
        vec = encode_text(item("quux zzz"), self.vocab("red", "dress"))
        assert vec.tolist() == [0.0, 0.0]

    def test_presence_not_count(self):
        vec = encode_text(item("red red red"), self.vocab("red"))
        assert vec.tolist() == [1.0]

    def test_length_and_binary(self):
        rng = np.random.default_rng(0)
        words = tuple(f"w{k}" for k in range(30))
        vocab = self.vocab(*words)
        for _ in range(50):
            tokens = rng.choice(list(words) + ["unk1", "unk2"], size=rng.integers(0, 9))
            vec = encode_text(item(" ".join(tokens)), vocab)
            assert vec.shape == (30,)
            assert set(np.unique(vec)) <= {0.0, 1.0}


class TestStoreRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        for trial in range(20):
            dim = int(rng.integers(1, 40))
            ids = [f"item_{k}" for k in range(int(rng.integers(1, 15)))]
            vectors = {
                i: rng.standard_normal(dim).astype(np.float32).astype(np.float64)
                for i in ids
            }
            store = EmbeddingStore(dim=dim, vectors=vectors)
            path = tmp_path / f"s{trial}.embd"
            write_store(store, path)
            loaded = read_store(path)
            assert loaded.dim == dim
            assert list(loaded.vectors) == ids  # order preserved
            for i in ids:
                assert np.array_equal(loaded.vectors[i], vectors[i])

    def test_exact_byte_layout(self, tmp_path):
        store = EmbeddingStore(dim=2, vectors={"a_1": np.array([1.0, 2.0])})
        path = tmp_path / "one.embd"
        write_store(store, path)
        # magic + u16 + u32 + u64 + (u16 + 3 id bytes) + 2 * f32
        assert path.stat().st_size == 4 + 2 + 4 + 8 + (2 + 3) + 2 * 4

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.embd"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(FormatError):
            read_store(path)

    def test_truncated_names_record(self, tmp_path):
        store = EmbeddingStore(dim=3, vectors={
            "a": np.zeros(3), "b": np.ones(3)})
        path = tmp_path / "t.embd"
        write_store(store, path)
        clipped = path.read_bytes()[:-5]
        path.write_bytes(clipped)
        with pytest.raises(FormatError, match="record 1"):
            read_store(path)

    def test_write_rejects_bad_vectors(self, tmp_path):
        with pytest.raises(ValueError):
            write_store(EmbeddingStore(dim=2, vectors={"a": np.zeros(3)}),
                        tmp_path / "x.embd")
        with pytest.raises(ValueError):
            write_store(EmbeddingStore(dim=1, vectors={"a": np.array([np.nan])}),
                        tmp_path / "y.embd")


class TestGetFeatures:
    def make_stores(self):
        visual = EmbeddingStore(dim=4, vectors={"a": np.arange(4.0)})
        textual = EmbeddingStore(dim=2, vectors={"a": np.array([1.0, 0.0])})
        return {"visual": visual, "textual": textual}

    def test_single_modes(self):
        stores = self.make_stores()
        vis = get_features("a", ModalityConfig("visual"), stores)
        assert np.array_equal(vis, np.arange(4.0))
        txt = get_features("a", ModalityConfig("textual"), stores)
        assert np.array_equal(txt, np.array([1.0, 0.0]))

    def test_multimodal_matches_single(self):
        stores = self.make_stores()
        vis, txt = get_features("a", ModalityConfig("multimodal", 0.2), stores)
        assert np.array_equal(vis, get_features("a", ModalityConfig("visual"), stores))
        assert np.array_equal(txt, get_features("a", ModalityConfig("textual"), stores))

    def test_missing_item_names_id_and_modality(self):
        stores = self.make_stores()
        with pytest.raises(FeatureLookupError) as err:
            get_features("ghost", ModalityConfig("textual"), stores)
        assert "ghost" in str(err.value) and "textual" in str(err.value)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ModalityConfig("audio")
        with pytest.raises(ValueError):
            ModalityConfig("multimodal", 1.5)


def test_text_store_covers_all_items():
    items = [item("red dress", "i1"), item("red hat", "i2")]
    vocab = build_vocabulary(items, 1)
    store = text_store(items, vocab)
    assert store.dim == len(vocab)
    assert set(store.vectors) == {"i1", "i2"}
