import numpy as np
import pytest

from outfitgraph.data import generate_synthetic
from outfitgraph.features import (
    EmbeddingStore,
    ModalityConfig,
    build_vocabulary,
    text_store,
)
from outfitgraph.graphs import build_cooccurrence_graph
from outfitgraph.models import CompatModel, ModelConfig, build_param_spec
from outfitgraph.nn import init_params


@pytest.fixture
def tiny_world():
    """Small deterministic synthetic dataset with both feature stores."""
    syn = generate_synthetic(
        n_outfits=30, n_categories=6, items_per_category=6,
        planted_groups=2, noise=0.0, seed=7,
    )
    visual = EmbeddingStore(dim=next(iter(syn.visual.values())).size,
                            vectors=syn.visual)
    vocab = build_vocabulary(list(syn.items.values()), min_frequency=1)
    textual = text_store(list(syn.items.values()), vocab)
    graph = build_cooccurrence_graph(syn.outfits, syn.items)
    return {
        "syn": syn,
        "items": syn.items,
        "outfits": syn.outfits,
        "stores": {"visual": visual, "textual": textual},
        "graph": graph,
        "categories": tuple(sorted({i.category_id for i in syn.items.values()})),
    }


def make_model(world, kind="ngnn", mode="visual", hidden_d=4, steps=3,
               seed=13, beta=0.2):
    """Model + randomly perturbed params over the tiny world."""
    stores = world["stores"]
    config = ModelConfig(
        kind=kind,
        modality=ModalityConfig(mode, beta),
        categories=world["categories"],
        channel_dims={"visual": stores["visual"].dim,
                      "textual": stores["textual"].dim},
        hidden_d=hidden_d,
        steps=steps,
    )
    model = CompatModel(config, world["graph"] if kind == "ngnn" else None)
    params = init_params(build_param_spec(config), seed=seed)
    rng = np.random.default_rng(seed)
    params = {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in params.items()}
    return model, params
