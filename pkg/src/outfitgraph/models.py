"""Compatibility scoring models.

Both models share one pipeline: category-specific input mapping, T rounds
of softmax-weighted message passing with a GRU update cell, and gated
attention pooling into a single score in (0, 1). They differ only in where
the per-outfit adjacency comes from: the induced co-occurrence subgraph
(category-graph model) or the key/mediator conversion of the outfit's own
hyperedge (hypergraph model).

Backward passes are derived by hand layer by layer and verified against
central finite differences (see nn.grad_check); no autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Item, Outfit
from .errors import ModelError, StructureError
from .features import EmbeddingStore, ModalityConfig
from .graphs import CategoryGraph, OutfitSubgraph, extract_subgraph, hyperedge_subgraph
from .nn import Params

MODEL_KINDS = ("ngnn", "hgnn")

_GATES = ("z", "r", "h")


def sigmoid(x):
    # tanh form is stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    modality: ModalityConfig
    categories: tuple[int, ...]
    channel_dims: dict[str, int]
    hidden_d: int = 12
    steps: int = 3

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for channel, _ in self.modality.channels():
            if channel not in self.channel_dims:
                raise ValueError(f"missing input dim for channel {channel!r}")

    @property
    def cat_index(self) -> dict[int, int]:
        return {c: i for i, c in enumerate(self.categories)}


def build_param_spec(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Named shapes for every learnable tensor of the configured model."""
    d = config.hidden_d
    n_cat = len(config.categories)
    spec: list[tuple[str, tuple[int, ...]]] = []
    for channel, _ in config.modality.channels():
        in_dim = config.channel_dims[channel]
        for cat in config.categories:
            spec.append((f"{channel}/W_map_{cat}", (d, in_dim)))
            spec.append((f"{channel}/b_map_{cat}", (d,)))
        spec.append((f"{channel}/edge_w", (n_cat, n_cat)))
        for gate in _GATES:
            spec.append((f"{channel}/W_{gate}", (d, d)))
            spec.append((f"{channel}/U_{gate}", (d, d)))
            spec.append((f"{channel}/b_{gate}", (d,)))
        spec.append((f"{channel}/W_att", (d, d)))
        spec.append((f"{channel}/u_att", (d,)))
        spec.append((f"{channel}/v_out", (d,)))
    return spec


def init_node_states(cats, payloads, params: Params, prefix: str):
    """h_i^0 = tanh(W_c x + b_c), averaged over the node's items."""
    per_node_tanh: list[list[np.ndarray]] = []
    rows: list[np.ndarray] = []
    for cat, vectors in zip(cats, payloads):
        w_name = f"{prefix}/W_map_{cat}"
        if w_name not in params:
            raise ModelError(f"category {cat} has no parameters in channel {prefix!r}")
        W = params[w_name]
        b = params[f"{prefix}/b_map_{cat}"]
        transformed = []
        for x in vectors:
            if x.shape != (W.shape[1],):
                raise StructureError(
                    f"feature dim {x.shape} does not match W_map_{cat} {W.shape}"
                )
            transformed.append(np.tanh(W @ x + b))
        per_node_tanh.append(transformed)
        rows.append(np.mean(transformed, axis=0))
    return np.array(rows), per_node_tanh


@dataclass
class StepCache:
    h_prev: np.ndarray
    messages: np.ndarray
    softmax: list[np.ndarray | None]
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray


def propagate(h0, cats, neighbors, params: Params, prefix: str,
              cat_index: dict[int, int], steps: int):
    """T rounds of weighted message passing + GRU update.

    Messages use a softmax over each node's active in-neighbors of the
    learned pairwise category weights; isolated nodes get a zero message
    but still pass through the update cell.
    """
    E = params[f"{prefix}/edge_w"]
    gates = {g: (params[f"{prefix}/W_{g}"], params[f"{prefix}/U_{g}"],
                 params[f"{prefix}/b_{g}"]) for g in _GATES}
    n = h0.shape[0]
    h = h0
    step_caches: list[StepCache] = []
    for _ in range(steps):
        messages = np.zeros_like(h)
        softmaxes: list[np.ndarray | None] = []
        for i in range(n):
            nb = neighbors[i]
            if not nb:
                softmaxes.append(None)
                continue
            logits = np.array([E[cat_index[cats[j]], cat_index[cats[i]]] for j in nb])
            shifted = np.exp(logits - logits.max())
            weights = shifted / shifted.sum()
            messages[i] = weights @ h[nb]
            softmaxes.append(weights)
        Wz, Uz, bz = gates["z"]
        Wr, Ur, br = gates["r"]
        Wh, Uh, bh = gates["h"]
        z = sigmoid(messages @ Wz.T + h @ Uz.T + bz)
        r = sigmoid(messages @ Wr.T + h @ Ur.T + br)
        c = np.tanh(messages @ Wh.T + (r * h) @ Uh.T + bh)
        h_next = (1 - z) * h + z * c
        step_caches.append(StepCache(h, messages, softmaxes, z, r, c))
        h = h_next
    return h, step_caches


@dataclass
class AttentionCache:
    h: np.ndarray
    t_att: np.ndarray
    alpha: np.ndarray
    s: np.ndarray


def attention_score(h, params: Params, prefix: str) -> tuple[float, AttentionCache]:
    """Gated attention pool: S = mean_i sigmoid(u.tanh(W_a h_i)) * sigmoid(v.h_i)."""
    Wa = params[f"{prefix}/W_att"]
    u = params[f"{prefix}/u_att"]
    v = params[f"{prefix}/v_out"]
    t_att = np.tanh(h @ Wa.T)
    alpha = sigmoid(t_att @ u)
    s = sigmoid(h @ v)
    score = float(np.mean(alpha * s))
    return score, AttentionCache(h, t_att, alpha, s)


@dataclass
class ChannelCache:
    prefix: str
    cats: tuple[int, ...]
    neighbors: list[list[int]]
    payloads: list[list[np.ndarray]]
    init_tanh: list[list[np.ndarray]]
    h0: np.ndarray
    steps: list[StepCache]
    attention: AttentionCache
    score: float


def forward_channel(subgraph: OutfitSubgraph, params: Params, prefix: str,
                    cat_index: dict[int, int], steps: int) -> tuple[float, ChannelCache]:
    cats = subgraph.active_nodes
    payloads = [subgraph.node_payload[c] for c in cats]
    neighbors = subgraph.neighbors()
    h0, init_tanh = init_node_states(cats, payloads, params, prefix)
    h_final, step_caches = propagate(h0, cats, neighbors, params, prefix,
                                     cat_index, steps)
    score, att_cache = attention_score(h_final, params, prefix)
    return score, ChannelCache(prefix, cats, neighbors, payloads, init_tanh,
                               h0, step_caches, att_cache, score)


def backward_channel(cache: ChannelCache, params: Params, upstream: float,
                     cat_index: dict[int, int]) -> Params:
    """Exact gradient of (upstream * channel score) w.r.t. touched params."""
    prefix = cache.prefix
    cats = cache.cats
    n = len(cats)
    grads: Params = {}

    def acc(name: str, value) -> None:
        full = f"{prefix}/{name}"
        if full in grads:
            grads[full] = grads[full] + value
        else:
            grads[full] = np.array(value, dtype=np.float64)

    att = cache.attention
    h = att.h
    u = params[f"{prefix}/u_att"]
    v = params[f"{prefix}/v_out"]
    Wa = params[f"{prefix}/W_att"]

    dalpha = upstream * att.s / n
    ds = upstream * att.alpha / n
    dg = dalpha * att.alpha * (1 - att.alpha)
    acc("u_att", att.t_att.T @ dg)
    dt = np.outer(dg, u)
    dav = dt * (1 - att.t_att**2)
    acc("W_att", dav.T @ h)
    dh = dav @ Wa
    dp = ds * att.s * (1 - att.s)
    acc("v_out", h.T @ dp)
    dh = dh + np.outer(dp, v)

    E_grad = None
    for step in reversed(cache.steps):
        h_prev, m = step.h_prev, step.messages
        z, r, c = step.z, step.r, step.c
        Wz, Wr, Wh = (params[f"{prefix}/W_{g}"] for g in _GATES)
        Uz, Ur, Uh = (params[f"{prefix}/U_{g}"] for g in _GATES)

        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1 - z)

        dc_pre = dc * (1 - c**2)
        acc("W_h", dc_pre.T @ m)
        acc("U_h", dc_pre.T @ (r * h_prev))
        acc("b_h", dc_pre.sum(axis=0))
        dm = dc_pre @ Wh
        dq = dc_pre @ Uh
        dr = dq * h_prev
        dh_prev = dh_prev + dq * r

        dr_pre = dr * r * (1 - r)
        acc("W_r", dr_pre.T @ m)
        acc("U_r", dr_pre.T @ h_prev)
        acc("b_r", dr_pre.sum(axis=0))
        dm = dm + dr_pre @ Wr
        dh_prev = dh_prev + dr_pre @ Ur

        dz_pre = dz * z * (1 - z)
        acc("W_z", dz_pre.T @ m)
        acc("U_z", dz_pre.T @ h_prev)
        acc("b_z", dz_pre.sum(axis=0))
        dm = dm + dz_pre @ Wz
        dh_prev = dh_prev + dz_pre @ Uz

        for i in range(n):
            nb = cache.neighbors[i]
            weights = step.softmax[i]
            if not nb or weights is None:
                continue
            h_nb = h_prev[nb]
            dh_prev[nb] += weights[:, None] * dm[i][None, :]
            d_weighted = h_nb @ dm[i]
            dlogit = weights * (d_weighted - weights @ d_weighted)
            if E_grad is None:
                E_grad = np.zeros_like(params[f"{prefix}/edge_w"])
            for pos, j in enumerate(nb):
                E_grad[cat_index[cats[j]], cat_index[cats[i]]] += dlogit[pos]
        dh = dh_prev

    if E_grad is not None:
        acc("edge_w", E_grad)

    for i, cat in enumerate(cats):
        k = len(cache.init_tanh[i])
        for t_vec, x in zip(cache.init_tanh[i], cache.payloads[i]):
            du = (dh[i] / k) * (1 - t_vec**2)
            acc(f"W_map_{cat}", np.outer(du, x))
            acc(f"b_map_{cat}", du)
    return grads


@dataclass
class ForwardCache:
    kind: str
    config_token: int
    channels: list[tuple[float, ChannelCache]] = field(default_factory=list)
    score: float = 0.0


class CompatModel:
    """Scores outfits and computes exact parameter gradients of the score."""

    def __init__(self, config: ModelConfig, category_graph: CategoryGraph | None = None,
                 key_rule=None):
        if config.kind == "ngnn" and category_graph is None:
            raise ValueError("category-graph model requires a co-occurrence graph")
        self.config = config
        self.category_graph = category_graph
        self.key_rule = key_rule
        self._cat_index = config.cat_index

    def _subgraph(self, outfit: Outfit, item_table: dict[str, Item], feature_of):
        if self.config.kind == "ngnn":
            assert self.category_graph is not None
            return extract_subgraph(outfit, self.category_graph, item_table, feature_of)
        try:
            return hyperedge_subgraph(outfit, item_table, feature_of, self.key_rule)
        except StructureError as exc:
            raise ModelError(
                f"outfit {outfit.set_id!r} has < 2 distinct categories"
            ) from exc

    def score_with_cache(self, outfit: Outfit, params: Params,
                         item_table: dict[str, Item],
                         stores: dict[str, EmbeddingStore]) -> tuple[float, ForwardCache]:
        cache = ForwardCache(self.config.kind, id(self))
        total = 0.0
        for channel, coef in self.config.modality.channels():
            store = stores[channel]
            subgraph = self._subgraph(outfit, item_table,
                                      lambda i: store.get(i, channel))
            score, channel_cache = forward_channel(
                subgraph, params, channel, self._cat_index, self.config.steps
            )
            cache.channels.append((coef, channel_cache))
            total += coef * score
        cache.score = total
        return total, cache

    def score(self, outfit: Outfit, params: Params, item_table: dict[str, Item],
              stores: dict[str, EmbeddingStore]) -> float:
        return self.score_with_cache(outfit, params, item_table, stores)[0]

    def backward(self, cache: ForwardCache, params: Params, upstream: float) -> Params:
        """Gradients of (upstream * score); params not touched stay absent."""
        if cache.kind != self.config.kind or cache.config_token != id(self):
            raise StructureError("forward cache does not belong to this model")
        grads: Params = {}
        for coef, channel_cache in cache.channels:
            channel_grads = backward_channel(channel_cache, params,
                                             upstream * coef, self._cat_index)
            for name, value in channel_grads.items():
                if name in grads:
                    grads[name] = grads[name] + value
                else:
                    grads[name] = value
        return grads

    def full_gradients(self, cache: ForwardCache, params: Params,
                       upstream: float) -> Params:
        """Like backward() but zero-filled for untouched parameters."""
        grads = self.backward(cache, params, upstream)
        return {name: grads.get(name, np.zeros_like(value))
                for name, value in params.items()}


def score_outfit(outfit: Outfit, model: CompatModel, params: Params,
                 item_table: dict[str, Item],
                 stores: dict[str, EmbeddingStore]) -> float:
    """Convenience wrapper around CompatModel.score."""
    return model.score(outfit, params, item_table, stores)
