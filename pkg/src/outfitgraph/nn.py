"""Numeric core: parameter initialization, Adam/RMSProp, finite-difference
gradient checking, and the binary checkpoint format.

All compute is float64; parameters live in plain ``dict[str, np.ndarray]``
maps with deterministic (insertion) iteration order. Names whose last
path segment starts with ``b`` are treated as biases (zero-initialized,
excluded from L2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, NumericError, StructureError

Params = dict[str, np.ndarray]

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


def is_bias(name: str) -> bool:
    return name.rsplit("/", 1)[-1].startswith("b")


def init_params(spec: list[tuple[str, tuple[int, ...]]], seed: int) -> Params:
    """Glorot-uniform weights, zero biases, deterministic under seed."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in spec:
        if name in params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if any(s <= 0 for s in shape):
            raise ValueError(f"non-positive shape {shape} for {name!r}")
        if is_bias(name):
            params[name] = np.zeros(shape)
        else:
            fan_out = shape[0]
            fan_in = shape[1] if len(shape) > 1 else 1
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zeros_like_params(params: Params) -> Params:
    return {name: np.zeros_like(value) for name, value in params.items()}


def check_aligned(params: Params, grads: Params) -> None:
    if params.keys() != grads.keys():
        missing = params.keys() ^ grads.keys()
        raise StructureError(f"gradient/parameter name mismatch: {sorted(missing)}")
    for name in params:
        if params[name].shape != grads[name].shape:
            raise StructureError(
                f"shape mismatch for {name!r}: "
                f"{params[name].shape} vs {grads[name].shape}"
            )


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update; pure (returns fresh maps)."""
    check_aligned(params, grads)
    if not state.m:
        state = AdamState(state.lr, state.beta1, state.beta2, state.eps, 0,
                          zeros_like_params(params), zeros_like_params(params))
    t = state.step + 1
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, theta in params.items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new_params[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)


@dataclass
class RMSPropState:
    lr: float = 0.001
    decay: float = 0.9
    eps: float = 1e-8
    step: int = 0
    v: Params = field(default_factory=dict)


def rmsprop_step(
    params: Params, grads: Params, state: RMSPropState
) -> tuple[Params, RMSPropState]:
    """Plain RMSProp (no momentum); pure."""
    check_aligned(params, grads)
    if not state.v:
        state = RMSPropState(state.lr, state.decay, state.eps, 0, zeros_like_params(params))
    new_params: Params = {}
    new_v: Params = {}
    for name, theta in params.items():
        g = grads[name]
        v = state.decay * state.v[name] + (1 - state.decay) * g * g
        new_params[name] = theta - state.lr * g / (np.sqrt(v) + state.eps)
        new_v[name] = v
    return new_params, RMSPropState(state.lr, state.decay, state.eps, state.step + 1, new_v)


def grad_check(loss_fn, analytic_fn, params: Params, h: float = 1e-5,
               extrapolate: bool = False):
    """Central finite differences against analytic gradients.

    Returns (max relative error, worst coordinate name). Relative error is
    |a - n| / max(|a|, |n|, 1e-8) per coordinate. With ``extrapolate`` the
    h and h/2 central differences are Richardson-combined, which removes
    the h^2 truncation term and lets a larger h (e.g. 1e-3) keep roundoff
    cancellation negligible even on tiny-gradient coordinates.
    """
    analytic = analytic_fn(params)
    check_aligned(params, analytic)
    worst = 0.0
    worst_name = ""
    work = {name: value.copy() for name, value in params.items()}
    for name, theta in work.items():
        flat = theta.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]

            def central(step: float) -> float:
                flat[i] = saved + step
                up = loss_fn(work)
                flat[i] = saved - step
                down = loss_fn(work)
                flat[i] = saved
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NumericError(f"non-finite loss while probing {name}[{i}]")
                return (up - down) / (2 * step)

            if extrapolate:
                numeric = (4 * central(h / 2) - central(h)) / 3
            else:
                numeric = central(h)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            err = abs(a_flat[i] - numeric) / denom
            if err > worst:
                worst = err
                worst_name = f"{name}[{i}]"
    return worst, worst_name


def _write_tensor_section(fh, tensors: Params) -> None:
    fh.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<B", value.ndim))
        for dim in value.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return buf


def _read_tensor_section(fh) -> Params:
    (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
    tensors: Params = {}
    for record in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2, f"name length {record}"))
        name = _read_exact(fh, name_len, f"name {record}").decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"rank of {name}"))
        shape = tuple(
            struct.unpack("<I", _read_exact(fh, 4, f"dim of {name}"))[0]
            for _ in range(rank)
        )
        size = int(np.prod(shape)) if shape else 1
        payload = _read_exact(fh, 8 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return tensors


def save_checkpoint(path, params: Params, meta: dict[str, str] | None = None,
                    opt_tensors: Params | None = None) -> None:
    """Write params (+ optional optimizer tensors) with string metadata."""
    meta = meta or {}
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<H", CKPT_VERSION))
        fh.write(struct.pack("<H", len(meta)))
        for key, value in meta.items():
            for text in (key, value):
                encoded = str(text).encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
        _write_tensor_section(fh, params)
        _write_tensor_section(fh, opt_tensors or {})


def load_checkpoint(path) -> tuple[Params, dict[str, str], Params]:
    """Read back (params, meta, optimizer tensors)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (n_meta,) = struct.unpack("<H", _read_exact(fh, 2, "meta count"))
        meta: dict[str, str] = {}
        for _ in range(n_meta):
            (key_len,) = struct.unpack("<H", _read_exact(fh, 2, "meta key length"))
            key = _read_exact(fh, key_len, "meta key").decode("utf-8")
            (val_len,) = struct.unpack("<H", _read_exact(fh, 2, "meta value length"))
            meta[key] = _read_exact(fh, val_len, "meta value").decode("utf-8")
        params = _read_tensor_section(fh)
        opt_tensors = _read_tensor_section(fh)
    return params, meta, opt_tensors
