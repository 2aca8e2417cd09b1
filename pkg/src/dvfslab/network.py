"""From-scratch GRU + MLP Q-network in float64 numpy.

Forward evaluation, analytic backpropagation (through time for the recurrent
part), Adam updates and a bit-exact binary weight format. Parameters are
treated as immutable values: updates return new parameter objects.

Recurrent cell, with sigmoid s and elementwise product o:
    z = s(W_z x + U_z h + b_z)
    r = s(W_r x + U_r h + b_r)
    g = tanh(W_h x + U_h (r o h) + b_h)
    h' = (1 - z) o h + z o g
Hidden activations in the MLP are ReLU; the scalar output is linear.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .encoders import EncoderConfig, tegm_tail_length, tem_input_length

MAGIC = b"DVFSNN1"
_VARIANT_CODES = {"tegm": 0, "tem": 1}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_CODES.items()}


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class ArchDescriptor:
    """Network shape; mlp_in must match the encoder arity for the task count."""

    variant: str  # "tegm" (recurrent front end) or "tem" (flat)
    mlp_in: int
    mlp_hidden: int = 30
    gru_in: int = 2
    gru_hidden: int = 6
    mlp_layers: int = 2
    out: int = 1

    def __post_init__(self) -> None:
        if self.variant not in _VARIANT_CODES:
            raise NetworkError(f"unknown variant {self.variant!r}")
        if self.out != 1:
            raise NetworkError("output arity must be 1")
        for name in ("mlp_in", "mlp_hidden", "gru_in", "gru_hidden"):
            if getattr(self, name) < 1:
                raise NetworkError(f"{name} must be >= 1")
        if self.mlp_layers < 1:
            raise NetworkError("mlp_layers must be >= 1")
        if self.variant == "tegm" and self.mlp_in <= self.gru_hidden:
            raise NetworkError("tegm variant needs mlp_in > gru_hidden")

    @property
    def tail_len(self) -> int:
        return self.mlp_in - self.gru_hidden


def build_descriptor(variant: str, enc_cfg: EncoderConfig, mlp_hidden: int) -> ArchDescriptor:
    """Descriptor whose input arity matches the encoder geometry."""
    if variant == "tegm":
        d = ArchDescriptor(variant="tegm", mlp_in=6 + tegm_tail_length(enc_cfg), mlp_hidden=mlp_hidden)
    elif variant == "tem":
        d = ArchDescriptor(variant="tem", mlp_in=tem_input_length(enc_cfg), mlp_hidden=mlp_hidden)
    else:
        raise NetworkError(f"unknown variant {variant!r}")
    return d


@dataclass(frozen=True)
class GruParams:
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray


@dataclass(frozen=True)
class QNetworkParams:
    desc: ArchDescriptor
    gru: Optional[GruParams]
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]  # (W, b) per MLP layer


def param_items(params: QNetworkParams) -> list[tuple[str, np.ndarray]]:
    """(name, array) pairs in declaration order: gate weights then MLP layers."""
    items: list[tuple[str, np.ndarray]] = []
    if params.gru is not None:
        g = params.gru
        items += [
            ("gru.w_z", g.w_z), ("gru.u_z", g.u_z), ("gru.b_z", g.b_z),
            ("gru.w_r", g.w_r), ("gru.u_r", g.u_r), ("gru.b_r", g.b_r),
            ("gru.w_h", g.w_h), ("gru.u_h", g.u_h), ("gru.b_h", g.b_h),
        ]
    for idx, (w, b) in enumerate(params.layers):
        items += [(f"mlp.{idx}.w", w), (f"mlp.{idx}.b", b)]
    return items


def _mlp_dims(desc: ArchDescriptor) -> list[tuple[int, int]]:
    dims = [desc.mlp_in] + [desc.mlp_hidden] * desc.mlp_layers + [desc.out]
    return list(zip(dims[1:], dims[:-1]))  # (out_dim, in_dim) per layer


def init_params(desc: ArchDescriptor, seed: int) -> QNetworkParams:
    """Uniform weights scaled by 1/sqrt(fan_in), zero biases; seed-deterministic."""
    rng = np.random.default_rng(seed)

    def mat(out_dim: int, in_dim: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(in_dim)
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    gru = None
    if desc.variant == "tegm":
        h, d = desc.gru_hidden, desc.gru_in
        gru = GruParams(
            w_z=mat(h, d), u_z=mat(h, h), b_z=np.zeros(h),
            w_r=mat(h, d), u_r=mat(h, h), b_r=np.zeros(h),
            w_h=mat(h, d), u_h=mat(h, h), b_h=np.zeros(h),
        )
    layers = tuple((mat(o, i), np.zeros(o)) for o, i in _mlp_dims(desc))
    return QNetworkParams(desc=desc, gru=gru, layers=layers)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def gru_step(gru: GruParams, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Advance the hidden state by one input; used for incremental evaluation."""
    z = _sigmoid(gru.w_z @ x + gru.u_z @ h + gru.b_z)
    r = _sigmoid(gru.w_r @ x + gru.u_r @ h + gru.b_r)
    g = np.tanh(gru.w_h @ x + gru.u_h @ (r * h) + gru.b_h)
    return (1.0 - z) * h + z * g


def gru_forward(params: QNetworkParams, sequence: Sequence[Sequence[float]]) -> np.ndarray:
    """Final hidden state after consuming the sequence from a zero hidden state.

    The three input projections are batched over the whole sequence up front;
    the per-step loop only touches the recurrent terms.
    """
    if params.gru is None:
        raise NetworkError("this network has no recurrent front end")
    gru = params.gru
    n = params.desc.gru_hidden
    h = np.zeros(n)
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.size == 0:
        return h
    if seq.ndim != 2 or seq.shape[1] != params.desc.gru_in:
        raise NetworkError(
            f"sequence elements must have length {params.desc.gru_in}, got {seq.shape}"
        )
    w_all = np.concatenate([gru.w_z, gru.w_r, gru.w_h])
    b_all = np.concatenate([gru.b_z, gru.b_r, gru.b_h])
    proj = seq @ w_all.T + b_all  # (steps, 3n)
    u_zr = np.concatenate([gru.u_z, gru.u_r])
    for p in proj:
        gates = 1.0 / (1.0 + np.exp(-(p[: 2 * n] + u_zr @ h)))
        z, r = gates[:n], gates[n:]
        g = np.tanh(p[2 * n :] + gru.u_h @ (r * h))
        h = (1.0 - z) * h + z * g
    return h


def _gru_forward_batch(gru: GruParams, seqs: Sequence[np.ndarray], hidden: int):
    """Padded batch evaluation; returns final hiddens and a BPTT cache."""
    batch = len(seqs)
    h = np.zeros((batch, hidden))
    lengths = [len(s) for s in seqs]
    max_len = max(lengths) if lengths else 0
    steps = []
    if max_len == 0:
        return h, steps
    in_dim = gru.w_z.shape[1]
    xs = np.zeros((max_len, batch, in_dim))
    mask = np.zeros((max_len, batch, 1))
    for b, s in enumerate(seqs):
        if len(s):
            xs[: len(s), b, :] = s
            mask[: len(s), b, 0] = 1.0
    for t in range(max_len):
        x, m = xs[t], mask[t]
        z = _sigmoid(x @ gru.w_z.T + h @ gru.u_z.T + gru.b_z)
        r = _sigmoid(x @ gru.w_r.T + h @ gru.u_r.T + gru.b_r)
        rh = r * h
        g = np.tanh(x @ gru.w_h.T + rh @ gru.u_h.T + gru.b_h)
        h_new = (1.0 - z) * h + z * g
        steps.append((x, h, z, r, g, m))
        h = m * h_new + (1.0 - m) * h
    return h, steps


def _gru_backward_batch(gru: GruParams, steps, d_h, grads: dict[str, np.ndarray]) -> None:
    for x, h_prev, z, r, g, m in reversed(steps):
        dh = d_h * m
        d_pass = d_h * (1.0 - m)
        dz = dh * (g - h_prev)
        dg = dh * z
        da_h = dg * (1.0 - g**2)
        da_z = dz * z * (1.0 - z)
        rh = r * h_prev
        grads["gru.w_h"] += da_h.T @ x
        grads["gru.u_h"] += da_h.T @ rh
        grads["gru.b_h"] += da_h.sum(axis=0)
        drh = da_h @ gru.u_h
        da_r = drh * h_prev * r * (1.0 - r)
        grads["gru.w_z"] += da_z.T @ x
        grads["gru.u_z"] += da_z.T @ h_prev
        grads["gru.b_z"] += da_z.sum(axis=0)
        grads["gru.w_r"] += da_r.T @ x
        grads["gru.u_r"] += da_r.T @ h_prev
        grads["gru.b_r"] += da_r.sum(axis=0)
        d_h = dh * (1.0 - z) + da_z @ gru.u_z + da_r @ gru.u_r + drh * r + d_pass


def _mlp_forward_batch(layers, x: np.ndarray):
    acts = [x]
    pre = []
    a = x
    for w, b in layers[:-1]:
        zp = a @ w.T + b
        a = np.maximum(zp, 0.0)
        pre.append(zp)
        acts.append(a)
    w, b = layers[-1]
    y = a @ w.T + b
    return y[:, 0], (acts, pre)


def _mlp_backward_batch(layers, cache, dy: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
    acts, pre = cache
    delta = dy[:, None]
    last = len(layers) - 1
    grads[f"mlp.{last}.w"] += delta.T @ acts[-1]
    grads[f"mlp.{last}.b"] += delta.sum(axis=0)
    da = delta @ layers[last][0]
    for idx in range(last - 1, -1, -1):
        dz = da * (pre[idx] > 0)
        grads[f"mlp.{idx}.w"] += dz.T @ acts[idx]
        grads[f"mlp.{idx}.b"] += dz.sum(axis=0)
        da = dz @ layers[idx][0]
    return da


TegmInputs = tuple[np.ndarray, np.ndarray]
NetInputs = Union[TegmInputs, np.ndarray]


def _validate_inputs(params: QNetworkParams, inputs: NetInputs) -> None:
    desc = params.desc
    if desc.variant == "tegm":
        if not (isinstance(inputs, tuple) and len(inputs) == 2):
            raise NetworkError("tegm networks take (sequence, tail) inputs")
        seq, tail = inputs
        seq = np.asarray(seq, dtype=np.float64)
        if seq.size and (seq.ndim != 2 or seq.shape[1] != desc.gru_in):
            raise NetworkError(f"sequence must be (k, {desc.gru_in}), got {seq.shape}")
        if np.asarray(tail).shape != (desc.tail_len,):
            raise NetworkError(
                f"tail must have length {desc.tail_len}, got {np.asarray(tail).shape}"
            )
    else:
        vec = np.asarray(inputs, dtype=np.float64)
        if vec.shape != (desc.mlp_in,):
            raise NetworkError(f"input must have length {desc.mlp_in}, got {vec.shape}")


def q_forward_batch(params: QNetworkParams, batch: Sequence[NetInputs]):
    """Q values for a batch of encoded inputs; also returns backprop caches."""
    desc = params.desc
    if desc.variant == "tegm":
        seqs = [np.asarray(item[0], dtype=np.float64).reshape(-1, desc.gru_in) for item in batch]
        tails = np.stack([np.asarray(item[1], dtype=np.float64) for item in batch])
        hidden, gru_cache = _gru_forward_batch(params.gru, seqs, desc.gru_hidden)
        x = np.concatenate([hidden, tails], axis=1)
    else:
        x = np.stack([np.asarray(item, dtype=np.float64) for item in batch])
        gru_cache = None
    q, mlp_cache = _mlp_forward_batch(params.layers, x)
    return q, (gru_cache, mlp_cache)


def q_forward(params: QNetworkParams, inputs: NetInputs) -> float:
    """Scalar Q value for one encoded (state, action) input."""
    _validate_inputs(params, inputs)
    if params.desc.variant == "tegm":
        seq, tail = inputs
        hidden = gru_forward(params, seq)
        x = np.concatenate([hidden, np.asarray(tail, dtype=np.float64)])[None, :]
    else:
        x = np.asarray(inputs, dtype=np.float64)[None, :]
    q, _ = _mlp_forward_batch(params.layers, x)
    return float(q[0])


def q_from_hidden(params: QNetworkParams, hidden: np.ndarray, tails: np.ndarray) -> np.ndarray:
    """Q values for several action tails sharing one recurrent hidden state."""
    x = np.concatenate([np.broadcast_to(hidden, (tails.shape[0], hidden.size)), tails], axis=1)
    q, _ = _mlp_forward_batch(params.layers, x)
    return q


def zero_grads(params: QNetworkParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in param_items(params)}


def backward(
    params: QNetworkParams, batch: Sequence[NetInputs], targets: Sequence[float]
) -> tuple[dict[str, np.ndarray], float]:
    """Gradients of mean(0.5 * (Q - target)^2) over the batch, plus the loss."""
    if len(batch) == 0:
        raise NetworkError("batch must be non-empty")
    if len(batch) != len(targets):
        raise NetworkError("batch and targets must have equal length")
    for item in batch:
        _validate_inputs(params, item)
    q, (gru_cache, mlp_cache) = q_forward_batch(params, batch)
    y = np.asarray(targets, dtype=np.float64)
    err = q - y
    loss = float(np.mean(0.5 * err**2))
    dq = err / len(batch)
    grads = zero_grads(params)
    d_input = _mlp_backward_batch(params.layers, mlp_cache, dq, grads)
    if params.desc.variant == "tegm":
        d_hidden = d_input[:, : params.desc.gru_hidden]
        _gru_backward_batch(params.gru, gru_cache, d_hidden, grads)
    return grads, loss


@dataclass(frozen=True)
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(params: QNetworkParams) -> AdamState:
    return AdamState(
        step=0,
        m={name: np.zeros_like(arr) for name, arr in param_items(params)},
        v={name: np.zeros_like(arr) for name, arr in param_items(params)},
    )


def apply_update(
    params: QNetworkParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[QNetworkParams, AdamState]:
    """One Adam step; returns fresh parameter and optimizer-state values."""
    t = state.step + 1
    new_vals: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, arr in param_items(params):
        g = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g**2
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_vals[name] = arr - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return _rebuild(params, new_vals), AdamState(step=t, m=new_m, v=new_v)


def _rebuild(params: QNetworkParams, values: dict[str, np.ndarray]) -> QNetworkParams:
    gru = params.gru
    if gru is not None:
        gru = GruParams(
            w_z=values["gru.w_z"], u_z=values["gru.u_z"], b_z=values["gru.b_z"],
            w_r=values["gru.w_r"], u_r=values["gru.u_r"], b_r=values["gru.b_r"],
            w_h=values["gru.w_h"], u_h=values["gru.u_h"], b_h=values["gru.b_h"],
        )
    layers = tuple(
        (values[f"mlp.{idx}.w"], values[f"mlp.{idx}.b"]) for idx in range(len(params.layers))
    )
    return replace(params, gru=gru, layers=layers)


def clone_params(params: QNetworkParams) -> QNetworkParams:
    return _rebuild(params, {name: arr.copy() for name, arr in param_items(params)})


def serialize(params: QNetworkParams) -> bytes:
    """Magic, descriptor as fixed-width integers, then all matrices row-major
    as 64-bit little-endian floats in declaration order."""
    d = params.desc
    out = [MAGIC]
    out.append(
        struct.pack(
            "<7I",
            _VARIANT_CODES[d.variant],
            d.gru_in,
            d.gru_hidden,
            d.mlp_in,
            d.mlp_hidden,
            d.mlp_layers,
            d.out,
        )
    )
    for _, arr in param_items(params):
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def deserialize(data: bytes) -> QNetworkParams:
    header = len(MAGIC) + struct.calcsize("<7I")
    if len(data) < header:
        raise NetworkError("weight data shorter than the header")
    if data[: len(MAGIC)] != MAGIC:
        raise NetworkError("bad magic: not a weight file of this format")
    code, gru_in, gru_hidden, mlp_in, mlp_hidden, mlp_layers, out = struct.unpack(
        "<7I", data[len(MAGIC) : header]
    )
    if code not in _VARIANT_NAMES:
        raise NetworkError(f"unknown variant code {code}")
    desc = ArchDescriptor(
        variant=_VARIANT_NAMES[code],
        mlp_in=mlp_in,
        mlp_hidden=mlp_hidden,
        gru_in=gru_in,
        gru_hidden=gru_hidden,
        mlp_layers=mlp_layers,
        out=out,
    )
    template = init_params(desc, seed=0)
    shapes = [(name, arr.shape) for name, arr in param_items(template)]
    expected = header + sum(int(np.prod(s)) * 8 for _, s in shapes)
    if len(data) != expected:
        raise NetworkError(
            f"weight data has {len(data)} bytes, expected {expected}: truncated or corrupt"
        )
    values: dict[str, np.ndarray] = {}
    pos = header
    for name, shape in shapes:
        count = int(np.prod(shape))
        values[name] = (
            np.frombuffer(data[pos : pos + count * 8], dtype="<f8").astype(np.float64).reshape(shape)
        )
        pos += count * 8
    return _rebuild(template, values)


def save_weights(params: QNetworkParams, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(params))


def load_weights(path: str) -> QNetworkParams:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
