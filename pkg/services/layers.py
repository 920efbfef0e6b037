# services/layers.py
"""
The stages of one learner: embedding lookup, k-gram convolution, BiGRU,
attention pooling and the softmax head.

Every stage takes an optional leading batch axis: [n, m] or [B, n, m] in,
matching rank out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from models import LearnerSpec
from services import tensor_autodiff as ad
from services.errors import ContractError, DimensionError
from services.tensor_autodiff import Parameter, Tensor
from services.text_pipeline import EmbeddingTable


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int, name: str) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=shape), name=name)


def zeros(shape: Tuple[int, ...], name: str) -> Parameter:
    return Parameter(np.zeros(shape), name=name)


@dataclass
class ConvParams:
    kernel_size: int
    filters: Parameter          # [k, m, f]
    bias: Parameter             # [f]
    activation: str = "relu"

    def parameters(self) -> List[Parameter]:
        return [self.filters, self.bias]


@dataclass
class GruDirection:
    W_z: Parameter
    W_r: Parameter
    W_h: Parameter
    U_z: Parameter
    U_r: Parameter
    U_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter

    def parameters(self) -> List[Parameter]:
        return [self.W_z, self.W_r, self.W_h, self.U_z, self.U_r, self.U_h, self.b_z, self.b_r, self.b_h]


@dataclass
class GruParams:
    units: int
    forward: GruDirection
    backward: GruDirection

    def parameters(self) -> List[Parameter]:
        return self.forward.parameters() + self.backward.parameters()


@dataclass
class AttentionParams:
    W_a: Parameter              # [2u, d_a]
    b_a: Parameter              # [d_a]
    v: Parameter                # [d_a]

    def parameters(self) -> List[Parameter]:
        return [self.W_a, self.b_a, self.v]


@dataclass
class HeadParams:
    W_o: Parameter              # [width, c]
    b_o: Parameter              # [c]

    def parameters(self) -> List[Parameter]:
        return [self.W_o, self.b_o]


@dataclass
class LearnerParams:
    spec: LearnerSpec
    head: HeadParams
    conv: Optional[ConvParams] = None
    gru: Optional[GruParams] = None
    attention: Optional[AttentionParams] = None

    def parameters(self) -> List[Parameter]:
        out: List[Parameter] = []
        for stage in (self.conv, self.gru, self.attention, self.head):
            if stage is not None:
                out.extend(stage.parameters())
        return out

    def named_parameters(self) -> Dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}


def init_conv(rng: np.random.Generator, k: int, m: int, f: int, activation: str, prefix: str) -> ConvParams:
    return ConvParams(
        kernel_size=k,
        filters=glorot_uniform(rng, (k, m, f), k * m, k * f, f"{prefix}conv.filters"),
        bias=zeros((f,), f"{prefix}conv.bias"),
        activation=activation,
    )


def _init_direction(rng: np.random.Generator, f_in: int, u: int, prefix: str) -> GruDirection:
    w = {g: glorot_uniform(rng, (f_in, u), f_in, u, f"{prefix}W_{g}") for g in "zrh"}
    r = {g: glorot_uniform(rng, (u, u), u, u, f"{prefix}U_{g}") for g in "zrh"}
    b = {g: zeros((u,), f"{prefix}b_{g}") for g in "zrh"}
    return GruDirection(w["z"], w["r"], w["h"], r["z"], r["r"], r["h"], b["z"], b["r"], b["h"])


def init_gru(rng: np.random.Generator, f_in: int, u: int, prefix: str) -> GruParams:
    return GruParams(
        units=u,
        forward=_init_direction(rng, f_in, u, f"{prefix}gru.fwd."),
        backward=_init_direction(rng, f_in, u, f"{prefix}gru.bwd."),
    )


def init_attention(rng: np.random.Generator, width: int, d_a: int, prefix: str) -> AttentionParams:
    return AttentionParams(
        W_a=glorot_uniform(rng, (width, d_a), width, d_a, f"{prefix}att.W_a"),
        b_a=zeros((d_a,), f"{prefix}att.b_a"),
        v=glorot_uniform(rng, (d_a,), d_a, 1, f"{prefix}att.v"),
    )


def init_head(rng: np.random.Generator, width: int, c: int, prefix: str) -> HeadParams:
    return HeadParams(
        W_o=glorot_uniform(rng, (width, c), width, c, f"{prefix}head.W_o"),
        b_o=zeros((c,), f"{prefix}head.b_o"),
    )


def init_learner(
    spec: LearnerSpec,
    m: int,
    c: int,
    rng: np.random.Generator,
    conv_activation: str = "relu",
    prefix: str = "",
) -> LearnerParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed stage order."""
    if c < 2:
        raise ContractError(f"a classifier needs at least 2 classes, got {c}")
    conv = init_conv(rng, spec.kernel_size, m, spec.filters, conv_activation, prefix) if spec.use_conv else None
    gru_in = spec.filters if spec.use_conv else m
    gru = init_gru(rng, gru_in, spec.units, prefix) if spec.use_gru else None
    attention = init_attention(rng, 2 * spec.units, spec.attention_width, prefix) if spec.use_attention else None
    head = init_head(rng, spec.pooled_width, c, prefix)
    return LearnerParams(spec=spec, head=head, conv=conv, gru=gru, attention=attention)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def embed_lookup(token_ids: np.ndarray, table: EmbeddingTable) -> Tensor:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim not in (1, 2) or ids.shape[-1] < 1:
        raise DimensionError(f"embed_lookup: expected [n] or [B, n] ids with n >= 1, got {list(ids.shape)}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.rows):
        raise ContractError(f"embed_lookup: token id outside vocabulary [0, {table.rows})")
    return ad.gather(table.matrix, ids)


def conv_kgram(x: Tensor, p: ConvParams) -> Tensor:
    """Valid stride-1 convolution over k-grams; row j scores tokens j..j+k-1. No pooling."""
    n, m = x.shape[-2], x.shape[-1]
    k = p.kernel_size
    if n < k:
        raise DimensionError(f"conv_kgram: sequence length n={n} is shorter than kernel size k={k}")
    if p.filters.shape[:2] != (k, m):
        raise DimensionError(f"conv_kgram: filters {list(p.filters.shape)} do not fit k={k}, m={m}")
    rows = n - k + 1
    out: Optional[Tensor] = None
    for i in range(k):
        term = ad.matmul(ad.slice_axis(x, -2, i, i + rows), ad.select(p.filters, 0, i))
        out = term if out is None else ad.add(out, term)
    out = ad.add_bias(out, p.bias)
    if p.activation == "relu":
        out = ad.relu(out)
    return out


def _gru_direction(seq: Tensor, d: GruDirection, order: range) -> Tensor:
    # input projections for all steps at once, recurrence per step
    xz = ad.add_bias(ad.matmul(seq, d.W_z), d.b_z)
    xr = ad.add_bias(ad.matmul(seq, d.W_r), d.b_r)
    xh = ad.add_bias(ad.matmul(seq, d.W_h), d.b_h)
    units = d.U_z.shape[0]
    h = Tensor(np.zeros(seq.shape[:-2] + (units,)))
    states: List[Optional[Tensor]] = [None] * seq.shape[-2]
    for t in order:
        z = ad.sigmoid(ad.add(ad.select(xz, -2, t), ad.matmul(h, d.U_z)))
        r = ad.sigmoid(ad.add(ad.select(xr, -2, t), ad.matmul(h, d.U_r)))
        cand = ad.tanh(ad.add(ad.select(xh, -2, t), ad.matmul(ad.mul(r, h), d.U_h)))
        h = ad.add(h, ad.mul(z, ad.sub(cand, h)))
        states[t] = h
    return ad.stack(states, axis=-2)


def bigru_forward(seq: Tensor, p: GruParams) -> Tensor:
    """[..., T, f] -> [..., T, 2u]; row t is [forward h_t ; backward h_t], both from zero state."""
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise DimensionError(f"bigru_forward: expected [T, f] with T >= 1, got {list(seq.shape)}")
    if seq.shape[-1] != p.forward.W_z.shape[0]:
        raise DimensionError(f"bigru_forward: input width {seq.shape[-1]} != gate input {p.forward.W_z.shape[0]}")
    steps = seq.shape[-2]
    fwd = _gru_direction(seq, p.forward, range(steps))
    bwd = _gru_direction(seq, p.backward, range(steps - 1, -1, -1))
    return ad.concat([fwd, bwd], axis=-1)


def attention_pool(states: Tensor, p: AttentionParams) -> Tuple[Tensor, Tensor]:
    """alpha = sum_j softmax(v . tanh(W_a s_j + b_a))_j * s_j."""
    if states.ndim < 2 or states.shape[-2] < 1:
        raise DimensionError(f"attention_pool: expected [T, 2u] with T >= 1, got {list(states.shape)}")
    scores = ad.matmul(ad.tanh(ad.add_bias(ad.matmul(states, p.W_a), p.b_a)), p.v)
    weights = ad.softmax(scores, axis=-1)
    return ad.weighted_sum(weights, states), weights


def final_states(states: Tensor, units: int) -> Tensor:
    """Last forward state joined with the backward state at t=0 (the cnn_bigru pooling)."""
    steps = states.shape[-2]
    fwd = ad.slice_axis(ad.select(states, -2, steps - 1), -1, 0, units)
    bwd = ad.slice_axis(ad.select(states, -2, 0), -1, units, 2 * units)
    return ad.concat([fwd, bwd], axis=-1)


def classify(alpha: Tensor, p: HeadParams) -> Tensor:
    return ad.softmax(ad.add_bias(ad.matmul(alpha, p.W_o), p.b_o), axis=-1)


def learner_forward(
    token_ids: np.ndarray,
    table: EmbeddingTable,
    params: LearnerParams,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
    trace: Optional[Dict[str, Tuple[int, ...]]] = None,
) -> Tensor:
    """
    embed -> dropout -> conv -> dropout -> bigru -> dropout -> attention -> dropout -> softmax.
    Stages switched off in the learner spec are skipped; inference mode is deterministic.
    """
    def mark(stage: str, t: Tensor) -> None:
        if trace is not None:
            trace[stage] = t.shape

    x = embed_lookup(token_ids, table)
    mark("embed", x)
    x = ad.dropout(x, dropout, rng, training)
    if params.conv is not None:
        x = conv_kgram(x, params.conv)
        mark("conv", x)
        x = ad.dropout(x, dropout, rng, training)
    if params.gru is not None:
        x = bigru_forward(x, params.gru)
        mark("bigru", x)
        x = ad.dropout(x, dropout, rng, training)
    if params.attention is not None:
        x, _ = attention_pool(x, params.attention)
    elif params.gru is not None:
        x = final_states(x, params.gru.units)
    else:
        x = ad.mean_axis(x, -2)
    mark("pooled", x)
    x = ad.dropout(x, dropout, rng, training)
    probs = classify(x, params.head)
    mark("probs", probs)
    return probs
