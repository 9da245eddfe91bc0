"""GRU, LSTM and Transformer regressors over encoder windows.

Weights are plain named numpy arrays; :func:`forward` builds the graph on
the fly.  Linear layers store their matrix as (in, out).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad

KINDS = ("transformer", "lstm", "gru")


class SpecMismatch(ValueError):
    """Weights do not fit the model spec."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    d_model: int
    n_heads: int = 1
    n_layers: int = 2
    p_drop: float = 0.0
    T_w: int = 25
    n_in: int = 6
    n_out: int = 6
    ffn_mult: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if min(self.d_model, self.n_heads, self.n_layers, self.T_w, self.n_in, self.n_out) < 1:
            raise ValueError("sizes must be positive")
        if self.kind == "transformer" and self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0 <= self.p_drop < 1:
            raise ValueError("p_drop must lie in [0, 1)")

    @classmethod
    def default(cls, kind: str) -> "ModelSpec":
        """Reference hyperparameters for each architecture."""
        return {
            "transformer": cls("transformer", 64, 4, 2, 0.2, 25),
            "lstm": cls("lstm", 128, 1, 2, 0.3, 25),
            "gru": cls("gru", 128, 1, 2, 0.2, 25),
        }[kind]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def weight_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape table."""
    d, o = spec.d_model, spec.n_out
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.kind == "transformer":
        f = spec.ffn_mult * d
        shapes["in_w"], shapes["in_b"] = (spec.n_in, d), (d,)
        shapes["pos"] = (spec.T_w, d)
        for l in range(spec.n_layers):
            p = f"blk{l}."
            shapes.update({p + "ln1_g": (d,), p + "ln1_b": (d,),
                           p + "qkv_w": (d, 3 * d), p + "qkv_b": (3 * d,),
                           p + "out_w": (d, d), p + "out_b": (d,),
                           p + "ln2_g": (d,), p + "ln2_b": (d,),
                           p + "ff1_w": (d, f), p + "ff1_b": (f,),
                           p + "ff2_w": (f, d), p + "ff2_b": (d,)})
    else:
        g = 3 if spec.kind == "gru" else 4
        for l in range(spec.n_layers):
            p = f"rnn{l}."
            shapes.update({p + "w_ih": (spec.n_in if l == 0 else d, g * d),
                           p + "w_hh": (d, g * d), p + "b_ih": (g * d,), p + "b_hh": (g * d,)})
    shapes["head_w"], shapes["head_b"] = (d, o), (o,)
    return shapes


def param_count(spec: ModelSpec) -> int:
    """Closed-form parameter count."""
    d, i, o, L = spec.d_model, spec.n_in, spec.n_out, spec.n_layers
    head = d * o + o
    if spec.kind == "transformer":
        f = spec.ffn_mult * d
        block = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * f + f) + (f * d + d)
        return (i * d + d) + spec.T_w * d + L * block + head
    g = 3 if spec.kind == "gru" else 4
    first = g * d * (i + d) + 2 * g * d
    rest = g * d * 2 * d + 2 * g * d
    return first + (L - 1) * rest + head


def macs(spec: ModelSpec) -> int:
    """Multiply-accumulates of one B=1 forward pass.

    Counts every matrix product including attention scores and the
    weighted value sum; elementwise work and normalisation are ignored.
    """
    d, T, i, o = spec.d_model, spec.T_w, spec.n_in, spec.n_out
    if spec.kind == "transformer":
        f = spec.ffn_mult * d
        block = T * (3 * d * d + d * d + 2 * d * f) + 2 * T * T * d
        return T * i * d + spec.n_layers * block + d * o
    g = 3 if spec.kind == "gru" else 4
    total = T * g * d * (i + d) + (spec.n_layers - 1) * T * g * d * 2 * d
    return total + d * o


@dataclass
class WeightSet:
    spec: ModelSpec
    tensors: dict[str, np.ndarray]
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = weight_shapes(self.spec)
        if set(shapes) != set(self.tensors):
            missing = set(shapes) ^ set(self.tensors)
            raise SpecMismatch(f"weight names differ from spec: {sorted(missing)[:4]}")
        for k, s in shapes.items():
            if tuple(np.shape(self.tensors[k])) != s:
                raise SpecMismatch(f"{k}: shape {np.shape(self.tensors[k])} != {s}")

    @property
    def count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def astype(self, dtype) -> "WeightSet":
        return WeightSet(self.spec, {k: v.astype(dtype) for k, v in self.tensors.items()},
                         self.seed, dict(self.meta))

    def copy(self) -> "WeightSet":
        return WeightSet(self.spec, {k: v.copy() for k, v in self.tensors.items()},
                         self.seed, dict(self.meta))


def init_weights(spec: ModelSpec, seed: int = 0, dtype=np.float64) -> WeightSet:
    """Uniform(+-1/sqrt(fan_in)) init; LayerNorm at (1, 0); LSTM forget bias +1."""
    rng = np.random.default_rng([seed, 0x5E0])
    out = {}
    shapes = weight_shapes(spec)
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            out[name] = np.ones(shape)
        elif leaf.startswith("ln") and leaf.endswith("_b"):
            out[name] = np.zeros(shape)
        elif name == "pos":
            out[name] = rng.normal(0.0, 0.02, shape)
        else:
            if len(shape) == 2:
                fan_in = shape[0]
            else:
                # biases share the fan-in of their matrix
                fan_in = shapes[name[:-1] + "w" if name.endswith("_b") else name.replace("b_", "w_")][0]
            bound = 1.0 / math.sqrt(fan_in)
            out[name] = rng.uniform(-bound, bound, shape)
    if spec.kind == "lstm":
        d = spec.d_model
        for l in range(spec.n_layers):
            out[f"rnn{l}.b_ih"][d:2 * d] += 1.0
    return WeightSet(spec, {k: v.astype(dtype) for k, v in out.items()}, seed)


def _linear(x, w, b):
    return ad.matmul(x, w) + b


def forward(spec: ModelSpec, params: dict, X, *, training: bool = False,
            rng: np.random.Generator | None = None) -> ad.Tensor:
    """(B, T_w, n_in) -> (B, n_out).  ``params`` maps names to Tensors/arrays."""
    X = X if isinstance(X, ad.Tensor) else ad.Tensor(X)
    if X.ndim != 3 or X.shape[1:] != (spec.T_w, spec.n_in):
        raise ad.ShapeError(f"expected (B, {spec.T_w}, {spec.n_in}) input, got {X.shape}")
    missing = set(weight_shapes(spec)) - set(params)
    if missing:
        raise SpecMismatch(f"missing weights: {sorted(missing)[:4]}")
    p = spec.p_drop if training else 0.0
    if p and rng is None:
        raise ValueError("training with dropout needs an rng")
    if spec.kind == "transformer":
        h = _transformer(spec, params, X, p, rng)
    else:
        seq_op = ad.gru_sequence if spec.kind == "gru" else ad.lstm_sequence
        h = X
        for l in range(spec.n_layers):
            if l > 0:
                h = ad.dropout(h, p, rng, training)
            pre = f"rnn{l}."
            h = seq_op(h, params[pre + "w_ih"], params[pre + "w_hh"],
                       params[pre + "b_ih"], params[pre + "b_hh"])
        h = h[:, -1, :]
    h = ad.dropout(h, p, rng, training)
    return _linear(h, params["head_w"], params["head_b"])


def _transformer(spec, P, X, p, rng):
    B, T, _ = X.shape
    d, nh = spec.d_model, spec.n_heads
    dh = d // nh
    training = p > 0
    h = _linear(X, P["in_w"], P["in_b"]) + P["pos"]
    for l in range(spec.n_layers):
        pre = f"blk{l}."
        a = ad.layer_norm(h, P[pre + "ln1_g"], P[pre + "ln1_b"])
        qkv = _linear(a, P[pre + "qkv_w"], P[pre + "qkv_b"])
        # (B, T, 3, nh, dh) -> (3, B, nh, T, dh)
        qkv = ad.transpose(ad.reshape(qkv, (B, T, 3, nh, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = ad.softmax(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh)))
        ctx = ad.reshape(ad.transpose(ad.matmul(att, v), (0, 2, 1, 3)), (B, T, d))
        h = h + ad.dropout(_linear(ctx, P[pre + "out_w"], P[pre + "out_b"]), p, rng, training)
        a = ad.layer_norm(h, P[pre + "ln2_g"], P[pre + "ln2_b"])
        f = ad.relu(_linear(a, P[pre + "ff1_w"], P[pre + "ff1_b"]))
        h = h + ad.dropout(_linear(f, P[pre + "ff2_w"], P[pre + "ff2_b"]), p, rng, training)
    return h[:, -1, :]
