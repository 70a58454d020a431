"""Reverse-mode automatic differentiation on a recording tape.

Exactly the primitives the two seq2seq architectures need, in 64-bit floats,
numpy-backed. Ops take an explicit Tape as first argument; pass tape=None for
inference (nothing is recorded, no gradients flow). backward() walks the tape
in exact reverse recording order and accumulates gradients across fan-out.

Deliberately not general: broadcasting is limited to trailing-shape adds
(bias-style), there is no second-order support and no GPU path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    IoError,
    LossError,
    MaskError,
    NumericalError,
    ShapeError,
)

MASK_PENALTY = -1e30


class Tensor:
    """N-dimensional float64 value with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    output: Tensor
    inputs: tuple[Tensor, ...]
    # maps d(output) -> tuple of d(input), None where an input is non-diff
    backward_fn: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tape:
    """Ordered record of primitive applications.

    Acyclic by construction: nodes are appended as ops execute, and backward
    visits them in exact reverse recording order.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward_fn) -> None:
        self.nodes.append(_Node(output, tuple(inputs), backward_fn))
        self._produced.add(id(output))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _wants_grad(tape: Tape | None, *inputs: Tensor) -> bool:
    return tape is not None and any(t.requires_grad for t in inputs)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad of every requires_grad leaf.

    Gradients sum across fan-out; d loss / d loss = 1.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for inp, ig in zip(node.inputs, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            if id(inp) in tape._produced:
                acc = grads.get(id(inp))
                grads[id(inp)] = ig if acc is None else acc + ig
            else:
                inp.grad = ig.copy() if inp.grad is None else inp.grad + ig


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over leading axes so it matches a trailing broadcast shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return g


# --- elementwise and structural primitives ---

def add(tape: Tape | None, x: Tensor, y: Tensor) -> Tensor:
    """x + y; y may have a trailing sub-shape of x (bias-style broadcast)."""
    if x.shape[len(x.shape) - len(y.shape):] != y.shape:
        raise ShapeError(f"add: shapes {x.shape} and {y.shape} do not conform")
    out = Tensor(x.data + y.data, requires_grad=_wants_grad(tape, x, y))
    if out.requires_grad:
        tape.record(out, (x, y), lambda g: (g, _reduce_to(g, y.shape)))
    return out


def add_const(tape: Tape | None, x: Tensor, c) -> Tensor:
    out = Tensor(x.data + c, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record(out, (x,), lambda g: (g,))
    return out


def mul(tape: Tape | None, x: Tensor, y: Tensor) -> Tensor:
    """Elementwise x * y; y may have a trailing sub-shape of x."""
    if x.shape[len(x.shape) - len(y.shape):] != y.shape:
        raise ShapeError(f"mul: shapes {x.shape} and {y.shape} do not conform")
    out = Tensor(x.data * y.data, requires_grad=_wants_grad(tape, x, y))
    if out.requires_grad:
        xd, yd = x.data, y.data
        tape.record(out, (x, y), lambda g: (g * yd, _reduce_to(g * xd, y.shape)))
    return out


def scale(tape: Tape | None, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record(out, (x,), lambda g: (g * c,))
    return out


def matmul(tape: Tape | None, x: Tensor, y: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    y is either 2-D (a shared weight) or has the same leading batch shape
    as x.
    """
    if x.data.ndim < 2 or y.data.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    if y.data.ndim != 2 and y.data.ndim != x.data.ndim:
        raise ShapeError(
            f"matmul: y must be 2-D or match x's rank ({x.shape} @ {y.shape})"
        )
    if x.shape[-1] != y.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ ({x.shape} @ {y.shape})")
    out = Tensor(x.data @ y.data, requires_grad=_wants_grad(tape, x, y))
    if out.requires_grad:
        xd, yd = x.data, y.data

        def bwd(g):
            dx = g @ np.swapaxes(yd, -1, -2)
            if yd.ndim == 2 and xd.ndim > 2:
                k = xd.shape[-1]
                dy = xd.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                dy = np.swapaxes(xd, -1, -2) @ g
            return dx, dy

        tape.record(out, (x, y), bwd)
    return out


def relu(tape: Tape | None, x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        mask = x.data > 0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


def softmax(tape: Tape | None, x: Tensor) -> Tensor:
    """Numerically-stable softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record(
            out, (x,),
            lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),),
        )
    return out


def reshape(tape: Tape | None, x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        orig = x.shape
        tape.record(out, (x,), lambda g: (g.reshape(orig),))
    return out


def transpose(tape: Tape | None, x: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(
        np.ascontiguousarray(x.data.transpose(axes)),
        requires_grad=_wants_grad(tape, x),
    )
    if out.requires_grad:
        inv = tuple(np.argsort(axes))
        tape.record(out, (x,), lambda g: (g.transpose(inv),))
    return out


def concat(tape: Tape | None, xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(
        np.concatenate([x.data for x in xs], axis=axis),
        requires_grad=_wants_grad(tape, *xs),
    )
    if out.requires_grad:
        sizes = [x.shape[axis] for x in xs]
        splits = np.cumsum(sizes)[:-1]
        tape.record(
            out, tuple(xs),
            lambda g: tuple(np.array_split(g, splits, axis=axis)),
        )
    return out


def reduce_sum(tape: Tape | None, x: Tensor) -> Tensor:
    out = Tensor(x.data.sum(), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        shape = x.shape
        tape.record(out, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def reduce_mean(tape: Tape | None, x: Tensor) -> Tensor:
    n = x.size
    out = Tensor(x.data.mean(), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        shape = x.shape
        tape.record(
            out, (x,), lambda g: (np.broadcast_to(g / n, shape).copy(),)
        )
    return out


def embedding(tape: Tape | None, table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids], requires_grad=_wants_grad(tape, table))
    if out.requires_grad:
        vshape = table.shape

        def bwd(g):
            dt = np.zeros(vshape)
            np.add.at(dt, ids.reshape(-1), g.reshape(-1, vshape[-1]))
            return (dt,)

        tape.record(out, (table,), bwd)
    return out


def dropout(
    tape: Tape | None,
    x: Tensor,
    p: float,
    rng: np.random.Generator,
    training: bool = True,
) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * keep, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record(out, (x,), lambda g: (g * keep,))
    return out


# --- fused layers ---

def dense(tape: Tape | None, x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last axis: x @ weight + bias."""
    if x.shape[-1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"dense: shapes {x.shape}, {weight.shape}, {bias.shape} do not conform"
        )
    out_data = x.data @ weight.data + bias.data
    out = Tensor(out_data, requires_grad=_wants_grad(tape, x, weight, bias))
    if out.requires_grad:
        xd, wd = x.data, weight.data
        d_in = xd.shape[-1]

        def bwd(g):
            g2 = g.reshape(-1, g.shape[-1])
            dx = (g @ wd.T).reshape(xd.shape)
            dw = xd.reshape(-1, d_in).T @ g2
            db = g2.sum(axis=0)
            return dx, dw, db

        tape.record(out, (x, weight, bias), bwd)
    return out


def layer_norm(
    tape: Tape | None,
    x: Tensor,
    gain: Tensor,
    shift: Tensor,
    eps: float = 1e-5,
) -> Tensor:
    """Standardize over the last axis, then apply the (gain, shift) affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise ShapeError("layer_norm: gain/shift must match the last axis")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = Tensor(
        xhat * gain.data + shift.data,
        requires_grad=_wants_grad(tape, x, gain, shift),
    )
    if out.requires_grad:
        gd = gain.data

        def bwd(g):
            dgain = (g * xhat).reshape(-1, d).sum(axis=0)
            dshift = g.reshape(-1, d).sum(axis=0)
            dxhat = g * gd
            dx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            return dx, dgain, dshift

        tape.record(out, (x, gain, shift), bwd)
    return out


def conv1d(
    tape: Tape | None,
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    padding: str = "same_zero",
) -> Tensor:
    """1-D convolution over the time axis.

    x: [batch, time, ch_in], kernel: [k, ch_in, ch_out], bias: [ch_out].
    same_zero pads symmetrically (k must be odd); causal pads on the left
    only, so position t never reads positions after t.
    """
    if x.data.ndim != 3 or kernel.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError("conv1d: expected x[b,t,ci], kernel[k,ci,co], bias[co]")
    k, c_in, c_out = kernel.shape
    if x.shape[-1] != c_in or bias.shape[0] != c_out:
        raise ShapeError(
            f"conv1d: shapes {x.shape}, {kernel.shape}, {bias.shape} do not conform"
        )
    if padding == "same_zero":
        if k % 2 == 0:
            raise ShapeError("same_zero convolution needs an odd kernel width")
        offset = (k - 1) // 2
    elif padding == "causal":
        offset = k - 1
    else:
        raise ValueError(f"unknown padding {padding!r}")

    b, t, _ = x.shape
    left, right = offset, k - 1 - offset
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    out_data = np.broadcast_to(bias.data, (b, t, c_out)).copy()
    for j in range(k):
        out_data += xp[:, j:j + t, :] @ kernel.data[j]
    out = Tensor(out_data, requires_grad=_wants_grad(tape, x, kernel, bias))
    if out.requires_grad:
        kd = kernel.data

        def bwd(g):
            dxp = np.zeros_like(xp)
            dk = np.zeros_like(kd)
            g2 = g.reshape(-1, c_out)
            for j in range(k):
                dxp[:, j:j + t, :] += g @ kd[j].T
                dk[j] = xp[:, j:j + t, :].reshape(-1, c_in).T @ g2
            db = g2.sum(axis=0)
            dx = dxp[:, left:left + t, :]
            return dx, dk, db

        tape.record(out, (x, kernel, bias), bwd)
    return out


def causal_mask(t: int) -> np.ndarray:
    """Boolean [t, t] mask, True where a query may not attend (future keys)."""
    return np.triu(np.ones((t, t), dtype=bool), k=1)


def scaled_dot_product_attention(
    tape: Tape | None,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: np.ndarray | None = None,
    return_weights: bool = False,
):
    """softmax(q kᵀ / sqrt(d) + penalty) v.

    mask is boolean [tq, tk]; True positions receive a -inf-like penalty
    before the softmax. A query row with every key masked raises MaskError.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: q/k depth differs ({q.shape} vs {k.shape})")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: k/v length differs ({k.shape} vs {v.shape})")
    d = q.shape[-1]
    scores = scale(tape, matmul(tape, q, transpose(tape, k, _swap_axes(k))), 1.0 / np.sqrt(d))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (q.shape[-2], k.shape[-2]):
            raise ShapeError(
                f"attention mask shape {mask.shape} != ({q.shape[-2]}, {k.shape[-2]})"
            )
        if mask.all(axis=-1).any():
            raise MaskError("some query row has every key masked")
        scores = add_const(tape, scores, np.where(mask, MASK_PENALTY, 0.0))
    weights = softmax(tape, scores)
    out = matmul(tape, weights, v)
    if return_weights:
        return out, weights
    return out


def _swap_axes(x: Tensor) -> tuple[int, ...]:
    axes = list(range(x.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def multi_head_attention(
    tape: Tape | None,
    x_q: Tensor,
    x_kv: Tensor,
    heads: int,
    params: dict[str, Tensor],
    causal: bool = False,
) -> Tensor:
    """Projected per-head attention, concatenated and output-projected.

    Self-attention when x_q is x_kv, cross-attention otherwise. params holds
    wq/bq, wk/bk, wv/bv, wo/bo with square [d_model, d_model] weights.
    """
    d_model = x_q.shape[-1]
    if d_model % heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by {heads} heads")
    dk = d_model // heads
    b, tq = x_q.shape[0], x_q.shape[1]
    tk = x_kv.shape[1]

    def split_heads(x: Tensor, t: int) -> Tensor:
        x = reshape(tape, x, (b, t, heads, dk))
        x = transpose(tape, x, (0, 2, 1, 3))
        return reshape(tape, x, (b * heads, t, dk))

    q = split_heads(dense(tape, x_q, params["wq"], params["bq"]), tq)
    k = split_heads(dense(tape, x_kv, params["wk"], params["bk"]), tk)
    v = split_heads(dense(tape, x_kv, params["wv"], params["bv"]), tk)

    mask = causal_mask(tq) if causal else None
    att = scaled_dot_product_attention(tape, q, k, v, mask=mask)

    att = reshape(tape, att, (b, heads, tq, dk))
    att = transpose(tape, att, (0, 2, 1, 3))
    att = reshape(tape, att, (b, tq, d_model))
    return dense(tape, att, params["wo"], params["bo"])


def softmax_cross_entropy(
    tape: Tape | None,
    logits: Tensor,
    targets: np.ndarray,
    pad_id: int,
) -> Tensor:
    """Mean negative log-softmax over non-pad targets.

    Pad positions contribute zero loss and zero gradient. Stabilized by
    max-subtraction, so the loss is invariant to a per-row constant shift.
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [n, classes], got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} != ({n},)")
    if targets.min() < 0 or targets.max() >= c:
        raise ShapeError("target id out of range")
    live = targets != pad_id
    n_live = int(live.sum())
    if n_live == 0:
        raise LossError("every target position is padding")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    nll = -logp[np.arange(n), targets]
    loss_val = nll[live].mean()
    out = Tensor(loss_val, requires_grad=_wants_grad(tape, logits))
    if out.requires_grad:
        p = np.exp(logp)

        def bwd(g):
            dlogits = p.copy()
            dlogits[np.arange(n), targets] -= 1.0
            g_scalar = float(np.asarray(g).reshape(-1)[0])
            dlogits *= live[:, None] * (g_scalar / n_live)
            return (dlogits,)

        tape.record(out, (logits,), bwd)
    return out


# --- parameter initialization ---

def glorot_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def embedding_init(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.normal(0.0, 0.02, size=shape)


# --- optimizers ---

ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
RMSPROP_RHO, RMSPROP_EPS = 0.9, 1e-8


@dataclass
class OptimizerState:
    which: str
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def optimizer_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray] | None,
    state: OptimizerState | None,
    which: str = "adam",
    lr: float = 1e-3,
) -> OptimizerState:
    """One Adam or RMSprop update, in place on the params.

    grads=None reads each param's accumulated .grad. Parameters move opposite
    the gradient; Adam uses bias correction.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    which = which.lower()
    if which not in ("adam", "rmsprop"):
        raise ConfigError(f"unknown optimizer {which!r}")
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    if len(grads) != len(params):
        raise ShapeError("params/grads length mismatch")
    if state is None:
        state = OptimizerState(which=which)
        state.m = [np.zeros_like(p.data) for p in params]
        if which == "adam":
            state.v = [np.zeros_like(p.data) for p in params]
    if state.which != which:
        raise ConfigError(f"state was created for {state.which!r}, not {which!r}")

    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")

    state.step += 1
    t = state.step
    if which == "adam":
        bc1 = 1.0 - ADAM_BETA1 ** t
        bc2 = 1.0 - ADAM_BETA2 ** t
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    else:
        for p, g, acc in zip(params, grads, state.m):
            acc *= RMSPROP_RHO
            acc += (1 - RMSPROP_RHO) * g * g
            p.data -= lr * g / (np.sqrt(acc) + RMSPROP_EPS)
    return state


# --- named-tensor container ---

_MAGIC = b"NTC1"


def save_container(
    path: str | Path, header: dict, tensors: dict[str, np.ndarray]
) -> None:
    """Flat binary container: JSON header + named little-endian f64 blocks."""
    directory = [
        {"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()
    ]
    full_header = dict(header)
    full_header["tensors"] = directory
    hbytes = json.dumps(full_header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        for arr in tensors.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read container {path}: {e}") from e
    if blob[:4] != _MAGIC:
        raise IoError(f"{path}: not a tensor container")
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    offset = 8 + hlen
    tensors: dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(blob):
            raise IoError(f"{path}: truncated tensor data")
        arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
        tensors[spec["name"]] = arr.astype(np.float64)
        offset = end
    return header, tensors
