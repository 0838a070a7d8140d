"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a value array and, after backpropagation, a gradient array of
the same shape. Operations record closures on an implicit tape (the graph of
parent links); Tensor.backward() topologically sorts the reachable graph and
accumulates gradients in reverse creation order, which makes gradients
bit-deterministic for a fixed graph.

Also provides dense layers and networks, sinusoidal positional encoding with
its input Jacobian, differentiable network-input gradients (the second-order
path used by normal regularization), finite-difference checking utilities,
and the binary parameter checkpoint format.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_id_counter = itertools.count()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array value with a gradient slot, recorded on the tape."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn", "_tid")

    # Keep numpy from intercepting arithmetic with arrays on the left.
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, values, parents=(), backward_fn=None, requires_grad=None):
        self.values = np.asarray(values)
        self.grad = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn
        self._tid = next(_id_counter)
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self._parents)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype})"

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(grad, self.values.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad = self.grad + grad

    def detach(self) -> "Tensor":
        """Constant copy: same values, no tape history."""
        return Tensor(self.values, requires_grad=False)

    def backward(self) -> None:
        """Reverse accumulation from a scalar. Fills .grad on reachable tensors."""
        if self.values.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.values.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if node._tid in visited or not node.requires_grad:
                continue
            visited.add(node._tid)
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones_like(self.values)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # ---- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def constant(values, dtype=None) -> Tensor:
    """Leaf tensor that never receives a gradient."""
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=False)


def parameter(values, dtype=None) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    # Keep the graph's float dtype: a bare python or integer scalar must not
    # promote a float32 computation to float64.
    if like.values.dtype.kind == "f" and arr.dtype != like.values.dtype:
        arr = arr.astype(like.values.dtype)
    return Tensor(arr, requires_grad=False)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    if isinstance(b, Tensor):
        return _lift(a, b), b
    raise TypeError("at least one operand must be a Tensor")


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.values.shape, b.values.shape)
    except ValueError:
        raise ValueError(
            f"shape mismatch for {op}: {a.values.shape} vs {b.values.shape}"
        ) from None


# ---- primitive operations ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_elementwise("add", a, b)
    out = Tensor(a.values + b.values, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    out._backward_fn = backward
    return out


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_elementwise("sub", a, b)
    out = Tensor(a.values - b.values, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    out._backward_fn = backward
    return out


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_elementwise("mul", a, b)
    out = Tensor(a.values * b.values, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.values)
        if b.requires_grad:
            b._accumulate(g * a.values)

    out._backward_fn = backward
    return out


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_elementwise("div", a, b)
    out = Tensor(a.values / b.values, (a, b))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / b.values)
        if b.requires_grad:
            b._accumulate(-g * a.values / (b.values * b.values))

    out._backward_fn = backward
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.values, (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    out._backward_fn = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim < 2 or b.values.ndim < 2:
        raise ValueError(
            f"matmul requires 2-D or batched operands, got {a.values.shape} and "
            f"{b.values.shape}"
        )
    if a.values.shape[-1] != b.values.shape[-2]:
        raise ValueError(
            f"shape mismatch for matmul: {a.values.shape} vs {b.values.shape}"
        )
    out = Tensor(a.values @ b.values, (a, b))

    def backward(g):
        if a.requires_grad:
            ga = g @ b.values.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(ga, a.values.shape))
        if b.requires_grad:
            gb = a.values.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.values.shape))

    out._backward_fn = backward
    return out


def texp(a: Tensor) -> Tensor:
    # Closures capture plain arrays, never the output tensor: a cycle there
    # would keep whole graphs alive until a gc pass instead of refcounting.
    out_values = np.exp(a.values)
    out = Tensor(out_values, (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_values)

    out._backward_fn = backward
    return out


def tsin(a: Tensor) -> Tensor:
    out = Tensor(np.sin(a.values), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * np.cos(a.values))

    out._backward_fn = backward
    return out


def tcos(a: Tensor) -> Tensor:
    out = Tensor(np.cos(a.values), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g * np.sin(a.values))

    out._backward_fn = backward
    return out


def tsqrt(a: Tensor) -> Tensor:
    """Square root; callers guard the argument away from zero."""
    out_values = np.sqrt(a.values)
    out = Tensor(out_values, (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (0.5 / out_values))

    out._backward_fn = backward
    return out


def pow_const(a: Tensor, exponent: float) -> Tensor:
    """a ** exponent for a constant exponent.

    For non-integer exponents the base must be positive (callers clamp).
    """
    out = Tensor(np.power(a.values, exponent), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (exponent * np.power(a.values, exponent - 1.0)))

    out._backward_fn = backward
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.values, 0.0), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.values > 0))

    out._backward_fn = backward
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed as max(x, 0) + log1p(e^-|x|) for stability."""
    v = a.values
    out = Tensor(np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v))), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * _stable_sigmoid(a.values))

    out._backward_fn = backward
    return out


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    pos = v >= 0
    out = np.empty_like(v)
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out_values = _stable_sigmoid(a.values)
    out = Tensor(out_values, (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (out_values * (1.0 - out_values)))

    out._backward_fn = backward
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims), (a,))

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.values.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.values.shape).copy())

    out._backward_fn = backward
    return out


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    total = tsum(a, axis=axis, keepdims=keepdims)
    count = a.values.size // total.values.size
    return mul(total, 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.values.reshape(shape), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.values.shape))

    out._backward_fn = backward
    return out


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    out = Tensor(np.concatenate([p.values for p in parts], axis=axis), tuple(parts))
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(int(lo), int(hi))
                part._accumulate(g[tuple(index)])

    out._backward_fn = backward
    return out


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """a[..., start:stop] on the last axis."""
    out = Tensor(a.values[..., start:stop], (a,))

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.values)
            full[..., start:stop] = g
            a._accumulate(full)

    out._backward_fn = backward
    return out


def clip_min(a: Tensor, bound: float) -> Tensor:
    """max(a, bound); zero subgradient where the bound is active."""
    out = Tensor(np.maximum(a.values, bound), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.values > bound))

    out._backward_fn = backward
    return out


def clip_max(a: Tensor, bound: float) -> Tensor:
    """min(a, bound); zero subgradient where the bound is active."""
    out = Tensor(np.minimum(a.values, bound), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.values < bound))

    out._backward_fn = backward
    return out


def clip01(a: Tensor) -> Tensor:
    """Clip to [0, 1] with hard zero subgradient outside the interval."""
    out = Tensor(np.clip(a.values, 0.0, 1.0), (a,))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * ((a.values >= 0.0) & (a.values <= 1.0)))

    out._backward_fn = backward
    return out


def cumsum_exclusive(a: Tensor, axis: int = -1) -> Tensor:
    """y_i = sum_{j<i} x_j along the given axis."""
    v = a.values
    out_vals = np.cumsum(v, axis=axis) - v
    out = Tensor(out_vals, (a,))

    def backward(g):
        if a.requires_grad:
            rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
            a._accumulate(rev - g)

    out._backward_fn = backward
    return out


def dot(a: Tensor, b: Tensor, keepdims: bool = True) -> Tensor:
    """Row-wise inner product over the last axis."""
    return tsum(mul(a, b), axis=-1, keepdims=keepdims)


def normalize(a: Tensor, eps: float = 1e-20) -> Tensor:
    """a / sqrt(|a|^2 + eps) over the last axis; maps the zero vector to zero."""
    sq = tsum(mul(a, a), axis=-1, keepdims=True)
    return div(a, tsqrt(add(sq, eps)))


# ---- dense networks -----------------------------------------------------


@dataclass
class Dense:
    """Affine layer: y = x @ W^T + b, optionally followed by an activation."""

    weight: Tensor  # (out, in)
    bias: Tensor  # (out,)
    activation: str = "linear"  # "linear" | "relu"

    @property
    def out_features(self) -> int:
        return self.weight.values.shape[0]

    @property
    def in_features(self) -> int:
        return self.weight.values.shape[1]

    def affine(self, x: Tensor) -> Tensor:
        if x.values.shape[-1] != self.in_features:
            raise ValueError(
                f"input width {x.values.shape[-1]} does not match layer "
                f"({self.out_features}, {self.in_features})"
            )
        wt = Tensor(
            self.weight.values.T,
            (self.weight,),
        )

        def backward(g):
            if self.weight.requires_grad:
                self.weight._accumulate(g.T)

        wt._backward_fn = backward
        return add(matmul(x, wt), self.bias)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.affine(x)
        if self.activation == "relu":
            return relu(y)
        if self.activation != "linear":
            raise ValueError(f"unknown activation {self.activation!r}")
        return y


class DenseNetwork:
    """Stack of Dense layers applied in order."""

    def __init__(self, layers: Sequence[Dense]):
        layers = list(layers)
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_features != nxt.in_features:
                raise ValueError(
                    f"layer widths do not compose: {prev.out_features} -> "
                    f"{nxt.in_features}"
                )
        self.layers = layers

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def out_features(self) -> int:
        return self.layers[-1].out_features

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    __call__ = forward

    def forward_with_preacts(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Forward pass that also returns each layer's pre-activation."""
        preacts = []
        for layer in self.layers:
            pre = layer.affine(x)
            preacts.append(pre)
            x = relu(pre) if layer.activation == "relu" else pre
        return x, preacts


def init_dense(
    rng: np.random.Generator,
    n_in: int,
    n_out: int,
    activation: str = "linear",
    scheme: str = "he",
    bias: float = 0.0,
    dtype=np.float32,
) -> Dense:
    """He-uniform for ReLU layers, Xavier-uniform for heads."""
    if scheme == "he":
        limit = np.sqrt(6.0 / n_in)
    elif scheme == "xavier":
        limit = np.sqrt(6.0 / (n_in + n_out))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    w = rng.uniform(-limit, limit, size=(n_out, n_in)).astype(dtype)
    b = np.full((n_out,), bias, dtype=dtype)
    return Dense(parameter(w), parameter(b), activation)


def init_mlp(
    rng: np.random.Generator,
    n_in: int,
    width: int,
    depth: int,
    dtype=np.float32,
) -> DenseNetwork:
    """ReLU trunk of `depth` layers mapping n_in -> width."""
    sizes = [n_in] + [width] * depth
    layers = [
        init_dense(rng, a, b, activation="relu", scheme="he", dtype=dtype)
        for a, b in zip(sizes[:-1], sizes[1:])
    ]
    return DenseNetwork(layers)


def input_gradient(
    net: DenseNetwork, preacts: Sequence[Tensor], cotangent: Tensor
) -> Tensor:
    """Differentiable gradient of a scalar w.r.t. the network input.

    `cotangent` is d(scalar)/d(network output), shape (n, out). The ReLU
    activation pattern is treated as locally constant (its derivative is
    piecewise constant), so the returned (n, in) tensor stays on the tape and
    higher losses built from it backpropagate into the network weights.
    """
    v = cotangent
    for layer, pre in zip(reversed(net.layers), reversed(list(preacts))):
        if layer.activation == "relu":
            mask = constant((pre.values > 0).astype(pre.values.dtype))
            v = mul(v, mask)
        v = matmul(v, layer.weight)
    return v


# ---- positional encoding ------------------------------------------------


def positional_encoding(x: np.ndarray, levels: int) -> np.ndarray:
    """[x, sin(2^k x), cos(2^k x) for k < levels] along the last axis."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    x = np.asarray(x)
    parts = [x]
    for k in range(levels):
        scaled = (2.0**k) * x
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    return np.concatenate(parts, axis=-1)


def positional_encoding_tape(x: Tensor, levels: int) -> Tensor:
    """Tape version of positional_encoding for differentiable inputs."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    parts = [x]
    for k in range(levels):
        scaled = mul(x, 2.0**k)
        parts.append(tsin(scaled))
        parts.append(tcos(scaled))
    return concat(parts, axis=-1)


def positional_encoding_jacobian(x: np.ndarray, levels: int) -> np.ndarray:
    """d(encoding)/dx with shape (..., 3 + 6*levels, 3)."""
    x = np.asarray(x)
    dim = x.shape[-1]
    eye = np.broadcast_to(np.eye(dim, dtype=x.dtype), x.shape + (dim,)).copy()
    blocks = [eye]
    for k in range(levels):
        freq = 2.0**k
        scaled = freq * x
        dsin = freq * np.cos(scaled)
        dcos = -freq * np.sin(scaled)
        blocks.append(eye * dsin[..., None])
        blocks.append(eye * dcos[..., None])
    return np.concatenate(blocks, axis=-2)


class ScalarField:
    """Positionally encoded MLP trunk with a scalar softplus head.

    Gives both the field value and its spatial gradient as tape tensors; the
    gradient is built from the trunk's activation pattern so that losses on it
    backpropagate into the parameters.
    """

    def __init__(self, trunk: DenseNetwork, head: Dense, pe_levels: int):
        if head.out_features != 1:
            raise ValueError("scalar field head must have a single output")
        self.trunk = trunk
        self.head = head
        self.pe_levels = pe_levels

    def value_and_gradient(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        x = np.asarray(x)
        feats = constant(positional_encoding(x, self.pe_levels))
        h, preacts = self.trunk.forward_with_preacts(feats)
        z = self.head.affine(h)
        value = softplus(z)
        # d(value)/dh = sigmoid(z) * head weight row.
        cot = matmul(sigmoid(z), self.head.weight)
        dfeat = input_gradient(self.trunk, preacts, cot)
        jac = constant(positional_encoding_jacobian(x, self.pe_levels))
        n = x.shape[0]
        grad = reshape(
            matmul(reshape(dfeat, (n, 1, dfeat.values.shape[-1])), jac), (n, x.shape[-1])
        )
        return value, grad


def spatial_gradient(field: ScalarField, x: np.ndarray) -> Tensor:
    """Gradient of the field's scalar output w.r.t. position, on the tape."""
    return field.value_and_gradient(x)[1]


# ---- finite-difference checking -----------------------------------------


def numeric_gradient(
    fn: Callable[[], float], array: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of fn() w.r.t. array, perturbed in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a| + |n|, 1)."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---- checkpoint format ---------------------------------------------------

CHECKPOINT_MAGIC = b"RFLD"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, layers: Sequence[Dense]) -> None:
    """Little-endian binary: magic, version, layer count; per layer
    out/in dims (u32) then row-major float32 weights and bias."""
    layers = list(layers)
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(layers))
    for layer in layers:
        w = np.ascontiguousarray(layer.weight.values, dtype="<f4")
        b = np.ascontiguousarray(layer.bias.values, dtype="<f4")
        out_f, in_f = w.shape
        blob += struct.pack("<II", out_f, in_f)
        blob += w.tobytes()
        blob += b.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path) -> list[tuple[np.ndarray, np.ndarray]]:
    """Read the checkpoint format back as (weight, bias) float32 pairs."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(count):
        if pos + 8 > len(data):
            raise ValueError(f"{path}: truncated at layer {i} header")
        out_f, in_f = struct.unpack_from("<II", data, pos)
        pos += 8
        nbytes = 4 * out_f * in_f
        if pos + nbytes + 4 * out_f > len(data):
            raise ValueError(f"{path}: truncated at layer {i} data")
        w = np.frombuffer(data, dtype="<f4", count=out_f * in_f, offset=pos)
        pos += nbytes
        b = np.frombuffer(data, dtype="<f4", count=out_f, offset=pos)
        pos += 4 * out_f
        out.append((w.reshape(out_f, in_f).copy(), b.copy()))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return out
