"""Minimal reverse-mode differentiable array.

Every network computation in the package is expressed with :class:`Tensor`.
Values are float64 numpy arrays; each operation records a closure on the
output tensor that pushes the output gradient back to its inputs. The graph
is taped per forward pass and walked in reverse topological order by
:meth:`Tensor.backward`.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "DimensionError",
    "GraphError",
    "GradCheckReport",
    "no_grad",
    "as_tensor",
    "conv2d",
    "upsample_nearest",
    "avg_pool2d",
    "activation",
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "concat",
    "matmul",
    "grad_check",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "write_tensor",
    "read_tensor",
]

LEAKY_SLOPE = 0.2
TENSOR_MAGIC = b"PDGT"

ArrayLike = Union[np.ndarray, float, int, Sequence]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class GraphError(RuntimeError):
    """Raised when the autodiff contract is violated (e.g. non-scalar loss)."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables taping inside its block."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    Parameters
    ----------
    data : array_like
        Values; converted to a float64 array (copied only if needed).
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` accumulate ``grad`` on
        :meth:`backward`.
    name : str, optional
        Label used by checkpoints and diagnostics.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    # make ``ndarray * Tensor`` dispatch to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # -- graph plumbing ---------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every participating leaf's ``grad``.

        ``self`` must hold exactly one element. Intermediate gradients are
        recomputed from scratch on each call; leaf gradients accumulate until
        reset with :meth:`zero_grad`.
        """
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        # intermediate buffers restart at zero so repeated calls do not compound
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator overloads -----------------------------------------------
    def __add__(self, other):
        return _add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, -as_tensor(other))

    def __rsub__(self, other):
        return _add(as_tensor(other), -self)

    def __mul__(self, other):
        return _mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _mul(self, _reciprocal(as_tensor(other)))

    def __rtruediv__(self, other):
        return _mul(as_tensor(other), _reciprocal(self))

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g) if self.requires_grad else None
        return out

    def __pow__(self, exponent: float):
        return _pow(self, float(exponent))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return _sum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.shape
        out = _make(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(src_shape))
        return out

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        out = _make(self.data.transpose(axes), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.transpose(inv))
        return out

    def __getitem__(self, index) -> "Tensor":
        out = _make(self.data[index], (self,))
        if out.requires_grad:
            src_shape = self.shape

            def back(g):
                full = np.zeros(src_shape)
                np.add.at(full, index, g) if _has_advanced(index) else full.__setitem__(index, g)
                self._accumulate(full)
            out._backward = back
        return out

    def abs(self) -> "Tensor":
        sign = np.sign(self.data)
        out = _make(np.abs(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * sign)
        return out

    def sqrt(self) -> "Tensor":
        return _pow(self, 0.5)


def _has_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(not isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _add(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data + b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        out._backward = back
    return out


def _mul(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data * b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        out._backward = back
    return out


def _reciprocal(a: Tensor) -> Tensor:
    inv = 1.0 / a.data
    out = _make(inv, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(-g * inv * inv)
    return out


def _pow(a: Tensor, p: float) -> Tensor:
    val = a.data ** p
    out = _make(val, (a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g * p * a.data ** (p - 1.0))
    return out


def _sum(a: Tensor, axis, keepdims: bool) -> Tensor:
    out = _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        src_shape = a.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, tuple(np.atleast_1d(axis) % len(src_shape)))
            a._accumulate(np.broadcast_to(g, src_shape))
        out._backward = back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul of {a.shape} and {b.shape}")
    out = _make(a.data @ b.data, (a, b))
    if out.requires_grad:
        def back(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)
        out._backward = back
    return out


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

        def back(g):
            for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t._accumulate(g[tuple(idx)])
        out._backward = back
    return out


# -- activations ----------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = _make(np.where(pos, x.data, 0.0), (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * pos)
    return out


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    out = _make(x.data * scale, (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * scale)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _make(s, (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * s * (1.0 - s))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = _make(t, (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g * (1.0 - t * t))
    return out


_ACTIVATIONS = {
    "sigmoid": sigmoid,
    "relu": relu,
    "leaky-relu": leaky_relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
}


def activation(x: Tensor, kind: str) -> Tensor:
    """Apply one of ``sigmoid``, ``relu``, ``leaky-relu`` (slope 0.2) or ``tanh``."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


# -- spatial ops ----------------------------------------------------------

def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[B,Cin,H,W]`` with ``kernel[Cout,Cin,kh,kw]``.

    Output extents are ``(H + 2*padding - kh) // stride + 1`` (likewise W).
    Implemented as im2col followed by a single matrix product; the column
    buffer is kept for the backward pass.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    B, cin, H, W = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d channel mismatch: input has {cin}, kernel expects {kcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if Hp < kh or Wp < kw:
        raise DimensionError(f"conv2d kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    # column buffer laid out (Cin*kh*kw, B*Ho*Wo): one wide GEMM per pass
    if kh == 1 and kw == 1:
        sub = xp[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
        cols = np.ascontiguousarray(sub.transpose(1, 0, 2, 3)).reshape(cin, B * Ho * Wo)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(cin * kh * kw, B * Ho * Wo)
    wmat = kernel.data.reshape(cout, -1)
    res = wmat @ cols
    out = _make(np.ascontiguousarray(res.reshape(cout, B, Ho, Wo).transpose(1, 0, 2, 3)), (x, kernel))
    if out.requires_grad:
        def back(g):
            gmat = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, B * Ho * Wo)
            if kernel.requires_grad:
                kernel._accumulate((gmat @ cols.T).reshape(kernel.shape))
            if x.requires_grad:
                dcols = (wmat.T @ gmat).reshape(cin, kh, kw, B, Ho, Wo)
                dxp = np.zeros((cin, B, Hp, Wp))
                hi_h = stride * (Ho - 1) + 1
                hi_w = stride * (Wo - 1) + 1
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i:i + hi_h:stride, j:j + hi_w:stride] += dcols[:, i, j]
                x._accumulate(dxp[:, :, padding:padding + H, padding:padding + W].transpose(1, 0, 2, 3))
        out._backward = back
    return out


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel into a ``factor x factor`` block."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    B, C, H, W = x.shape
    up = np.broadcast_to(x.data[:, :, :, None, :, None], (B, C, H, factor, W, factor))
    out = _make(up.reshape(B, C, H * factor, W * factor), (x,))
    if out.requires_grad:
        out._backward = lambda g: x._accumulate(g.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5)))
    return out


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping ``factor x factor`` mean pooling."""
    if factor < 1:
        raise ValueError(f"pool factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    B, C, H, W = x.shape
    if H % factor or W % factor:
        raise DimensionError(f"pool factor {factor} does not divide {H}x{W}")
    h, w = H // factor, W // factor
    out = _make(x.data.reshape(B, C, h, factor, w, factor).mean(axis=(3, 5)), (x,))
    if out.requires_grad:
        scale = 1.0 / (factor * factor)

        def back(g):
            up = np.broadcast_to(g[:, :, :, None, :, None] * scale, (B, C, h, factor, w, factor))
            x._accumulate(up.reshape(B, C, H, W))
        out._backward = back
    return out


# -- gradient checking ----------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    op_name: str
    max_relative_error: float
    tested_point_count: int

    def passed(self, tol: float) -> bool:
        return self.max_relative_error < tol


def grad_check(
    fn: Callable[..., Tensor],
    point: Union[Tensor, Sequence[Tensor]],
    epsilon: float = 1e-5,
    *,
    op_name: str = "fn",
    max_points: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``point`` is one tensor or a list of tensors; ``fn(*point)`` must return a
    scalar tensor. Each checked tensor is perturbed in place and restored.
    When ``max_points`` is given, at most that many elements per tensor are
    probed (chosen with ``seed``). The relative error of each element uses
    the denominator ``max(|a|, |b|, 1e-8)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    points = [point] if isinstance(point, Tensor) else list(point)
    saved_flags = [p.requires_grad for p in points]
    for p in points:
        p.requires_grad = True
        p.grad = None
    try:
        loss = fn(*points)
        loss.backward()
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in points]

        rng = np.random.default_rng(seed)
        worst = 0.0
        count = 0
        with no_grad():
            for p, ga in zip(points, analytic):
                flat = p.data.reshape(-1)
                idx = np.arange(flat.size)
                if max_points is not None and flat.size > max_points:
                    idx = np.sort(rng.choice(flat.size, size=max_points, replace=False))
                for i in idx:
                    orig = flat[i]
                    flat[i] = orig + epsilon
                    fp = fn(*points).item()
                    flat[i] = orig - epsilon
                    fm = fn(*points).item()
                    flat[i] = orig
                    num = (fp - fm) / (2.0 * epsilon)
                    ana = ga.reshape(-1)[i]
                    rel = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
                    worst = max(worst, rel)
                    count += 1
    finally:
        for p, flag in zip(points, saved_flags):
            p.requires_grad = flag
            p.grad = None
    return GradCheckReport(op_name, float(worst), count)


# -- serialization --------------------------------------------------------

def write_tensor(fh: BinaryIO, t: Union[Tensor, np.ndarray]) -> None:
    """Write ``PDGT`` | u8 rank | u32 extents | f64 payload, little-endian."""
    # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
    arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f8", order="C")
    if arr.ndim > 255:
        raise DimensionError("rank too large to serialize")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def read_tensor(fh: BinaryIO) -> Tensor:
    magic = fh.read(4)
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<B", fh.read(1))
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    n = int(np.prod(shape)) if rank else 1
    payload = fh.read(8 * n)
    if len(payload) != 8 * n:
        raise ValueError("truncated tensor payload")
    return Tensor(np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64))


def tensor_to_bytes(t: Union[Tensor, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, t)
    return buf.getvalue()


def tensor_from_bytes(blob: bytes) -> Tensor:
    return read_tensor(io.BytesIO(blob))


def parameters_zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
