"""Dense tensors with reverse-mode automatic differentiation.

Just enough machinery to train small CNNs under custom quantizer gradients:
each op builds a node whose backward closure scatters the upstream gradient
to its parents.  Values are float32 by default with float64 accumulation in
every reduction (matmuls, convolutions, losses); passing float64 data runs
the whole graph in float64, which is what the gradient-check tests do.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "add",
    "mul",
    "matmul",
    "linear",
    "conv2d",
    "relu",
    "max_pool2d",
    "scale_shift",
    "reshape",
    "mean_over",
    "tensor_sum",
    "softmax",
    "softmax_cross_entropy",
    "downsample_pad_channels",
]


_GRAD_ENABLED = True


class no_grad:
    """Context manager that skips graph construction (evaluation passes)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """Array value plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable[[], None]] = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- graph mechanics -----------------------------------------------------
    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar node; fills .grad on every parameter.

        The graph is single-use: closures and intermediate gradients are
        released afterwards (backward closures capture their output node, so
        dropping them breaks the reference cycles and frees the activations
        immediately instead of waiting for the cycle collector).
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        for node in topo:
            if node._backward is not None:  # interior node: done with its closure and grad
                node._backward = None
                node._parents = ()
                node.grad = None

    # -- operator sugar --------------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tensor_sum(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def flatten2d(self):
        return reshape(self, (self.data.shape[0], -1))


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(out_data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[Tensor], None]) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = lambda: backward(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out the dims numpy broadcasting introduced, back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _f64(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float64, copy=False)


# -- elementwise and structural ops -----------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(out: Tensor):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(out.grad, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(out: Tensor):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(out.grad * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(out: Tensor):
        if x.requires_grad:
            x.accumulate_grad(out.grad.reshape(x.data.shape))

    return _make(out_data, (x,), backward)


def tensor_sum(x: Tensor) -> Tensor:
    out_data = np.array(np.sum(_f64(x.data)), dtype=x.dtype)

    def backward(out: Tensor):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(out.grad, x.data.shape).copy())

    return _make(out_data, (x,), backward)


def mean_over(x: Tensor, axes: tuple) -> Tensor:
    """Mean over the given axes (used as the global average pool)."""
    count = 1
    for ax in axes:
        count *= x.data.shape[ax]
    out_data = np.mean(_f64(x.data), axis=axes).astype(x.dtype)

    def backward(out: Tensor):
        if x.requires_grad:
            g = np.expand_dims(out.grad, axes) / count
            x.accumulate_grad(np.broadcast_to(g, x.data.shape).astype(x.dtype))

    return _make(out_data, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def backward(out: Tensor):
        if x.requires_grad:
            x.accumulate_grad(out.grad * (x.data > 0))

    return _make(out_data, (x,), backward)


def scale_shift(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Learnable per-channel affine y = x*gamma + beta along axis 1 (the BN stand-in)."""
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"scale_shift expects gamma/beta of shape ({c},), got {gamma.data.shape}/{beta.data.shape}"
        )
    bshape = (1, c) + (1,) * (x.data.ndim - 2)
    out_data = x.data * gamma.data.reshape(bshape) + beta.data.reshape(bshape)
    reduce_axes = tuple(ax for ax in range(x.data.ndim) if ax != 1)

    def backward(out: Tensor):
        if x.requires_grad:
            x.accumulate_grad(out.grad * gamma.data.reshape(bshape))
        if gamma.requires_grad:
            gamma.accumulate_grad(
                np.sum(_f64(out.grad) * _f64(x.data), axis=reduce_axes).astype(gamma.dtype)
            )
        if beta.requires_grad:
            beta.accumulate_grad(np.sum(_f64(out.grad), axis=reduce_axes).astype(beta.dtype))

    return _make(out_data, (x, gamma, beta), backward)


# -- matmul / linear ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not chain: {a.data.shape} @ {b.data.shape}")
    out_data = (_f64(a.data) @ _f64(b.data)).astype(a.dtype)

    def backward(out: Tensor):
        g = _f64(out.grad)
        if a.requires_grad:
            a.accumulate_grad((g @ _f64(b.data).T).astype(a.dtype))
        if b.requires_grad:
            b.accumulate_grad((_f64(a.data).T @ g).astype(b.dtype))

    return _make(out_data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Affine map of rows: (N, F) @ (F, G) + bias (G,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"linear expects (N, F) @ (F, G); got input {x.data.shape}, weight {w.data.shape}"
        )
    out = matmul(x, w)
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"bias shape {b.data.shape} != ({w.data.shape[1]},)")
        out = add(out, b)
    return out


# -- convolution -------------------------------------------------------------


def _im2col(x: np.ndarray, k: int, stride: int, padding: int):
    """(N, C, H, W) -> windows (N, OH, OW, C, K, K), with the padded array."""
    n, c, h, w = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, oh, ow, c, k, k),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return windows, xp.shape, oh, ow


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Direct 2-D convolution (cross-correlation), NCHW input and OIKK weight, no bias."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/weight, got {x.data.shape} / {w.data.shape}")
    n, c, h, width = x.data.shape
    o, i, kh, kw = w.data.shape
    if kh != kw:
        raise ShapeError(f"conv2d expects square kernels, got {w.data.shape}")
    if c != i:
        raise ShapeError(f"conv2d channel mismatch: input has {c} channels, weight expects {i}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    k = kh
    if h + 2 * padding < k or width + 2 * padding < k:
        raise ShapeError(
            f"kernel {k}x{k} does not fit input {h}x{width} with padding {padding}"
        )

    windows, pad_shape, oh, ow = _im2col(x.data, k, stride, padding)
    # one float64 copy of the unrolled input, shared by forward and backward
    cols = np.ascontiguousarray(windows, dtype=np.float64).reshape(n * oh * ow, c * k * k)
    w2d = _f64(w.data.reshape(o, c * k * k))
    out_mat = cols @ w2d.T
    out_data = out_mat.reshape(n, oh, ow, o).transpose(0, 3, 1, 2).astype(x.dtype)

    def backward(out: Tensor):
        g = _f64(out.grad.transpose(0, 2, 3, 1).reshape(n * oh * ow, o))
        if w.requires_grad:
            dw = (g.T @ cols).reshape(o, i, k, k)
            w.accumulate_grad(dw.astype(w.dtype))
        if x.requires_grad:
            dcols = (g @ w2d).reshape(n, oh, ow, c, k, k)
            # scatter-add in channels-last layout so the window slices stay aligned
            _, _, hp, wp = pad_shape
            dxp = np.zeros((n, hp, wp, c), dtype=np.float64)
            for dy in range(k):
                for dx_ in range(k):
                    dxp[:, dy : dy + stride * oh : stride, dx_ : dx_ + stride * ow : stride, :] += (
                        dcols[:, :, :, :, dy, dx_]
                    )
            dxp = dxp.transpose(0, 3, 1, 2)
            if padding:
                dxp = dxp[:, :, padding:-padding, padding:-padding]
            x.accumulate_grad(dxp.astype(x.dtype))

    return _make(out_data, (x, w), backward)


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping max pooling with window = stride = k."""
    n, c, h, w = x.data.shape
    if h % k or w % k:
        raise ShapeError(f"max_pool2d window {k} must divide spatial dims {h}x{w}")
    oh, ow = h // k, w // k
    tiles = x.data.reshape(n, c, oh, k, ow, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, k * k)
    arg = np.argmax(tiles, axis=-1)
    out_data = np.take_along_axis(tiles, arg[..., None], axis=-1)[..., 0]

    def backward(out: Tensor):
        if not x.requires_grad:
            return
        dtiles = np.zeros_like(tiles)
        np.put_along_axis(dtiles, arg[..., None], out.grad[..., None], axis=-1)
        dx = (
            dtiles.reshape(n, c, oh, ow, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        x.accumulate_grad(dx)

    return _make(out_data, (x,), backward)


def downsample_pad_channels(x: Tensor, out_channels: int) -> Tensor:
    """Stride-2 spatial subsample plus zero-padded channels (parameter-free shortcut)."""
    n, c, h, w = x.data.shape
    if out_channels < c:
        raise ShapeError(f"cannot pad {c} channels down to {out_channels}")
    out_data = np.zeros((n, out_channels, (h + 1) // 2, (w + 1) // 2), dtype=x.dtype)
    out_data[:, :c] = x.data[:, :, ::2, ::2]

    def backward(out: Tensor):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            dx[:, :, ::2, ::2] = out.grad[:, :c]
            x.accumulate_grad(dx)

    return _make(out_data, (x,), backward)


# -- loss --------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (plain numpy helper)."""
    z = _f64(logits) - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between softmax(logits) and integer labels; scalar node."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (N, K) logits, got {logits.data.shape}")
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = _f64(logits.data)
    z = z - np.max(z, axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    loss = float(np.mean(lse - z[np.arange(n), labels]))
    if not np.isfinite(loss):
        raise NumericError("cross-entropy loss is non-finite")
    probs = np.exp(z - lse[:, None])
    out_data = np.array(loss, dtype=np.float64)

    def backward(out: Tensor):
        if logits.requires_grad:
            g = probs.copy()
            g[np.arange(n), labels] -= 1.0
            logits.accumulate_grad((float(out.grad) / n) * g)

    return _make(out_data, (logits,), backward)
