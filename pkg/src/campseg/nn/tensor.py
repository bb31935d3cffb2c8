"""Reverse-mode automatic differentiation over float32 numpy arrays.

Define-by-run: every op returns a Tensor that remembers its parents and how
to push gradients back to them. Storage is float32; reductions accumulate in
float64 before casting back, which keeps finite-difference checks stable.
Graphs are only recorded while gradients are enabled and some ancestor is a
trainable leaf, so plain inference allocates nothing extra.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np
from scipy.special import erf

from ..errors import GraphMissing, IndivisibleChannels, ShapeMismatch

_GRAD_ENABLED = [True]

_INV_SQRT2 = np.float32(1.0 / math.sqrt(2.0))
_INV_SQRT2PI = np.float32(1.0 / math.sqrt(2.0 * math.pi))


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and arrays are promoted to constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __getitem__(self, key):
        return narrow(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _make(values, parents, backward_fn) -> Tensor:
    out = Tensor(values)
    if _GRAD_ENABLED[-1] and any(_tracked(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(np.float32, copy=False)


def backward(loss: Tensor) -> None:
    """Populate .grad on every trainable leaf reachable from a scalar loss."""
    if loss.size != 1:
        raise ShapeMismatch(f"backward needs a scalar, got shape {loss.shape}")
    if not loss._parents:
        if loss.requires_grad:
            g = np.ones_like(loss.values)
            loss.grad = g if loss.grad is None else loss.grad + g
            return
        raise GraphMissing("loss has no recorded computation graph")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and (p._parents or p.requires_grad):
                stack.append((p, False))

    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(topo):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not _tracked(parent):
                continue
            if parent.requires_grad and not parent._parents:
                parent.grad = pg.astype(np.float32) if parent.grad is None \
                    else parent.grad + pg.astype(np.float32)
            else:
                acc = flowing.get(id(parent))
                flowing[id(parent)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values * b.values, (a, b),
                 lambda g: (_unbroadcast(g * b.values, a.shape),
                            _unbroadcast(g * a.values, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    inv = 1.0 / b.values
    return _make(a.values * inv, (a, b),
                 lambda g: (_unbroadcast(g * inv, a.shape),
                            _unbroadcast(-g * a.values * inv * inv, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading batch dims must match exactly."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] \
            or a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def back(g):
        ga = np.matmul(g, b.values.swapaxes(-1, -2))
        gb = np.matmul(a.values.swapaxes(-1, -2), g)
        return ga, gb

    return _make(np.matmul(a.values, b.values), (a, b), back)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(t: Tensor, shape) -> Tensor:
    orig = t.shape
    return _make(t.values.reshape(shape), (t,),
                 lambda g: (g.reshape(orig),))


def transpose(t: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(np.ascontiguousarray(t.values.transpose(axes)), (t,),
                 lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def narrow(t: Tensor, key) -> Tensor:
    """Basic slicing; gradient scatters back into a zero canvas."""
    def back(g):
        gx = np.zeros_like(t.values)
        gx[key] += g
        return (gx,)

    return _make(t.values[key], (t,), back)


def pad2d(t: Tensor, pad: int) -> Tensor:
    """Zero-pad the trailing two axes symmetrically."""
    if pad == 0:
        return t
    width = [(0, 0)] * (t.ndim - 2) + [(pad, pad), (pad, pad)]
    sl = tuple([slice(None)] * (t.ndim - 2) + [slice(pad, -pad), slice(pad, -pad)])
    return _make(np.pad(t.values, width), (t,), lambda g: (g[sl],))


def pad_to(t: Tensor, axis: int, target: int) -> Tensor:
    """Zero-pad one axis at its end up to a target length."""
    cur = t.shape[axis]
    if cur == target:
        return t
    if cur > target:
        raise ShapeMismatch(f"cannot pad axis {axis} from {cur} down to {target}")
    width = [(0, 0)] * t.ndim
    width[axis] = (0, target - cur)
    sl = [slice(None)] * t.ndim
    sl[axis] = slice(0, cur)
    sl = tuple(sl)
    return _make(np.pad(t.values, width), (t,), lambda g: (g[sl],))


def concat(parts: list[Tensor], axis: int) -> Tensor:
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(x) for x in np.split(g, splits, axis=axis))

    return _make(np.concatenate([p.values for p in parts], axis=axis), tuple(parts), back)


# ---------------------------------------------------------------------------
# reductions (float64 accumulation)

def reduce_sum(t: Tensor, axis=None, keepdims=False) -> Tensor:
    out = t.values.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, t.shape).astype(np.float32),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, t.shape).astype(np.float32),)

    return _make(out, (t,), back)


def reduce_mean(t: Tensor, axis=None, keepdims=False) -> Tensor:
    n = t.size if axis is None else t.shape[axis]
    out = t.values.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g / n, t.shape).astype(np.float32),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, t.shape).astype(np.float32),)

    return _make(out, (t,), back)


# ---------------------------------------------------------------------------
# activations

def relu(t: Tensor) -> Tensor:
    mask = t.values > 0
    return _make(np.where(mask, t.values, 0.0).astype(np.float32), (t,),
                 lambda g: ((g * mask).astype(np.float32),))


def gelu(t: Tensor) -> Tensor:
    """x * Phi(x) with the exact normal CDF via erf, not the tanh fit."""
    x = t.values
    cdf = (0.5 * (1.0 + erf(x * _INV_SQRT2))).astype(np.float32)
    out = x * cdf

    def back(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return ((g * (cdf + x * pdf)).astype(np.float32),)

    return _make(out, (t,), back)


def sigmoid(t: Tensor) -> Tensor:
    x = t.values
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(np.float32)
    return _make(y, (t,), lambda g: ((g * y * (1.0 - y)).astype(np.float32),))


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    shifted = t.values - t.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = (e / e.sum(axis=axis, keepdims=True, dtype=np.float64)).astype(np.float32)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (((g - dot) * y).astype(np.float32),)

    return _make(y, (t,), back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeMismatch("layer_norm parameter shapes must match the last axis")
    v = x.values
    mu = v.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + eps)).astype(np.float32)
    xhat = ((v - mu) * inv).astype(np.float32)
    out = xhat * gamma.values + beta.values

    def back(g):
        axes = tuple(range(g.ndim - 1))
        ggam = (g * xhat).sum(axis=axes).astype(np.float32)
        gbeta = g.sum(axis=axes).astype(np.float32)
        gy = g * gamma.values
        m1 = gy.mean(axis=-1, keepdims=True)
        m2 = (gy * xhat).mean(axis=-1, keepdims=True)
        gx = ((gy - m1 - xhat * m2) * inv).astype(np.float32)
        return gx, ggam, gbeta

    return _make(out, (x, gamma, beta), back)


# ---------------------------------------------------------------------------
# convolution family

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """x: [N,C,H,W], w: [O,C,kh,kw] -> [N,O,Ho,Wo]."""
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeMismatch(f"conv2d channels: input {c} vs weight {cw}")
    xp = np.pad(x.values, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < kh or wp < kw:
        raise ShapeMismatch("kernel larger than padded input")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                       # [N,C,Ho,Wo,kh,kw]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ho, wo, c * kh * kw)
    wmat = w.values.reshape(o, -1)
    out = cols @ wmat.T                                        # [N,Ho,Wo,O]
    if b is not None:
        if b.shape != (o,):
            raise ShapeMismatch("conv2d bias must have one value per output channel")
        out = out + b.values
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def back(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1))     # [N,Ho,Wo,O]
        gflat = gt.reshape(-1, o)
        dw = (gflat.T @ cols.reshape(-1, c * kh * kw)).reshape(w.shape).astype(np.float32)
        db = None if b is None else gt.sum(axis=(0, 1, 2)).astype(np.float32)
        gcols = (gt @ wmat).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, :, i, j]
        dx = dxp if padding == 0 else dxp[:, :, padding:padding + h, padding:padding + wd]
        if b is None:
            return dx.astype(np.float32), dw
        return dx.astype(np.float32), dw, db

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, back)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None,
                     stride: int = 2) -> Tensor:
    """x: [N,C,H,W], w: [C,O,kh,kw] -> [N,O,(H-1)s+kh,(W-1)s+kw]."""
    n, c, h, wd = x.shape
    cw, o, kh, kw = w.shape
    if cw != c:
        raise ShapeMismatch(f"conv_transpose2d channels: input {c} vs weight {cw}")
    ho = (h - 1) * stride + kh
    wo = (wd - 1) * stride + kw
    xt = np.ascontiguousarray(x.values.transpose(0, 2, 3, 1))  # [N,H,W,C]
    cols = (xt.reshape(-1, c) @ w.values.reshape(c, -1)).reshape(n, h, wd, o, kh, kw)
    out = np.zeros((n, o, ho, wo), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * h:stride, j:j + stride * wd:stride] += \
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if b is not None:
        if b.shape != (o,):
            raise ShapeMismatch("conv_transpose2d bias must have one value per channel")
        out = out + b.values[None, :, None, None]

    def back(g):
        dcols = np.empty((n, h, wd, o, kh, kw), dtype=np.float32)
        for i in range(kh):
            for j in range(kw):
                dcols[:, :, :, :, i, j] = \
                    g[:, :, i:i + stride * h:stride, j:j + stride * wd:stride].transpose(0, 2, 3, 1)
        dflat = dcols.reshape(-1, o * kh * kw)
        dx = (dflat @ w.values.reshape(c, -1).T).reshape(n, h, wd, c) \
            .transpose(0, 3, 1, 2).astype(np.float32)
        dw = (xt.reshape(-1, c).T @ dflat).reshape(w.shape).astype(np.float32)
        if b is None:
            return np.ascontiguousarray(dx), dw
        db = g.sum(axis=(0, 2, 3)).astype(np.float32)
        return np.ascontiguousarray(dx), dw, db

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, back)


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeMismatch(f"max_pool2d needs dims divisible by {k}")
    ho, wo = h // k, w // k
    win = x.values.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5) \
        .reshape(n, c, ho, wo, k * k)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gwin = np.zeros((n, c, ho, wo, k * k), dtype=np.float32)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(n, c, h, w)
        return (np.ascontiguousarray(gx),)

    return _make(np.ascontiguousarray(out), (x,), back)


def pixel_shuffle(t: Tensor, r: int) -> Tensor:
    """[..., C*r*r, H, W] -> [..., C, H*r, W*r]; out(c, h*r+i, w*r+j) = in(c*r*r + i*r + j, h, w)."""
    if r < 1:
        raise IndivisibleChannels("shuffle factor must be >= 1")
    if r == 1:
        return t
    *lead, ch, h, w = t.shape
    if ch % (r * r):
        raise IndivisibleChannels(f"{ch} channels not divisible by r^2={r * r}")
    c = ch // (r * r)
    lead = tuple(lead)
    nl = len(lead)

    def fwd(v):
        v = v.reshape(lead + (c, r, r, h, w))
        v = v.transpose(tuple(range(nl)) + (nl, nl + 3, nl + 1, nl + 4, nl + 2))
        return np.ascontiguousarray(v).reshape(lead + (c, h * r, w * r))

    def back(g):
        v = g.reshape(lead + (c, h, r, w, r))
        v = v.transpose(tuple(range(nl)) + (nl, nl + 2, nl + 4, nl + 1, nl + 3))
        return (np.ascontiguousarray(v).reshape(lead + (ch, h, w)),)

    return _make(fwd(t.values), (t,), back)


# ---------------------------------------------------------------------------
# losses

def bce_with_logits(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy, numerically stable, float64 accumulation."""
    if logits.shape != target.shape:
        raise ShapeMismatch(f"bce shapes {logits.shape} vs {target.shape}")
    x = logits.values.astype(np.float64)
    t = target.values.astype(np.float64)
    per = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    out = np.float32(per.mean())
    n = x.size

    def back(g):
        p = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                     np.exp(x) / (1.0 + np.exp(x)))
        gx = (g * (p - t) / n).astype(np.float32)
        return (gx, None)

    return _make(out, (logits, target), back)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error; gradient is sign(pred - target)/n."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"l1 shapes {pred.shape} vs {target.shape}")
    diff = pred.values.astype(np.float64) - target.values.astype(np.float64)
    out = np.float32(np.abs(diff).mean())
    n = pred.size

    def back(g):
        return ((g * np.sign(diff) / n).astype(np.float32), None)

    return _make(out, (pred, target), back)


def loss_bce_soft_iou(logits: Tensor, target: Tensor, iou_weight: float = 1.0) -> Tensor:
    """BCE plus iou_weight * (1 - soft IoU) on sigmoid probabilities."""
    if logits.shape != target.shape:
        raise ShapeMismatch(f"loss shapes {logits.shape} vs {target.shape}")
    bce = bce_with_logits(logits, target)
    if iou_weight == 0.0:
        return bce
    p = sigmoid(logits)
    inter = reduce_sum(mul(p, target))
    union = sub(add(reduce_sum(p), reduce_sum(target)), inter)
    soft_iou = div(inter, add(union, _as_tensor(1e-6)))
    return add(bce, mul(_as_tensor(iou_weight), sub(_as_tensor(1.0), soft_iou)))
