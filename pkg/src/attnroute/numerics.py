"""Small deterministic tensor kernels.

Every activation is a rank-3 ``float32`` array laid out as
``(batch, tokens, channels)``. The kernels here are deliberately strict
about shapes: the only broadcasting allowed is a batch dimension of 1.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    pass


def as_tensor(x) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous rank-3 float32 array."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 3:
        raise ShapeError(f"expected a rank-3 tensor, got shape {arr.shape}")
    return arr


def _check_rank3(name: str, x: np.ndarray) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{name} must be rank 3 (batch, tokens, channels), got {x.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matrix product ``a @ b``.

    Batch dims must agree, or one of them must be 1.
    """
    _check_rank3("a", a)
    _check_rank3("b", b)
    if a.shape[2] != b.shape[1]:
        raise ShapeError(f"inner dimensions differ: a{a.shape} @ b{b.shape}")
    ba, bb = a.shape[0], b.shape[0]
    if ba != bb and ba != 1 and bb != 1:
        raise ShapeError(f"batch dimensions differ: a{a.shape} @ b{b.shape}")
    return np.matmul(a, b).astype(DTYPE, copy=False)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    x = np.asarray(x, dtype=DTYPE)
    e = x - np.maximum.reduce(x, axis=-1, keepdims=True)
    np.exp(e, out=e)
    e /= np.add.reduce(e, axis=-1, keepdims=True)
    return e


def layernorm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Per-token normalisation over channels (no affine parameters)."""
    n = DTYPE(x.shape[-1])
    centered = x - np.add.reduce(x, axis=-1, keepdims=True) / n
    var = np.add.reduce(centered * centered, axis=-1, keepdims=True) / n
    var += DTYPE(eps)
    np.sqrt(var, out=var)
    centered /= var
    return centered.astype(DTYPE, copy=False)


_GELU_C = DTYPE(np.sqrt(2.0 / np.pi))


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    inner = x * x
    inner *= x
    inner *= DTYPE(0.044715)
    inner += x
    inner *= _GELU_C
    np.tanh(inner, out=inner)
    inner += DTYPE(1.0)
    inner *= x
    inner *= DTYPE(0.5)
    return inner


def sdpa(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int) -> np.ndarray:
    """Multi-head scaled dot-product attention.

    ``q`` is ``(B, Tq, C)``; ``k`` and ``v`` are ``(B, Tk, C)``. Each head
    computes ``softmax(q k^T / sqrt(C / heads)) v`` and the heads are
    concatenated back along channels.
    """
    for name, t in (("q", q), ("k", k), ("v", v)):
        _check_rank3(name, t)
    if heads <= 0:
        raise ShapeError(f"heads must be positive, got {heads}")
    B, Tq, C = q.shape
    if k.shape != v.shape:
        raise ShapeError(f"k{k.shape} and v{v.shape} must match")
    if k.shape[0] != B or k.shape[2] != C:
        raise ShapeError(f"q{q.shape} incompatible with k{k.shape}")
    if C % heads:
        raise ShapeError(f"channels {C} not divisible by heads {heads}")
    return _sdpa(q, k, v, heads)


def _sdpa(q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int) -> np.ndarray:
    # shapes already validated by the caller
    B, Tq, C = q.shape
    Tk = k.shape[1]
    dh = C // heads
    qh = q.reshape(B, Tq, heads, dh).transpose(0, 2, 1, 3)
    kh = k.reshape(B, Tk, heads, dh).transpose(0, 2, 3, 1)
    vh = v.reshape(B, Tk, heads, dh).transpose(0, 2, 1, 3)
    logits = np.matmul(qh, kh)
    logits *= DTYPE(1.0 / np.sqrt(dh))
    attn = softmax_rows(logits)
    out = np.matmul(attn, vh)
    return np.ascontiguousarray(out.transpose(0, 2, 1, 3).reshape(B, Tq, C), dtype=DTYPE)


def cosine(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """Cosine similarity of two flattened arrays, accumulated in float64.

    Returns ``(value, degenerate)``; a zero-norm input gives ``(0.0, True)``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        return 0.0, True
    value = float(np.dot(a, b)) / np.sqrt(aa * bb)
    return float(min(1.0, max(-1.0, value))), False
