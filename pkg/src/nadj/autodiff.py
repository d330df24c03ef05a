"""Minimal reverse-mode tensor engine for the neural-operator stack.

Dynamically records an acyclic graph of numpy-backed tensors with hand-written
backward rules for the ~10 operations the model needs; nothing more.  Complex
quantities travel as a trailing (real, imag) axis of size 2 so every stored
array stays real; cotangents follow the pair convention, i.e. the inner
product is the plain sum of componentwise products, under which the adjoint of
an unnormalized FFT is N times the inverse FFT and the adjoint of a complex
product multiplies by the conjugate of the other factor.

f32 is the training precision; every op also runs in f64, which is what the
finite-difference gradient checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ValidationError

_REAL_TO_COMPLEX = {np.dtype("float32"): np.complex64, np.dtype("float64"): np.complex128}


class DiffTensor:
    """N-d real array with optional gradient and backward-graph record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_needs_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        if self.data.dtype not in _REAL_TO_COMPLEX:
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._needs_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ValidationError("backward() requires a scalar output")
        topo: list[DiffTensor] = []
        seen: set[int] = set()
        stack: list[tuple[DiffTensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent._needs_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"DiffTensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)


def _node(data: np.ndarray, parents: tuple, backward) -> DiffTensor:
    out = DiffTensor(data)
    needs = any(p._needs_grad for p in parents)
    out._needs_grad = needs
    if needs:
        out._parents = tuple(p for p in parents if p._needs_grad)
        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a._needs_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b._needs_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), backward)


def sub(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a._needs_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b._needs_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> DiffTensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a._needs_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b._needs_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def scale(a, factor) -> DiffTensor:
    """Multiply by a constant scalar or array (no gradient into the constant)."""
    a = as_tensor(a)
    factor = np.asarray(factor, dtype=a.data.dtype)
    out_data = a.data * factor

    def backward(g):
        a.accumulate(_unbroadcast(g * factor, a.data.shape))

    return _node(out_data, (a,), backward)


def add_const(a, c) -> DiffTensor:
    a = as_tensor(a)
    out_data = a.data + np.asarray(c, dtype=a.data.dtype)

    def backward(g):
        a.accumulate(_unbroadcast(g, a.data.shape))

    return _node(out_data, (a,), backward)


def sum_axes(a, axes=None, keepdims: bool = False) -> DiffTensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _node(out_data, (a,), backward)


def sqrt(a) -> DiffTensor:
    a = as_tensor(a)
    root = np.sqrt(a.data)

    def backward(g):
        a.accumulate(g * (0.5 / np.maximum(root, np.finfo(root.dtype).tiny)))

    return _node(root, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> DiffTensor:
    """x * Phi(x) with the tanh approximation of Phi."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        sech2 = 1.0 - t * t
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        a.accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner))

    return _node(out_data, (a,), backward)


def pointwise_linear(v, w_mat, bias) -> DiffTensor:
    """Per-pixel affine map across channels: [B,Ci,H,W] x [Co,Ci] + [Co]."""
    v, w_mat, bias = as_tensor(v), as_tensor(w_mat), as_tensor(bias)
    batch, cin, height, width = v.data.shape
    cout, cin_w = w_mat.data.shape
    if cin_w != cin or bias.data.shape != (cout,):
        raise ValidationError(
            f"pointwise shapes mismatch: v has {cin} channels, W is {w_mat.data.shape}, b is {bias.data.shape}"
        )
    vmat = v.data.reshape(batch, cin, -1)
    out_data = (w_mat.data @ vmat).reshape(batch, cout, height, width) + bias.data[None, :, None, None]

    def backward(g):
        gmat = g.reshape(batch, cout, -1)
        if w_mat._needs_grad:
            w_mat.accumulate(np.einsum("bop,bip->oi", gmat, vmat, optimize=True))
        if bias._needs_grad:
            bias.accumulate(gmat.sum(axis=(0, 2)))
        if v._needs_grad:
            v.accumulate((w_mat.data.T @ gmat).reshape(v.data.shape))

    return _node(out_data, (v, w_mat, bias), backward)


# ---------------------------------------------------------------------------
# FFT family.  Pair layout: trailing axis of size 2 holds (real, imag).


def _pair_to_complex(pair: np.ndarray) -> np.ndarray:
    return pair[..., 0] + 1j * pair[..., 1]


def _complex_to_pair(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.empty(arr.shape + (2,), dtype=dtype)
    out[..., 0] = arr.real
    out[..., 1] = arr.imag
    return out


def _norm_axes(axes, ndim_spatial):
    axes = tuple(a % ndim_spatial for a in axes)
    if len(set(axes)) != len(axes):
        raise ValidationError("duplicate FFT axes")
    return axes


def fft_nd(a, axes=None, pair_input: bool | None = None) -> DiffTensor:
    """Unnormalized forward DFT over the given spatial axes; pair-layout output.

    Real input is used as the real part; pair input (trailing axis of 2) is
    transformed as complex.  The backward pass is the pair-convention adjoint,
    N * ifft.
    """
    a = as_tensor(a)
    if pair_input is None:
        pair_input = a.data.ndim >= 1 and a.data.shape[-1] == 2 and a.data.ndim > 2
    spatial_ndim = a.data.ndim - 1 if pair_input else a.data.ndim
    if axes is None:
        axes = tuple(range(spatial_ndim))
    axes = _norm_axes(axes, spatial_ndim)
    work = _pair_to_complex(a.data) if pair_input else a.data
    spectrum = sfft.fftn(work, axes=axes)
    out_data = _complex_to_pair(spectrum, a.data.dtype)
    n_total = int(np.prod([work.shape[ax] for ax in axes]))

    def backward(g):
        gc = _pair_to_complex(g)
        pull = sfft.ifftn(gc, axes=axes) * n_total
        if pair_input:
            a.accumulate(_complex_to_pair(pull, a.data.dtype))
        else:
            a.accumulate(pull.real.astype(a.data.dtype, copy=False))

    return _node(out_data, (a,), backward)


def ifft_nd(a, axes=None) -> DiffTensor:
    """Normalized inverse DFT of a pair-layout tensor; pair-layout output."""
    a = as_tensor(a)
    if a.data.ndim < 2 or a.data.shape[-1] != 2:
        raise ValidationError("ifft_nd expects pair layout with trailing axis of size 2")
    spatial_ndim = a.data.ndim - 1
    if axes is None:
        axes = tuple(range(spatial_ndim))
    axes = _norm_axes(axes, spatial_ndim)
    work = _pair_to_complex(a.data)
    out = sfft.ifftn(work, axes=axes)
    out_data = _complex_to_pair(out, a.data.dtype)
    n_total = int(np.prod([work.shape[ax] for ax in axes]))

    def backward(g):
        gc = _pair_to_complex(g)
        pull = sfft.fftn(gc, axes=axes) / n_total
        a.accumulate(_complex_to_pair(pull, a.data.dtype))

    return _node(out_data, (a,), backward)


def _rfft_col_weights(n_half: int, width: int, dtype):
    """Per-column multiplicity of the half spectrum (1 for self-conjugate bins)."""
    mult = np.full(n_half, 2.0, dtype=dtype)
    mult[0] = 1.0
    if width % 2 == 0:
        mult[-1] = 1.0
    return mult


def mix_modes(r_c: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Per-mode channel mixing Y[b,o,k] = sum_i R[o,i,k] V[b,i,k].

    Batched tiny matmuls beat einsum by a wide margin for these shapes.
    r_c is [O, I, m1, m2], block is [B, I, m1, m2]; returns [B, O, m1, m2].
    """
    o, i, m1, m2 = r_c.shape
    b = block.shape[0]
    k = m1 * m2
    rk = np.ascontiguousarray(r_c.reshape(o, i, k).transpose(2, 0, 1))
    vk = np.ascontiguousarray(block.reshape(b, i, k).transpose(0, 2, 1))[..., None]
    out = np.matmul(rk, vk)[..., 0]
    return np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, o, m1, m2)


def _mix_grad_weights(g_block: np.ndarray, block: np.ndarray) -> np.ndarray:
    """dY/dR pullback: grad_R[o,i,k] = sum_b G[b,o,k] conj(V[b,i,k])."""
    b, o, m1, m2 = g_block.shape
    i = block.shape[1]
    k = m1 * m2
    gk = np.ascontiguousarray(g_block.reshape(b, o, k).transpose(2, 1, 0))
    vk = np.ascontiguousarray(np.conj(block).reshape(b, i, k).transpose(2, 0, 1))
    out = np.matmul(gk, vk)
    return np.ascontiguousarray(out.transpose(1, 2, 0)).reshape(o, i, m1, m2)


def _mix_grad_inputs(r_c: np.ndarray, g_block: np.ndarray) -> np.ndarray:
    """dY/dV pullback: grad_V[b,i,k] = sum_o conj(R[o,i,k]) G[b,o,k]."""
    o, i, m1, m2 = r_c.shape
    b = g_block.shape[0]
    k = m1 * m2
    rk = np.ascontiguousarray(np.conj(r_c).reshape(o, i, k).transpose(2, 1, 0))
    gk = np.ascontiguousarray(g_block.reshape(b, o, k).transpose(0, 2, 1))[..., None]
    out = np.matmul(rk, gk)[..., 0]
    return np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, i, m1, m2)


def spectral_conv(v, weights, mode_mask=None) -> DiffTensor:
    """Truncated-mode spectral convolution, the global-mixing half of an FNO layer.

    v:       [B, Ci, H, W] real
    weights: [Co, Ci, m1, m2, 2] complex pair; rows cover the m1/2 lowest
             positive and negative frequencies, columns the first m2 entries
             of the half spectrum.  Everything outside that block is zeroed.
    mode_mask: optional constant [m1, m2] multiplier on the weights (band-pass
             retention experiments).
    """
    v, weights = as_tensor(v), as_tensor(weights)
    batch, cin, height, width = v.data.shape
    cout, cin_w, m1, m2, two = weights.data.shape
    if two != 2 or cin_w != cin:
        raise ValidationError("spectral weights must be [Co, Ci, m1, m2, 2]")
    if m1 % 2 != 0:
        raise ValidationError("row mode budget must be even")
    half_spec = width // 2 + 1
    if m1 > height or m2 > half_spec:
        raise ValidationError(
            f"mode budget ({m1}, {m2}) exceeds Nyquist for grid {height}x{width}"
        )
    half = m1 // 2
    cdtype = _REAL_TO_COMPLEX[v.data.dtype]

    spectrum = sfft.rfft2(v.data, axes=(-2, -1))
    block = np.concatenate(
        [spectrum[:, :, :half, :m2], spectrum[:, :, height - half:, :m2]], axis=2
    )
    r_c = _pair_to_complex(weights.data)
    if mode_mask is not None:
        r_c = r_c * np.asarray(mode_mask, dtype=r_c.dtype)
    mixed = mix_modes(r_c, block)
    out_ft = np.zeros((batch, cout, height, half_spec), dtype=cdtype)
    out_ft[:, :, :half, :m2] = mixed[:, :, :half]
    out_ft[:, :, height - half:, :m2] = mixed[:, :, half:]
    out_data = sfft.irfft2(out_ft, s=(height, width), axes=(-2, -1))

    mult = _rfft_col_weights(half_spec, width, v.data.dtype)
    inv_area = 1.0 / (height * width)

    def backward(g):
        g_ft = sfft.rfft2(g, axes=(-2, -1)) * (mult * inv_area)
        g_block = np.concatenate(
            [g_ft[:, :, :half, :m2], g_ft[:, :, height - half:, :m2]], axis=2
        )
        if weights._needs_grad:
            grad_r = _mix_grad_weights(g_block, block)
            if mode_mask is not None:
                grad_r = grad_r * np.asarray(mode_mask, dtype=grad_r.dtype)
            weights.accumulate(_complex_to_pair(grad_r, weights.data.dtype))
        if v._needs_grad:
            v_bar_blk = _mix_grad_inputs(r_c, g_block)
            v_bar = np.zeros((batch, cin, height, half_spec), dtype=cdtype)
            v_bar[:, :, :half, :m2] = v_bar_blk[:, :, :half]
            v_bar[:, :, height - half:, :m2] = v_bar_blk[:, :, half:]
            v_bar *= np.where(mult == 1.0, 1.0, 0.5).astype(v.data.dtype)
            pull = sfft.irfft2(v_bar, s=(height, width), axes=(-2, -1)) * (height * width)
            v.accumulate(pull.astype(v.data.dtype, copy=False))

    return _node(out_data, (v, weights), backward)


# ---------------------------------------------------------------------------
# Optimizer.


@dataclass
class AdamState:
    """Bias-corrected Adam moments for a fixed parameter list."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: list[DiffTensor], state: AdamState) -> None:
    """In-place bias-corrected Adam update; increments state.step."""
    if len(params) != len(state.m):
        raise ValidationError("AdamState was built for a different parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValidationError(f"missing grad on parameter {i}")
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.data.dtype)


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference verification used by the test suite.


def gradient_check(fn, tensors: list[DiffTensor], eps: float = 1e-6,
                   samples: int | None = None, rng: np.random.Generator | None = None):
    """Compare analytic gradients of scalar fn(tensors) against central differences.

    Returns the worst normwise relative error across the checked tensors.
    """
    out = fn()
    zero_grads(tensors)
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, a_grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        count = flat.size if samples is None else min(samples, flat.size)
        idx = np.arange(flat.size) if samples is None else rng.choice(flat.size, count, replace=False)
        numeric = np.empty(count, dtype=np.float64)
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + eps
            j_plus = float(fn().data)
            flat[k] = orig - eps
            j_minus = float(fn().data)
            flat[k] = orig
            numeric[j] = (j_plus - j_minus) / (2.0 * eps)
        ana = a_grad.reshape(-1)[idx]
        denom = max(np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(ana - numeric) / denom))
    return worst
