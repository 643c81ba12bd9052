"""Layer kinds with explicit forward and backward passes.

Tensors are float64 numpy arrays with the batch on axis 0 and features on
the last axis: (N, F) for dense features, (N, L, C) for sequences and
(N, H, W, C) for 2D planes. ``forward`` returns ``(y, cache)``;
``backward(dy, cache)`` accumulates parameter gradients and returns dx.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .functional import softmax, softmax_backward
from .params import ParamStore


class ShapeError(ValueError):
    pass


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def same_pad(k: int) -> tuple[int, int]:
    # "same" padding with the extra element on the right for even kernels
    left = (k - 1) // 2
    return left, k - 1 - left


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = []
        self.in_shape = None
        self.out_shape = None

    def build(self, in_shape, store: ParamStore, name: str, rng) -> tuple:
        self.in_shape = tuple(in_shape)
        self.out_shape = self._infer(self.in_shape)
        self._make_params(store, name, rng)
        return self.out_shape

    def _infer(self, in_shape):
        return in_shape

    def _make_params(self, store, name, rng):
        pass

    def config(self) -> dict:
        return {"kind": self.kind}

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, cache, need_dx=True):
        raise NotImplementedError


class Dense(Layer):
    """Affine map on the last axis; on sequences it acts per time step."""

    kind = "dense"

    def __init__(self, units: int):
        super().__init__()
        if units < 1:
            raise ShapeError("dense units must be positive")
        self.units = int(units)

    def _infer(self, in_shape):
        return in_shape[:-1] + (self.units,)

    def _make_params(self, store, name, rng):
        d = self.in_shape[-1]
        self.W = store.add(f"{name}/kernel", glorot_uniform(rng, (d, self.units), d, self.units))
        self.b = store.add(f"{name}/bias", np.zeros(self.units))
        self.params = [self.W, self.b]

    def config(self):
        return {"kind": self.kind, "units": self.units}

    def forward(self, x, training=False, rng=None):
        y = x.reshape(-1, x.shape[-1]) @ self.W.value + self.b.value
        return y.reshape(x.shape[:-1] + (self.units,)), x

    def backward(self, dy, x, need_dx=True):
        d = x.shape[-1]
        x2 = x.reshape(-1, d)
        dy2 = dy.reshape(-1, self.units)
        self.W.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        if not need_dx:
            return None
        return (dy2 @ self.W.value.T).reshape(x.shape)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, mask, need_dx=True):
        return dy * mask


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        y = softmax(x)
        return y, y

    def backward(self, dy, y, need_dx=True):
        return softmax_backward(y, dy)


class Dropout(Layer):
    """Inverted dropout: active only in training, no rescale at inference."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ShapeError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)

    def config(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError("dropout in training mode needs a random generator")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, mask, need_dx=True):
        return dy if mask is None else dy * mask


class Flatten(Layer):
    kind = "flatten"

    def _infer(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, shape, need_dx=True):
        return dy.reshape(shape)


class GlobalAvgPool1D(Layer):
    kind = "globalavgpool1d"

    def _infer(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"globalavgpool1d expects (L, C), got {in_shape}")
        return (in_shape[1],)

    def forward(self, x, training=False, rng=None):
        return x.mean(axis=1), x.shape[1]

    def backward(self, dy, length, need_dx=True):
        return np.repeat(dy[:, None, :] / length, length, axis=1)


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, filters: int, kernel: int, padding: str = "same"):
        super().__init__()
        if filters < 1 or kernel < 1:
            raise ShapeError("conv1d filters and kernel must be positive")
        if padding != "same":
            raise ShapeError("only 'same' padding is supported")
        self.filters, self.kernel, self.padding = int(filters), int(kernel), padding

    def _infer(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"conv1d expects (L, C), got {in_shape}")
        return (in_shape[0], self.filters)

    def _make_params(self, store, name, rng):
        c = self.in_shape[1]
        k, f = self.kernel, self.filters
        self.W = store.add(f"{name}/kernel", glorot_uniform(rng, (k, c, f), k * c, k * f))
        self.b = store.add(f"{name}/bias", np.zeros(f))
        self.params = [self.W, self.b]

    def config(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel, "padding": self.padding}

    def forward(self, x, training=False, rng=None):
        n, length, c = x.shape
        k = self.kernel
        pl, pr = same_pad(k)
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0)))
        # (N, L, C, k) -> (N*L, k*C) matching the (k, C, F) kernel layout
        cols = sliding_window_view(xp, k, axis=1).transpose(0, 1, 3, 2).reshape(n * length, k * c)
        y = cols @ self.W.value.reshape(k * c, -1) + self.b.value
        return y.reshape(n, length, self.filters), (cols, x.shape)

    def backward(self, dy, cache, need_dx=True):
        cols, (n, length, c) = cache
        k = self.kernel
        dy2 = dy.reshape(-1, self.filters)
        self.W.grad += (cols.T @ dy2).reshape(self.W.value.shape)
        self.b.grad += dy2.sum(axis=0)
        if not need_dx:
            return None
        dcols = (dy2 @ self.W.value.reshape(k * c, -1).T).reshape(n, length, k, c)
        pl, pr = same_pad(k)
        dxp = np.zeros((n, length + k - 1, c))
        for j in range(k):
            dxp[:, j:j + length] += dcols[:, :, j]
        return dxp[:, pl:pl + length]


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, filters: int, kernel, padding: str = "same"):
        super().__init__()
        kernel = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
        if filters < 1 or min(kernel) < 1 or len(kernel) != 2:
            raise ShapeError("conv2d filters and kernel must be positive")
        if padding != "same":
            raise ShapeError("only 'same' padding is supported")
        self.filters, self.kernel, self.padding = int(filters), tuple(int(k) for k in kernel), padding

    def _infer(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C), got {in_shape}")
        return (in_shape[0], in_shape[1], self.filters)

    def _make_params(self, store, name, rng):
        c = self.in_shape[2]
        kh, kw = self.kernel
        f = self.filters
        self.W = store.add(f"{name}/kernel", glorot_uniform(rng, (kh, kw, c, f), kh * kw * c, kh * kw * f))
        self.b = store.add(f"{name}/bias", np.zeros(f))
        self.params = [self.W, self.b]

    def config(self):
        return {"kind": self.kind, "filters": self.filters, "kernel": list(self.kernel), "padding": self.padding}

    def forward(self, x, training=False, rng=None):
        n, h, w, c = x.shape
        kh, kw = self.kernel
        (pt, pb), (pl, pr) = same_pad(kh), same_pad(kw)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (N, H, W, C, kh, kw)
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, kh * kw * c)
        y = cols @ self.W.value.reshape(kh * kw * c, -1) + self.b.value
        return y.reshape(n, h, w, self.filters), (cols, x.shape)

    def backward(self, dy, cache, need_dx=True):
        cols, (n, h, w, c) = cache
        kh, kw = self.kernel
        dy2 = dy.reshape(-1, self.filters)
        self.W.grad += (cols.T @ dy2).reshape(self.W.value.shape)
        self.b.grad += dy2.sum(axis=0)
        if not need_dx:
            return None
        dcols = (dy2 @ self.W.value.reshape(kh * kw * c, -1).T).reshape(n, h, w, kh, kw, c)
        (pt, _), (pl, _) = same_pad(kh), same_pad(kw)
        dxp = np.zeros((n, h + kh - 1, w + kw - 1, c))
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + h, j:j + w] += dcols[:, :, :, i, j]
        return dxp[:, pt:pt + h, pl:pl + w]


class MaxPool1D(Layer):
    """Non-overlapping max pooling; a trailing remainder is dropped."""

    kind = "maxpool1d"

    def __init__(self, pool: int):
        super().__init__()
        if pool < 1:
            raise ShapeError("pool size must be positive")
        self.pool = int(pool)

    def _infer(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"maxpool1d expects (L, C), got {in_shape}")
        if in_shape[0] // self.pool < 1:
            raise ShapeError(f"pool {self.pool} does not fit length {in_shape[0]}")
        return (in_shape[0] // self.pool, in_shape[1])

    def config(self):
        return {"kind": self.kind, "pool": self.pool}

    def forward(self, x, training=False, rng=None):
        n, length, c = x.shape
        lo = length // self.pool
        xr = x[:, :lo * self.pool].reshape(n, lo, self.pool, c)
        y = xr.max(axis=2)
        return y, (xr, y, x.shape)

    def backward(self, dy, cache, need_dx=True):
        xr, y, shape = cache
        dx = np.zeros(shape)
        dxr = dx[:, :xr.shape[1] * self.pool].reshape(xr.shape)
        _route_first_max(xr, y, dy, dxr, [(slice(None), slice(None), j) for j in range(self.pool)])
        return dx


def _route_first_max(xr, y, dy, dxr, positions):
    """Send dy to the first position (in scan order) holding the window max."""
    taken = np.zeros(y.shape, dtype=bool)
    for pos in positions:
        hit = (xr[pos] == y) & ~taken
        dxr[pos] = dy * hit
        taken |= hit


class MaxPool2D(Layer):
    kind = "maxpool2d"

    def __init__(self, pool):
        super().__init__()
        pool = (pool, pool) if np.isscalar(pool) else tuple(pool)
        if len(pool) != 2 or min(pool) < 1:
            raise ShapeError("pool sizes must be positive")
        self.pool = tuple(int(p) for p in pool)

    def _infer(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d expects (H, W, C), got {in_shape}")
        ho, wo = in_shape[0] // self.pool[0], in_shape[1] // self.pool[1]
        if ho < 1 or wo < 1:
            raise ShapeError(f"pool {self.pool} does not fit {in_shape[:2]}")
        return (ho, wo, in_shape[2])

    def config(self):
        return {"kind": self.kind, "pool": list(self.pool)}

    def forward(self, x, training=False, rng=None):
        n, h, w, c = x.shape
        ph, pw = self.pool
        ho, wo = h // ph, w // pw
        xr = x[:, :ho * ph, :wo * pw].reshape(n, ho, ph, wo, pw, c)
        y = xr.max(axis=(2, 4))
        return y, (xr, y, x.shape)

    def backward(self, dy, cache, need_dx=True):
        xr, y, shape = cache
        ph, pw = self.pool
        n, ho, _, wo, _, c = xr.shape
        dx = np.zeros(shape)
        dxr = dx[:, :ho * ph, :wo * pw].reshape(xr.shape)
        positions = [(slice(None), slice(None), i, slice(None), j) for i in range(ph) for j in range(pw)]
        _route_first_max(xr, y, dy, dxr, positions)
        return dx


class LSTM(Layer):
    """Long short-term memory over (N, T, D) returning the full (N, T, H) sequence.

    Gate order in the stacked weights is input, forget, cell candidate,
    output; the forget-gate bias starts at 1.
    """

    kind = "lstm"

    def __init__(self, units: int, return_sequences: bool = True):
        super().__init__()
        if units < 1:
            raise ShapeError("lstm units must be positive")
        if not return_sequences:
            raise ShapeError("only return_sequences=True is supported")
        self.units = int(units)
        self.return_sequences = True

    def _infer(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"lstm expects (T, D), got {in_shape}")
        return (in_shape[0], self.units)

    def _make_params(self, store, name, rng):
        d, h = self.in_shape[1], self.units
        self.Wx = store.add(f"{name}/kernel", glorot_uniform(rng, (d, 4 * h), d, 4 * h))
        self.Wh = store.add(f"{name}/recurrent_kernel", glorot_uniform(rng, (h, 4 * h), h, 4 * h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        self.b = store.add(f"{name}/bias", b)
        self.params = [self.Wx, self.Wh, self.b]

    def config(self):
        return {"kind": self.kind, "units": self.units, "return_sequences": True}

    def forward(self, x, training=False, rng=None):
        n, steps, d = x.shape
        h = self.units
        # sigmoid(z) = 0.5 + 0.5 tanh(z / 2): pre-scale the sigmoid gate columns
        # so one tanh per step covers all four gates
        scale = np.full(4 * h, 0.5)
        scale[2 * h:3 * h] = 1.0
        shift = 0.5 - 0.5 * (scale == 1.0)
        # time-major buffers keep each step's slice contiguous
        xt = np.ascontiguousarray(x.transpose(1, 0, 2))
        gates = (xt.reshape(-1, d) @ (self.Wx.value * scale) + self.b.value * scale).reshape(steps, n, 4 * h)
        wh = self.Wh.value * scale
        cs = np.zeros((steps + 1, n, h))
        hs = np.zeros((steps + 1, n, h))
        tc = np.empty((steps, n, h))
        for t in range(steps):
            g = gates[t]
            g += hs[t] @ wh
            np.tanh(g, out=g)
            g *= scale
            g += shift
            c = cs[t + 1]
            np.multiply(g[:, h:2 * h], cs[t], out=c)
            c += g[:, :h] * g[:, 2 * h:3 * h]
            np.tanh(c, out=tc[t])
            np.multiply(g[:, 3 * h:], tc[t], out=hs[t + 1])
        return hs[1:].transpose(1, 0, 2).copy(), (xt, gates, cs, hs, tc)

    def backward(self, dy, cache, need_dx=True):
        xt, gates, cs, hs, tc = cache
        steps, n, d = xt.shape
        h = self.units
        i, f, cc, o = (gates[..., k * h:(k + 1) * h] for k in range(4))
        # time-independent factors, computed once outside the recurrence
        dc_from_h = o * (1.0 - tc ** 2)
        coef = np.stack([cc * i * (1.0 - i), cs[:-1] * f * (1.0 - f), i * (1.0 - cc ** 2)], axis=2)
        coef_o = tc * o * (1.0 - o)
        dyt = np.ascontiguousarray(dy.transpose(1, 0, 2))
        wh_t = np.ascontiguousarray(self.Wh.value.T)
        dz_all = np.empty((steps, n, 4, h))
        dh_next = np.zeros((n, h))
        dc_next = np.zeros((n, h))
        for t in range(steps - 1, -1, -1):
            dh = dyt[t] + dh_next
            dc = dh * dc_from_h[t]
            dc += dc_next
            dz = dz_all[t]
            np.multiply(coef[t], dc[:, None, :], out=dz[:, :3])
            np.multiply(dh, coef_o[t], out=dz[:, 3])
            dc_next = dc * f[t]
            dh_next = dz.reshape(n, 4 * h) @ wh_t
        dz2 = dz_all.reshape(-1, 4 * h)
        self.Wx.grad += xt.reshape(-1, d).T @ dz2
        self.Wh.grad += hs[:-1].reshape(-1, h).T @ dz2
        self.b.grad += dz2.sum(axis=0)
        if not need_dx:
            return None
        return (dz2 @ self.Wx.value.T).reshape(steps, n, d).transpose(1, 0, 2)
