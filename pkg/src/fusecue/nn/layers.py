"""Minimal layers with explicit backward passes.

Activations are numpy arrays in NCHW layout. Each layer caches what its
backward pass needs during ``forward`` and accumulates parameter
gradients into ``Param.grad``.
"""

from __future__ import annotations

import math

import numpy as np

from .. import kernels


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def size(self) -> int:
        return self.value.size


class Layer:
    def params(self) -> dict[str, Param]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grad(self):
        for p in self.params().values():
            p.grad[...] = 0


class Conv2d(Layer):
    """Stride-1 'same' convolution, optional bias."""

    def __init__(self, cin, cout, k=3, bias=False, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        fan_in = cin * k * k
        self.k = k
        self.pad = k // 2
        self.weight = Param((rng.standard_normal((cout, cin, k, k)) * math.sqrt(2.0 / fan_in)).astype(dtype))
        self.bias = Param(np.zeros(cout, dtype=dtype)) if bias else None

    def params(self):
        out = {"weight": self.weight}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def forward(self, x, train=False):
        n, _, h, w = x.shape
        cout = self.weight.value.shape[0]
        cols = kernels.im2col(x, self.k, self.pad)
        out = self.weight.value.reshape(cout, -1) @ cols
        if self.bias is not None:
            out += self.bias.value[:, None]
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(out.reshape(cout, n, h, w).transpose(1, 0, 2, 3))

    def backward(self, dout):
        cols, shape = self._cache
        cout = self.weight.value.shape[0]
        d = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(cout, -1)
        self.weight.grad += (d @ cols.T).reshape(self.weight.value.shape)
        if self.bias is not None:
            self.bias.grad += d.sum(axis=1)
        dcols = self.weight.value.reshape(cout, -1).T @ d
        return kernels.col2im(dcols, shape, self.k, self.pad)


class BatchNorm2d(Layer):
    """Per-channel batch normalisation.

    Running statistics follow ``new = (1 - momentum) * old + momentum *
    batch`` with the unbiased batch variance.
    """

    def __init__(self, c, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(np.ones(c, dtype=dtype))
        self.beta = Param(np.zeros(c, dtype=dtype))
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=False):
        dt = x.dtype
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
            var = np.square(x - mean[None, :, None, None].astype(dt)).mean(axis=(0, 2, 3), dtype=np.float64)
            mom = self.momentum
            self.running_mean[...] = (1 - mom) * self.running_mean + mom * mean
            self.running_var[...] = (1 - mom) * self.running_var + mom * var * (m / max(m - 1, 1))
        else:
            mean = self.running_mean.astype(np.float64)
            var = self.running_var.astype(np.float64)
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(dt)
        xhat = (x - mean.astype(dt)[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train)
        return self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]

    def backward(self, dout):
        xhat, inv_std, train = self._cache
        self.gamma.grad += (dout * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.gamma.value[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3)) / m
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3)) / m
        return (dxhat - s1[None, :, None, None] - xhat * s2[None, :, None, None]) * inv_std[None, :, None, None]


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._mask, dout, 0).astype(dout.dtype, copy=False)


class MaxPool2(Layer):
    def forward(self, x, train=False):
        out, arg = kernels.maxpool2_forward(np.ascontiguousarray(x))
        self._cache = (arg, x.shape)
        return out

    def backward(self, dout):
        arg, shape = self._cache
        return kernels.maxpool2_backward(np.ascontiguousarray(dout), arg, shape)


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None] / (h * w), self._shape).astype(dout.dtype)


class Linear(Layer):
    def __init__(self, fin, fout, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        bound = 1.0 / math.sqrt(fin)
        self.weight = Param(rng.uniform(-bound, bound, (fout, fin)).astype(dtype))
        self.bias = Param(np.zeros(fout, dtype=dtype))

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train=False):
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dout):
        self.weight.grad += dout.T @ self._x
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        self.layers = layers

    def params(self):
        return {f"{name}.{k}": p for name, layer in self.layers for k, p in layer.params().items()}

    def buffers(self):
        return {f"{name}.{k}": b for name, layer in self.layers for k, b in layer.buffers().items()}

    def forward(self, x, train=False):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout
