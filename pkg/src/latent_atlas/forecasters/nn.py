"""Layers built on the autodiff engine."""

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


class Module:
    """Parameter container; parameters are discovered in attribute order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return dict(self.named_parameters())


class Linear(Module):
    def __init__(self, rng, n_in, n_out):
        self.weight = ad.glorot(rng, n_in, n_out)
        self.bias = ad.zeros(n_out)

    def __call__(self, x):
        if x.ndim == 2:
            return ad.add(ad.matmul(x, self.weight), self.bias)
        lead = x.shape[:-1]
        flat = ad.reshape(x, (-1, x.shape[-1]))
        out = ad.add(ad.matmul(flat, self.weight), self.bias)
        return ad.reshape(out, lead + (self.weight.shape[1],))


class MLP(Module):
    """``depth`` tanh hidden layers of ``width`` followed by a linear output."""

    def __init__(self, rng, n_in, width, depth, n_out):
        sizes = [n_in] + [width] * depth
        self.hidden = [Linear(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self.out = Linear(rng, sizes[-1], n_out)

    def __call__(self, x):
        for layer in self.hidden:
            x = ad.tanh(layer(x))
        return self.out(x)


class GRUCell(Module):
    """GRU update with gate order (reset, update, candidate).

    ``h' = (1 - u) * n + u * h`` with ``n = tanh(W_n x + b_n + r * (U_n h + c_n))``.
    """

    def __init__(self, rng, n_in, hidden):
        self.hidden = hidden
        self.w_x = ad.glorot(rng, n_in, 3 * hidden) if n_in else None
        self.w_h = ad.glorot(rng, hidden, 3 * hidden)
        self.b_x = ad.zeros(3 * hidden)
        self.b_h = ad.zeros(3 * hidden)

    def input_part(self, x):
        if x is None or self.w_x is None:
            return self.b_x
        return ad.add(ad.matmul(x, self.w_x), self.b_x)

    def __call__(self, gx, h):
        """``gx`` is the precomputed input projection (B, 3h) or a bias (3h,)."""
        n = self.hidden
        gh = ad.add(ad.matmul(h, self.w_h), self.b_h)
        if gx.ndim == 1:
            rz = ad.sigmoid(ad.add(gh[:, : 2 * n], gx[: 2 * n]))
            cand_x = gx[2 * n:]
        else:
            rz = ad.sigmoid(ad.add(gh[:, : 2 * n], gx[:, : 2 * n]))
            cand_x = gx[:, 2 * n:]
        r, u = rz[:, :n], rz[:, n:]
        cand = ad.tanh(ad.add(ad.mul(r, gh[:, 2 * n:]), cand_x))
        # (1 - u) * cand + u * h  ==  cand + u * (h - cand)
        return ad.add(cand, ad.mul(u, ad.sub(h, cand)))


def sinusoidal_encoding(length, d_model):
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadAttention(Module):
    def __init__(self, rng, d_model, heads):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} is not divisible by heads={heads}")
        self.heads = heads
        self.q = Linear(rng, d_model, d_model)
        self.k = Linear(rng, d_model, d_model)
        self.v = Linear(rng, d_model, d_model)
        self.o = Linear(rng, d_model, d_model)

    def _split(self, x, B, T):
        dh = x.shape[-1] // self.heads
        x = ad.reshape(x, (B, T, self.heads, dh))
        return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (B * self.heads, T, dh))

    def __call__(self, x, causal=False):
        B, T, D = x.shape
        dh = D // self.heads
        q, k, v = (self._split(lin(x), B, T) for lin in (self.q, self.k, self.v))
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
        if causal:
            mask = np.triu(np.full((T, T), -1e9), k=1)
            scores = ad.add(scores, np.broadcast_to(mask, scores.shape).copy())
        att = ad.matmul(ad.softmax(scores, axis=-1), v)
        att = ad.reshape(ad.transpose(ad.reshape(att, (B, self.heads, T, dh)), (0, 2, 1, 3)), (B, T, D))
        return self.o(att)


class TransformerBlock(Module):
    """Residual self-attention followed by a residual tanh feed-forward."""

    def __init__(self, rng, d_model, heads, ff_width):
        self.attn = MultiHeadAttention(rng, d_model, heads)
        self.ff1 = Linear(rng, d_model, ff_width)
        self.ff2 = Linear(rng, ff_width, d_model)

    def __call__(self, x, causal=False):
        x = ad.add(x, self.attn(x, causal=causal))
        return ad.add(x, self.ff2(ad.tanh(self.ff1(x))))
