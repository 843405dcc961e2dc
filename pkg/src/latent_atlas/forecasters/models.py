"""Encoder-propagator-decoder forecasters and the echo-state baseline.

A forecaster maps an input window ``(B, L, d)`` to a latent ``z0`` of size
``k``, evolves it with a propagator to ``zH`` and decodes a ``(B, H, d)``
forecast. The relative (stitchable) variant reuses the same pieces but lets
the propagator and decoder work on a different width than the encoder.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ConfigError, NonFiniteError, ShapeError, SingularSystem
from .nn import GRUCell, Linear, MLP, Module, TransformerBlock, sinusoidal_encoding

FAMILIES = ("mlp", "rnn", "a_rnn", "transformer", "esn")
PROPAGATORS = ("identity", "koopman", "node")

_BASE_LABEL = {"mlp": "MLP", "rnn": "RNN", "a_rnn": "A-RNN", "transformer": "TF", "esn": "ESN"}
_PREFIX = {"identity": "", "koopman": "K-", "node": "N-"}

# heatmap order used for every model-level report
MODEL_ORDER = (
    "True System", "MLP", "K-MLP", "N-MLP", "RNN", "A-RNN", "K-RNN", "N-RNN",
    "TF", "N-TF", "K-TF", "ESN",
)


@dataclass(frozen=True)
class ForecasterSpec:
    family: str
    propagator: str = "identity"
    L: int = 20
    H: int = 50
    latent_dim: int = 32
    width: int = 64
    depth: int = 2
    d_model: int = 64
    heads: int = 2
    layers: int = 1
    reservoir_size: int = 512
    spectral_radius: float = 1.2
    input_scale: float = 2.0
    reservoir_density: float = 0.05
    ridge_lambda: float = 1.0
    node_steps: int = 0
    dt: float = 0.01
    decoder_conditioning: str = "hidden_init"
    init: str = "glorot"
    grad_clip: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.propagator not in PROPAGATORS:
            raise ConfigError(f"unknown propagator {self.propagator!r}; expected one of {PROPAGATORS}")
        if self.family == "esn" and self.propagator != "identity":
            raise ConfigError("the echo-state network only supports the identity propagator")
        if self.latent_dim < 1 or self.H < 1 or self.L < 1:
            raise ConfigError("latent_dim, H and L must all be >= 1")

    @property
    def label(self):
        return _PREFIX[self.propagator] + _BASE_LABEL[self.family]

    @property
    def k(self):
        return self.reservoir_size if self.family == "esn" else self.latent_dim

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return ForecasterSpec(**data)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown forecaster fields {sorted(unknown)}")
        return cls(**data)


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _tile_rows(x, n):
    return np.broadcast_to(x, (n,) + x.shape).copy()


# -- encoders --------------------------------------------------------------------

class MLPEncoder(Module):
    def __init__(self, rng, spec, dim):
        self.net = MLP(rng, spec.L * dim, spec.width, spec.depth, spec.latent_dim)

    def __call__(self, x):
        B = x.shape[0]
        return self.net(ad.reshape(ad.as_tensor(x), (B, -1)))


class GRUEncoder(Module):
    """Final hidden state of a GRU run over the window, starting from zero."""

    def __init__(self, rng, spec, dim):
        self.cell = GRUCell(rng, dim, spec.latent_dim)

    def __call__(self, x):
        x = ad.as_tensor(x)
        B, L, d = x.shape
        gx = ad.reshape(self.cell.input_part(ad.reshape(x, (B * L, d))), (B, L, -1))
        h = Tensor(np.zeros((B, self.cell.hidden)))
        for t in range(L):
            h = self.cell(gx[:, t, :], h)
        return h


class TransformerEncoder(Module):
    """Self-attention stack with sinusoidal positions, mean-pooled to the latent."""

    def __init__(self, rng, spec, dim):
        self.inp = Linear(rng, dim, spec.d_model)
        self.blocks = [TransformerBlock(rng, spec.d_model, spec.heads, 2 * spec.d_model) for _ in range(spec.layers)]
        self.out = Linear(rng, spec.d_model, spec.latent_dim)
        self._pe = sinusoidal_encoding(spec.L, spec.d_model)

    def __call__(self, x):
        x = ad.as_tensor(x)
        B = x.shape[0]
        h = ad.add(self.inp(x), _tile_rows(self._pe, B))
        for block in self.blocks:
            h = block(h)
        return self.out(ad.mean(h, axis=1))


# -- propagators -----------------------------------------------------------------

class IdentityPropagator(Module):
    def __call__(self, z):
        return z


class KoopmanPropagator(Module):
    """``z_{n+1} = K z_n`` applied ``steps`` times."""

    def __init__(self, rng, k, steps):
        self.K = Tensor(np.eye(k) + 0.01 * rng.standard_normal((k, k)) / np.sqrt(k), requires_grad=True)
        self.steps = steps

    def __call__(self, z):
        Kt = ad.transpose(self.K)
        for _ in range(self.steps):
            z = ad.matmul(z, Kt)
        return z


class NeuralODEPropagator(Module):
    """Fixed-step RK4 integration of ``dz/dt = f(z, t)`` over ``[0, H * dt]``.

    Gradients flow through the discretization (discretize-then-optimize).
    """

    def __init__(self, rng, k, width, horizon, dt, n_steps):
        self.f = MLP(rng, k + 1, width, 1, k)
        self.t_end = horizon * dt
        self.n_steps = n_steps or horizon

    def field(self, z, t):
        B = z.shape[0]
        return self.f(ad.concat([z, Tensor(np.full((B, 1), t))], axis=1))

    def __call__(self, z, n_steps=None):
        n = n_steps or self.n_steps
        h = self.t_end / n
        for i in range(n):
            t = i * h
            k1 = self.field(z, t)
            k2 = self.field(ad.add(z, ad.mul(k1, 0.5 * h)), t + 0.5 * h)
            k3 = self.field(ad.add(z, ad.mul(k2, 0.5 * h)), t + 0.5 * h)
            k4 = self.field(ad.add(z, ad.mul(k3, h)), t + h)
            incr = ad.add(ad.add(k1, k4), ad.mul(ad.add(k2, k3), 2.0))
            z = ad.add(z, ad.mul(incr, h / 6.0))
        return z


# -- decoders ----------------------------------------------------------------------

class MLPDecoder(Module):
    def __init__(self, rng, spec, dim, k):
        self.H, self.dim = spec.H, dim
        self.net = MLP(rng, k, spec.width, spec.depth, spec.H * dim)

    def __call__(self, z, teacher=None):
        return ad.reshape(self.net(z), (z.shape[0], self.H, self.dim))


class GRUDecoder(Module):
    """GRU whose hidden state is initialised with the latent.

    Without ``autoregressive`` the cell runs input-free for ``H`` steps. With
    it, step 1 sees a zero input and step ``t`` sees the step ``t - 1``
    output, or the true value when ``teacher`` targets are supplied.
    """

    def __init__(self, rng, spec, dim, k, autoregressive=False):
        self.H, self.dim = spec.H, dim
        self.autoregressive = autoregressive
        self.cell = GRUCell(rng, dim if autoregressive else 0, k)
        self.head = Linear(rng, k, dim)

    def __call__(self, z, teacher=None):
        B = z.shape[0]
        h = z
        if not self.autoregressive:
            states = []
            for _ in range(self.H):
                h = self.cell(self.cell.b_x, h)
                states.append(h)
            return self.head(ad.stack(states, axis=1))

        if teacher is not None:
            prev = ad.reshape(ad.as_tensor(_data(teacher)[:, : self.H - 1]), (-1, self.dim))
            gx = ad.reshape(self.cell.input_part(prev), (B, self.H - 1, -1)) if self.H > 1 else None
            states = []
            for t in range(self.H):
                h = self.cell(self.cell.b_x if t == 0 else gx[:, t - 1, :], h)
                states.append(h)
            return self.head(ad.stack(states, axis=1))

        outputs = []
        gx = self.cell.b_x
        for _ in range(self.H):
            h = self.cell(gx, h)
            y = self.head(h)
            outputs.append(y)
            gx = self.cell.input_part(y)
        return ad.stack(outputs, axis=1)


class TransformerDecoder(Module):
    """One-shot block decoder: ``H`` position-coded copies of the latent go
    through causally masked self-attention and a linear head."""

    def __init__(self, rng, spec, dim, k):
        self.H = spec.H
        self.inp = Linear(rng, k, spec.d_model)
        self.blocks = [TransformerBlock(rng, spec.d_model, spec.heads, 2 * spec.d_model) for _ in range(spec.layers)]
        self.out = Linear(rng, spec.d_model, dim)
        self._pe = sinusoidal_encoding(spec.H, spec.d_model)

    def __call__(self, z, teacher=None):
        B = z.shape[0]
        tokens = ad.stack([self.inp(z)] * self.H, axis=1)
        h = ad.add(tokens, _tile_rows(self._pe, B))
        for block in self.blocks:
            h = block(h, causal=True)
        return self.out(h)


_ENCODERS = {"mlp": MLPEncoder, "rnn": GRUEncoder, "a_rnn": GRUEncoder, "transformer": TransformerEncoder}


def build_propagator(spec, rng, k):
    if spec.propagator == "identity":
        return IdentityPropagator()
    if spec.propagator == "koopman":
        return KoopmanPropagator(rng, k, spec.H)
    return NeuralODEPropagator(rng, k, spec.width, spec.H, spec.dt, spec.node_steps)


def build_decoder(spec, rng, dim, k):
    if spec.family == "mlp":
        return MLPDecoder(rng, spec, dim, k)
    if spec.family in ("rnn", "a_rnn"):
        return GRUDecoder(rng, spec, dim, k, autoregressive=spec.family == "a_rnn")
    return TransformerDecoder(rng, spec, dim, k)


class Forecaster(Module):
    """Gradient-trained encoder-propagator-decoder model.

    ``code_dim`` is the width the propagator and decoder operate on; it
    defaults to the encoder latent size.
    """

    def __init__(self, spec, dim, code_dim=None):
        if spec.family == "esn":
            raise ConfigError("use EchoStateNetwork for family 'esn'")
        rng = np.random.default_rng([spec.seed, 3])
        self.spec = spec
        self.dim = dim
        code_dim = code_dim or spec.latent_dim
        self.encoder = _ENCODERS[spec.family](rng, spec, dim)
        self.propagator = build_propagator(spec, rng, code_dim)
        self.decoder = build_decoder(spec, rng, dim, code_dim)

    def named_parameters(self, prefix=""):
        for part in ("encoder", "propagator", "decoder"):
            yield from getattr(self, part).named_parameters(f"{prefix}{part}.")

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.spec.L, self.dim):
            raise ShapeError(f"expected windows of shape (B, {self.spec.L}, {self.dim}), got {x.shape}")
        return self.encoder(Tensor(x))

    def propagate(self, z):
        return self.propagator(ad.as_tensor(z))

    def decode(self, z, teacher=None):
        return self.decoder(ad.as_tensor(z), teacher=teacher)

    def __call__(self, x, teacher=None):
        return self.decode(self.propagate(self.encode(x)), teacher=teacher)

    def load_arrays(self, arrays):
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise ShapeError(f"checkpoint is missing parameters {sorted(missing)}")
        for name, p in params.items():
            if arrays[name].shape != p.data.shape:
                raise ShapeError(f"parameter {name}: checkpoint {arrays[name].shape} vs model {p.data.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)


class EchoStateNetwork:
    """Fixed sparse reservoir ``r_{k+1} = tanh(W r_k + U x_k)`` with a ridge readout.

    The reservoir starts at zero and consumes all ``L`` inputs; the final
    state is the latent. The readout maps ``[r_L, 1]`` to the flattened
    ``H x d`` forecast.
    """

    def __init__(self, spec, dim):
        self.spec = spec
        self.dim = dim
        n = spec.reservoir_size
        rng = np.random.default_rng([spec.seed, 3])
        W = rng.uniform(-1.0, 1.0, size=(n, n)) * (rng.random((n, n)) < spec.reservoir_density)
        radius = np.max(np.abs(np.linalg.eigvals(W))) if n > 0 else 0.0
        self.W = W * (spec.spectral_radius / radius) if radius > 0 else W
        self.U = rng.uniform(-spec.input_scale, spec.input_scale, size=(n, dim))
        self.W_out = np.zeros((n + 1, spec.H * dim))

    def parameters(self):
        return {"W": self.W, "U": self.U, "W_out": self.W_out}

    def load_arrays(self, arrays):
        self.W = np.array(arrays["W"])
        self.U = np.array(arrays["U"])
        self.W_out = np.array(arrays["W_out"])

    def run(self, x):
        """Reservoir states after each input, shape ``(B, L, n)``."""
        x = np.asarray(x, dtype=np.float64)
        r = np.zeros((x.shape[0], self.W.shape[0]))
        states = np.empty((x.shape[0], x.shape[1], self.W.shape[0]))
        for t in range(x.shape[1]):
            r = np.tanh(r @ self.W.T + x[:, t] @ self.U.T)
            states[:, t] = r
        return states

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.dim:
            raise ShapeError(f"expected windows of shape (B, L, {self.dim}), got {x.shape}")
        r = np.zeros((x.shape[0], self.W.shape[0]))
        for t in range(x.shape[1]):
            r = np.tanh(r @ self.W.T + x[:, t] @ self.U.T)
        if not np.all(np.isfinite(r)):
            raise NonFiniteError("reservoir state is not finite")
        return Tensor(r)

    def propagate(self, z):
        return ad.as_tensor(z)

    def decode(self, z, teacher=None):
        r = _data(z)
        G = np.hstack([r, np.ones((r.shape[0], 1))])
        return Tensor((G @ self.W_out).reshape(r.shape[0], self.spec.H, self.dim))

    def __call__(self, x, teacher=None):
        return self.decode(self.encode(x))

    def fit_readout(self, x, y, lam):
        """Ridge readout: solve ``(G^T G + lam I) w = G^T y`` with ``G = [r_L, 1]``."""
        r = self.encode(x).data
        G = np.hstack([r, np.ones((r.shape[0], 1))])
        Y = np.asarray(y).reshape(len(y), -1)
        self.W_out = ridge_solve(G, Y, lam)
        return G, Y


def ridge_solve(G, Y, lam):
    if lam < 0:
        raise ConfigError(f"ridge lambda must be >= 0, got {lam}")
    if lam == 0 and np.linalg.matrix_rank(G) < G.shape[1]:
        raise SingularSystem("ridge normal equations are singular at lambda = 0; use lambda > 0")
    A = G.T @ G + lam * np.eye(G.shape[1])
    try:
        return np.linalg.solve(A, G.T @ Y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"ridge normal equations are singular: {exc}") from None


class TrueSystem:
    """Reference "encoder": the flattened normalized input window."""

    label = "True System"
    forecaster_id = "True System"

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        return Tensor(x.reshape(x.shape[0], -1))


TRUE_SYSTEM = TrueSystem()


def build_model(spec, dim):
    return EchoStateNetwork(spec, dim) if spec.family == "esn" else Forecaster(spec, dim)
