"""Forecasters whose propagator and decoder run in anchor-relative space, and
encoder/decoder swap grids for relative and absolute latents.

A relative forecaster maps a window to ``s = (cos(z, A) - mu) / sigma``,
where ``A`` holds the latents of ``m`` fixed training windows and the
per-anchor statistics ``mu, sigma`` come from the training split. Because
``s`` always has ``m`` entries, any encoder can feed any decoder trained on
the same anchor windows.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dynsys import NormalizationStats, draw_sample_index, gather_windows, split_windows
from .errors import AnchorMismatch, ConfigError, DimMismatch, ZeroVariance
from .forecasters import Forecaster, ForecasterSpec, error_report, evaluate, predict
from .forecasters.training import PREDICT_CHUNK, fit, load_bundle, save_bundle
from .relgeom.embedding import cosine_to

STITCH_ANCHORS = 32
STAT_STRIDE = 5
RELATIVE_VERSION = 1


def stitch_anchor_index(dataset, L, H, m=STITCH_ANCHORS, seed=0):
    """Global anchor windows, ``(m, 2)`` (traj_id, start) pairs in the train split."""
    return draw_sample_index(dataset, L, H, m, seed, split="train")


def anchor_stats(Z, A):
    """Per-anchor mean and population std of ``cos(z, a_i)`` over the rows of ``Z``."""
    S = cosine_to(Z, A)
    mu, sigma = S.mean(axis=0), S.std(axis=0)
    bad = np.flatnonzero(~(sigma > 1e-12))
    if bad.size:
        raise ZeroVariance(f"similarity to anchor {int(bad[0])} is constant over the training windows")
    return mu, sigma


def relative_transform(z, anchor_latents, mu, sigma):
    """Differentiable ``(cos(z, A) - mu) / sigma``; ``z`` may be a Tensor."""
    z = ad.as_tensor(z)
    S = ad.cosine_matrix(z, anchor_latents)
    return ad.mul(ad.sub(S, Tensor(mu)), Tensor(np.broadcast_to(1.0 / sigma, S.shape).copy()))


class _RelativeNet:
    """Callable view used by the shared prediction path."""

    def __init__(self, enc_net, anchor_latents, mu, sigma, dec_net):
        self.enc_net, self.dec_net = enc_net, dec_net
        self.A, self.mu, self.sigma = anchor_latents, mu, sigma

    def encode(self, x):
        return relative_transform(self.enc_net.encode(x), self.A, self.mu, self.sigma)

    def __call__(self, x, teacher=None):
        return self.dec_net.decode(self.dec_net.propagate(self.encode(x)))


@dataclass
class RelativeForecaster:
    spec: ForecasterSpec
    dim: int
    parameters: dict
    anchor_index: np.ndarray
    anchor_latents: np.ndarray
    sim_mean: np.ndarray
    sim_std: np.ndarray
    norm: NormalizationStats
    dataset_fingerprint: str
    val_mse: float = math.nan
    train_log: list = field(default_factory=list)
    input_noise: float = 0.0
    _net: object = field(default=None, repr=False, compare=False)

    @property
    def m(self):
        return len(self.anchor_index)

    @property
    def label(self):
        return self.spec.label

    @property
    def forecaster_id(self):
        return f"rel-{self.label}#s{self.spec.seed}"

    def network(self):
        if self._net is None:
            net = Forecaster(self.spec, self.dim, code_dim=self.m)
            net.load_arrays(self.parameters)
            self._net = net
        return self._net

    def model(self):
        net = self.network()
        return _RelativeNet(net, self.anchor_latents, self.sim_mean, self.sim_std, net)

    def save(self, path):
        meta = {
            "kind": "relative",
            "version": RELATIVE_VERSION,
            "spec": self.spec.to_dict(),
            "dim": self.dim,
            "norm": {"mean": self.norm.mean.tolist(), "std": self.norm.std.tolist()},
            "dataset_fingerprint": self.dataset_fingerprint,
            "val_mse": self.val_mse,
            "train_log": self.train_log,
        }
        arrays = dict(self.parameters)
        arrays.update({
            "__anchor_index__": self.anchor_index, "__anchor_latents__": self.anchor_latents,
            "__sim_mean__": self.sim_mean, "__sim_std__": self.sim_std,
        })
        return save_bundle(path, meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = load_bundle(path)
        if meta.get("kind") != "relative" or meta.get("version") != RELATIVE_VERSION:
            raise ConfigError(f"{path} is not a version-{RELATIVE_VERSION} relative checkpoint")
        extra = {k: arrays.pop(k) for k in ("__anchor_index__", "__anchor_latents__", "__sim_mean__", "__sim_std__")}
        return cls(
            spec=ForecasterSpec.from_dict(meta["spec"]), dim=meta["dim"], parameters=arrays,
            anchor_index=extra["__anchor_index__"], anchor_latents=extra["__anchor_latents__"],
            sim_mean=extra["__sim_mean__"], sim_std=extra["__sim_std__"],
            norm=NormalizationStats(np.array(meta["norm"]["mean"]), np.array(meta["norm"]["std"])),
            dataset_fingerprint=meta["dataset_fingerprint"], val_mse=meta["val_mse"], train_log=meta["train_log"],
        )


def _encode_np(net, inputs):
    with ad.no_grad():
        return np.concatenate(
            [net.encode(inputs[i:i + PREDICT_CHUNK]).data for i in range(0, len(inputs), PREDICT_CHUNK)], axis=0
        )


def train_relative(spec, dataset, anchor_index, epochs_max=100, patience=20, batch_size=64, stride=1,
                   val_stride=1, lr=1e-3, callback=None):
    """Train encoder, propagator and decoder end to end in relative space.

    Anchor latents are re-encoded inside every batch so gradients reach the
    encoder through both sides of the cosine. The per-anchor statistics are
    refreshed from the training windows at the start of every epoch and
    frozen together with the anchor latents once training ends.
    """
    if spec.family not in ("mlp", "transformer"):
        raise ConfigError(f"relative stitching supports mlp and transformer families, not {spec.family!r}")
    dt = dataset.system.dt if dataset.system.dt is not None else 1.0
    spec = spec.replace(dt=float(dt))
    anchor_index = np.asarray(anchor_index, dtype=np.int64)
    m = len(anchor_index)
    net = Forecaster(spec, dataset.dim, code_dim=m)
    params = net.parameters()
    anchor_inputs = gather_windows(dataset, anchor_index, spec.L, spec.H, "train").inputs
    tr = split_windows(dataset.splits["train"], spec.L, spec.H, stride)
    va = split_windows(dataset.splits["val"], spec.L, spec.H, val_stride)
    stat_inputs = split_windows(dataset.splits["train"], spec.L, spec.H, STAT_STRIDE).inputs
    state = {}

    def refresh(epoch=None):
        A = _encode_np(net, anchor_inputs)
        state["A"] = A
        state["mu"], state["sigma"] = anchor_stats(_encode_np(net, stat_inputs), A)

    def batch_loss(rows):
        A = net.encode(anchor_inputs)
        s = relative_transform(net.encode(tr.inputs[rows]), A, state["mu"], state["sigma"])
        return ad.mse(net.decode(net.propagate(s)), tr.targets[rows])

    def val_loss():
        view = _RelativeNet(net, state["A"], state["mu"], state["sigma"], net)
        return float(np.mean((predict(view, va.inputs) - va.targets) ** 2))

    log, _ = fit(params, batch_loss, val_loss, len(tr), seed=spec.seed, epochs_max=epochs_max, patience=patience,
                 batch_size=batch_size, lr=lr, grad_clip=spec.grad_clip, epoch_start=refresh, callback=callback)
    refresh()
    rf = RelativeForecaster(
        spec=spec, dim=dataset.dim, parameters={k: p.data.copy() for k, p in params.items()},
        anchor_index=anchor_index, anchor_latents=state["A"], sim_mean=state["mu"], sim_std=state["sigma"],
        norm=dataset.norm, dataset_fingerprint=dataset.fingerprint(), train_log=log,
    )
    rf.val_mse = evaluate(rf, dataset, "val").mse
    return rf


class _StitchedAbsolute:
    def __init__(self, enc_model, dec_model):
        self.enc_model, self.dec_model = enc_model, dec_model

    def __call__(self, x, teacher=None):
        return self.dec_model.decode(self.dec_model.propagate(self.enc_model.encode(x)))


def _stitch_eval(view, dataset, L, H, split):
    w = split_windows(dataset.splits[split], L, H)
    return error_report(predict(view, w.inputs), w.targets)


def _check_windows(a, b):
    if (a.spec.L, a.spec.H, a.dim) != (b.spec.L, b.spec.H, b.dim):
        raise DimMismatch(f"window shapes differ: {a.forecaster_id} vs {b.forecaster_id}")


def stitch(enc_from, dec_from, dataset, split="test"):
    """Encoder (and anchor transform) of ``enc_from`` feeding the propagator
    and decoder of ``dec_from``, without retraining."""
    _check_windows(enc_from, dec_from)
    if not np.array_equal(enc_from.anchor_index, dec_from.anchor_index):
        raise AnchorMismatch(f"{enc_from.forecaster_id} and {dec_from.forecaster_id} use different anchor windows")
    view = _RelativeNet(enc_from.network(), enc_from.anchor_latents, enc_from.sim_mean, enc_from.sim_std,
                        dec_from.network())
    return _stitch_eval(view, dataset, enc_from.spec.L, enc_from.spec.H, split)


def stitch_absolute(enc_from, dec_from, dataset, split="test"):
    """Raw latent of ``enc_from`` fed to ``dec_from``; latent sizes must match."""
    _check_windows(enc_from, dec_from)
    if enc_from.spec.k != dec_from.spec.k:
        raise DimMismatch(f"latent sizes differ: {enc_from.spec.k} vs {dec_from.spec.k}")
    view = _StitchedAbsolute(enc_from.model(), dec_from.model())
    return _stitch_eval(view, dataset, enc_from.spec.L, enc_from.spec.H, split)


@dataclass
class StitchTable:
    """Family-level stitching MSE.

    ``cells[(enc, dec)]`` is the mean test MSE over encoder/decoder instance
    pairs, using distinct instances when the cell has any (so a diagonal
    cell reflects cross-seed transfer); ``None`` marks an invalid cell.
    """

    mode: str
    families: list
    cells: dict
    pairs: list

    def value(self, enc, dec):
        return self.cells.get((enc, dec))

    def rows(self):
        out = []
        for e in self.families:
            for d in self.families:
                v = self.cells.get((e, d))
                out.append([e, d, "NA" if v is None else repr(v)])
        return out


def stitch_grid(instances, dataset, mode="relative", split="test"):
    if mode not in ("absolute", "relative"):
        raise ConfigError(f"mode must be 'absolute' or 'relative', got {mode!r}")
    fn = stitch if mode == "relative" else stitch_absolute
    families = []
    for inst in instances:
        if inst.label not in families:
            families.append(inst.label)
    pairs, grouped = [], {}
    for enc in instances:
        for dec in instances:
            try:
                mse = fn(enc, dec, dataset, split).mse
            except (DimMismatch, AnchorMismatch):
                mse = None
            same = enc.forecaster_id == dec.forecaster_id
            pairs.append({"encoder": enc.forecaster_id, "decoder": dec.forecaster_id, "enc_family": enc.label,
                          "dec_family": dec.label, "same_instance": same, "mse": mse})
            g = grouped.setdefault((enc.label, dec.label), {"cross": [], "self": []})
            if mse is not None:
                g["self" if same else "cross"].append(mse)
    cells = {}
    for key, g in grouped.items():
        vals = g["cross"] or g["self"]
        cells[key] = float(np.mean(vals)) if vals else None
    return StitchTable(mode, families, cells, pairs)
