"""Training loop, checkpoints, evaluation and latent collection."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Adam, Tensor
from ..dynsys import NormalizationStats, gather_windows, split_windows
from ..errors import ConfigError, Diverged, NonFiniteError, ShapeError
from .models import TRUE_SYSTEM, EchoStateNetwork, Forecaster, ForecasterSpec, build_model

CHECKPOINT_VERSION = 1
PREDICT_CHUNK = 512


# -- bundles ----------------------------------------------------------------------

def save_bundle(path, meta, arrays):
    """One ``.npz`` file holding named float arrays plus a JSON ``__meta__`` entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {f"p:{k}": np.asarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_bundle(path):
    with np.load(Path(path)) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        arrays = {k[2:]: z[k].copy() for k in z.files if k.startswith("p:")}
    return meta, arrays


# -- checkpoint -------------------------------------------------------------------

@dataclass
class ForecasterCheckpoint:
    """Trained weights plus everything needed to reproduce their metrics."""

    spec: ForecasterSpec
    dim: int
    parameters: dict
    norm: NormalizationStats
    dataset_fingerprint: str
    val_mse: float
    train_log: list = field(default_factory=list)
    input_noise: float = 0.0
    _model: object = field(default=None, repr=False, compare=False)

    @property
    def label(self):
        return self.spec.label

    @property
    def forecaster_id(self):
        tag = f"{self.label}#s{self.spec.seed}"
        return tag + (f"@noise{self.input_noise:g}" if self.input_noise else "")

    def model(self):
        if self._model is None:
            m = build_model(self.spec, self.dim)
            m.load_arrays(self.parameters)
            self._model = m
        return self._model

    def save(self, path):
        meta = {
            "kind": "forecaster",
            "version": CHECKPOINT_VERSION,
            "spec": self.spec.to_dict(),
            "dim": self.dim,
            "norm": {"mean": self.norm.mean.tolist(), "std": self.norm.std.tolist()},
            "dataset_fingerprint": self.dataset_fingerprint,
            "val_mse": self.val_mse,
            "train_log": self.train_log,
            "input_noise": self.input_noise,
        }
        return save_bundle(path, meta, self.parameters)

    @classmethod
    def load(cls, path):
        meta, arrays = load_bundle(path)
        if meta.get("kind") != "forecaster" or meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path} is not a version-{CHECKPOINT_VERSION} forecaster checkpoint")
        return cls(
            spec=ForecasterSpec.from_dict(meta["spec"]),
            dim=meta["dim"],
            parameters=arrays,
            norm=NormalizationStats(np.array(meta["norm"]["mean"]), np.array(meta["norm"]["std"])),
            dataset_fingerprint=meta["dataset_fingerprint"],
            val_mse=meta["val_mse"],
            train_log=meta["train_log"],
            input_noise=meta["input_noise"],
        )


def load_checkpoint(path):
    meta, _ = load_bundle(path)
    if meta.get("kind") == "relative":
        from ..stitching import RelativeForecaster

        return RelativeForecaster.load(path)
    return ForecasterCheckpoint.load(path)


# -- forward helpers ---------------------------------------------------------------

def _model_of(model):
    return model.model() if hasattr(model, "model") else model


def perturb_inputs(inputs, std, key):
    """Gaussian input noise, drawn from ``default_rng(key)`` so it is reproducible."""
    if not std:
        return inputs
    return inputs + std * np.random.default_rng(key).standard_normal(inputs.shape)


def predict(model, inputs):
    """Free-running forecasts ``(N, H, d)`` in fixed-size chunks without a tape."""
    m = _model_of(model)
    inputs = np.asarray(inputs, dtype=np.float64)
    out = []
    with ad.no_grad():
        for i in range(0, len(inputs), PREDICT_CHUNK):
            out.append(m(inputs[i:i + PREDICT_CHUNK]).data)
    if not out:
        raise ShapeError("no windows to predict")
    return np.concatenate(out, axis=0)


def encode(model, inputs):
    """Latents ``(N, k)`` for a batch of input windows."""
    m = _model_of(model)
    inputs = np.asarray(inputs, dtype=np.float64)
    with ad.no_grad():
        return np.concatenate(
            [m.encode(inputs[i:i + PREDICT_CHUNK]).data for i in range(0, len(inputs), PREDICT_CHUNK)], axis=0
        )


def propagate(model, z):
    with ad.no_grad():
        return _model_of(model).propagate(Tensor(np.asarray(z, dtype=np.float64))).data


def decode(model, z):
    with ad.no_grad():
        return _model_of(model).decode(Tensor(np.asarray(z, dtype=np.float64))).data


# -- evaluation ------------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-step errors averaged over the horizon."""

    mse: float
    rmse: float
    mae: float
    per_step_mse: np.ndarray
    n_windows: int

    def to_dict(self):
        return {"mse": self.mse, "rmse": self.rmse, "mae": self.mae, "n_windows": self.n_windows}


def error_report(pred, targets):
    err = pred - targets
    per_mse = np.mean(err ** 2, axis=(0, 2))
    per_mae = np.mean(np.abs(err), axis=(0, 2))
    return EvalReport(
        mse=float(np.mean(per_mse)),
        rmse=float(np.mean(np.sqrt(per_mse))),
        mae=float(np.mean(per_mae)),
        per_step_mse=per_mse,
        n_windows=len(pred),
    )


_SPLIT_CODE = {"train": 0, "val": 1, "test": 2}


def evaluate(checkpoint, dataset, split="test", stride=1, noise=None):
    """Normalized-space forecast errors on every window of a split.

    ``noise`` defaults to the input noise the checkpoint was trained with.
    """
    spec = checkpoint.spec
    w = split_windows(dataset.splits[split], spec.L, spec.H, stride)
    std = checkpoint.input_noise if noise is None else noise
    inputs = perturb_inputs(w.inputs, std, [spec.seed, 5, _SPLIT_CODE[split]])
    return error_report(predict(checkpoint, inputs), w.targets)


@dataclass
class LatentMatrix:
    Z: np.ndarray
    sample_index: np.ndarray
    forecaster_id: str
    label: str


def collect_latents(model, dataset, sample_index, split="test", L=None, H=None):
    """Initial latents ``z0`` on the shared sample of windows.

    ``model`` is a checkpoint or :data:`TRUE_SYSTEM`, whose latent is the
    flattened input window.
    """
    if model is TRUE_SYSTEM:
        if L is None or H is None:
            raise ConfigError("L and H are required for the true-system reference")
        w = gather_windows(dataset, sample_index, L, H, split)
        return LatentMatrix(TRUE_SYSTEM.encode(w.inputs).data, np.asarray(sample_index), "True System", "True System")
    spec = model.spec
    w = gather_windows(dataset, sample_index, spec.L, spec.H, split)
    inputs = perturb_inputs(w.inputs, model.input_noise, [spec.seed, 6, _SPLIT_CODE[split]])
    return LatentMatrix(encode(model, inputs), np.asarray(sample_index), model.forecaster_id, model.label)


# -- training ---------------------------------------------------------------------

def _snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def _restore(params, snap):
    for k, p in params.items():
        p.data = snap[k].copy()


def fit(params, batch_loss, val_loss, n_train, *, seed, epochs_max, patience=20, batch_size=64,
        lr=1e-3, decay=0.95, grad_clip=0.0, epoch_start=None, callback=None):
    """Adam with per-epoch learning-rate decay and early stopping on ``val_loss``.

    ``batch_loss(rows)`` returns the scalar training loss of the listed
    training rows. Training stops once validation loss has failed to improve
    for more than ``patience`` epochs; parameters are restored to the best
    epoch.

    Returns
    -------
    log : list of dict
    best_val : float
    """
    if epochs_max < 1:
        raise ConfigError(f"epochs_max must be >= 1, got {epochs_max}")
    if n_train < 1:
        raise ShapeError("no training windows")
    opt = Adam(lr=lr, decay=decay)
    rng = np.random.default_rng([seed, 4])
    best, best_snap, bad, log = math.inf, _snapshot(params), 0, []
    for epoch in range(epochs_max):
        if epoch_start is not None:
            epoch_start(epoch)
        order = rng.permutation(n_train)
        total = 0.0
        for b in range(0, n_train, batch_size):
            rows = np.sort(order[b:b + batch_size])
            try:
                loss = batch_loss(rows)
            except NonFiniteError as exc:
                raise Diverged(f"epoch {epoch}: {exc}") from None
            value = loss.item()
            if not np.isfinite(value):
                raise Diverged(f"epoch {epoch}: training loss is {value}")
            leaves = ad.backward(loss)
            grads = {k: leaves.get(p) for k, p in params.items() if p in leaves}
            if grad_clip:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > grad_clip:
                    grads = {k: g * (grad_clip / norm) for k, g in grads.items()}
            opt.step(params, grads)
            total += value * len(rows)
        try:
            val = float(val_loss())
        except NonFiniteError as exc:
            raise Diverged(f"epoch {epoch}: validation forward failed: {exc}") from None
        if not np.isfinite(val):
            raise Diverged(f"epoch {epoch}: validation loss is {val}")
        entry = {"epoch": epoch, "train_mse": total / n_train, "val_mse": val, "lr": opt.lr}
        log.append(entry)
        if callback is not None:
            callback(entry)
        opt.decay_epoch()
        if val < best:
            best, best_snap, bad = val, _snapshot(params), 0
        else:
            bad += 1
            if bad > patience:
                break
    _restore(params, best_snap)
    return log, best


def _fit_esn(spec, dataset, stride, input_noise):
    model = EchoStateNetwork(spec, dataset.dim)
    tr = split_windows(dataset.splits["train"], spec.L, spec.H, stride)
    inputs = perturb_inputs(tr.inputs, input_noise, [spec.seed, 7])
    model.fit_readout(inputs, tr.targets, spec.ridge_lambda)
    return model, []


def train(spec, dataset, epochs_max=100, patience=20, batch_size=64, stride=1, val_stride=1,
          input_noise=0.0, lr=1e-3, callback=None):
    """Train one forecaster on the ``train`` split, selecting on ``val``.

    Parameters
    ----------
    spec : ForecasterSpec
        Architecture and seed. ``spec.dt`` is overwritten with the dataset step.
    dataset : TrajectorySet
    epochs_max, patience, batch_size : int
        Optimiser schedule; ignored by the echo-state network, whose readout
        is a closed-form ridge solve.
    stride, val_stride : int
        Window strides used for the training and validation losses.
    input_noise : float
        Std of Gaussian noise added to input windows (targets stay clean).

    Returns
    -------
    ForecasterCheckpoint
        Parameters of the best validation epoch. ``val_mse`` is recomputed
        with :func:`evaluate` on every validation window so that a reloaded
        checkpoint reproduces it exactly.
    """
    dt = dataset.system.dt if dataset.system.dt is not None else 1.0
    spec = spec.replace(dt=float(dt))
    if spec.family == "esn":
        model, log = _fit_esn(spec, dataset, stride, input_noise)
        params = {k: v.copy() for k, v in model.parameters().items()}
    else:
        model = Forecaster(spec, dataset.dim)
        params = model.parameters()
        tr = split_windows(dataset.splits["train"], spec.L, spec.H, stride)
        va = split_windows(dataset.splits["val"], spec.L, spec.H, val_stride)
        tr_inputs = tr.inputs
        teacher = spec.family == "a_rnn"
        noise_rng = np.random.default_rng([spec.seed, 7])

        def batch_loss(rows):
            x = tr_inputs[rows]
            if input_noise:
                x = x + input_noise * noise_rng.standard_normal(x.shape)
            y = tr.targets[rows]
            return ad.mse(model(x, teacher=y if teacher else None), y)

        def val_loss():
            return float(np.mean((predict(model, va.inputs) - va.targets) ** 2))

        log, _ = fit(params, batch_loss, val_loss, len(tr), seed=spec.seed, epochs_max=epochs_max,
                     patience=patience, batch_size=batch_size, lr=lr, grad_clip=spec.grad_clip,
                     callback=callback)
        params = {k: p.data.copy() for k, p in params.items()}

    ckpt = ForecasterCheckpoint(
        spec=spec, dim=dataset.dim, parameters=params, norm=dataset.norm,
        dataset_fingerprint=dataset.fingerprint(), val_mse=math.nan, train_log=log,
        input_noise=float(input_noise),
    )
    ckpt.val_mse = evaluate(ckpt, dataset, "val").mse
    return ckpt
