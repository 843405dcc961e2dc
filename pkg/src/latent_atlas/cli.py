"""Command-line pipeline: generate, train, align, ablate, perturb, stitch, probe, report.

Every command reads one JSON config (unknown keys are rejected), resolves
defaults, and writes into a run directory::

    <out>/dataset/            meta.json + split arrays
    <out>/checkpoints/        one .npz per (model, seed)
    <out>/align/ ablate/ perturb/ stitch/ probe/
    <out>/manifests/<command>.json

Missing prerequisites (dataset, checkpoints) are built on demand, so
``align`` on an empty directory runs the whole chain. Exit codes: 0 on
success, 1 on validation errors, 2 on numerical failures.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import relgeom as rg
from .dynsys import (
    DEFAULT_PARAMS,
    SystemSpec,
    draw_sample_index,
    generate_dataset,
    load_dataset,
    load_pod,
    save_dataset,
)
from .errors import ConfigError, NumericalError, ValidationError
from .forecasters import (
    MODEL_ORDER,
    TRUE_SYSTEM,
    ForecasterCheckpoint,
    ForecasterSpec,
    collect_latents,
    evaluate,
    train,
)
from .stitching import RelativeForecaster, stitch_anchor_index, stitch_grid, train_relative

CONFIG_VERSION = 1
OUT_ENV = "LATENT_ATLAS_OUT"

SYSTEM_ALIASES = {
    "lorenz": "lorenz63",
    "pendulum": "double_pendulum",
    "logistic": "logistic_map",
    "pod": "pod_wake",
    "skew": "random_skew",
}

# desk-scale grid: MLP, K-MLP, N-MLP, RNN, A-RNN, TF, ESN
DESK_GRID = (
    {"family": "mlp"},
    {"family": "mlp", "propagator": "koopman"},
    {"family": "mlp", "propagator": "node"},
    {"family": "rnn"},
    {"family": "a_rnn"},
    {"family": "transformer"},
    {"family": "esn"},
)
FULL_GRID = DESK_GRID + (
    {"family": "rnn", "propagator": "koopman"},
    {"family": "rnn", "propagator": "node"},
    {"family": "transformer", "propagator": "node"},
    {"family": "transformer", "propagator": "koopman"},
)


# -- config --------------------------------------------------------------------------

@dataclass
class DatasetConfig:
    system: str = "lorenz63"
    params: dict = None
    dt: float = None
    T: int = 500
    n_traj: int = 10
    input: str = None


@dataclass
class TrainingConfig:
    epochs_max: int = 50
    patience: int = 20
    batch_size: int = 64
    stride: int = 1
    val_stride: int = 1
    lr: float = 1e-3
    # per-family or per-label overrides, e.g. {"rnn": {"stride": 5}, "N-MLP": {"epochs_max": 30}};
    # a label entry wins over its family entry
    family_overrides: dict = field(default_factory=dict)


@dataclass
class AlignmentConfig:
    n_samples: int = 1000
    n_anchors: int = 80
    temporal_length: int = 300
    temporal_traj: int = 0
    temporal_anchors: list = None


@dataclass
class AblationConfig:
    K: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 8, 16, 32, 64, 128, 512, 800, 999])
    repeats: int = 30
    random_K: list = field(default_factory=lambda: [1, 8, 80])


@dataclass
class PerturbationConfig:
    noise: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    L: list = field(default_factory=lambda: [10, 20, 40])
    n_seeds: int = 3
    models: list = None


@dataclass
class StitchingConfig:
    m: int = 32
    n_seeds: int = 2
    models: list = field(default_factory=lambda: [{"family": "mlp"}])


@dataclass
class ProbeConfig:
    ridge_lambda: float = 1e-3
    train_fraction: float = 0.8


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    n_seeds: int = 3
    grid: str = "desk"
    models: list = None
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    stitching: StitchingConfig = field(default_factory=StitchingConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    out: str = None

    def model_specs(self):
        entries = self.models if self.models is not None else (FULL_GRID if self.grid == "full" else DESK_GRID)
        return [_model_entry(e) for e in entries]

    def seeds(self, n=None):
        return [self.seed + i for i in range(self.n_seeds if n is None else n)]

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(_hashable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _hashable(d):
    # the output location does not change any result
    return {k: v for k, v in d.items() if k != "out"}


_SECTIONS = {
    "dataset": DatasetConfig, "training": TrainingConfig, "alignment": AlignmentConfig,
    "ablation": AblationConfig, "perturbation": PerturbationConfig, "stitching": StitchingConfig,
    "probe": ProbeConfig,
}


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed {sorted(known)}")
    return cls(**data)


def _model_entry(entry):
    if not isinstance(entry, dict):
        raise ConfigError(f"model entries must be objects, got {entry!r}")
    if "seed" in entry:
        raise ConfigError("model entries must not set 'seed'; seeds come from the top-level seed and n_seeds")
    return ForecasterSpec.from_dict(entry)


def parse_config(data):
    """Build an :class:`ExperimentConfig` from a JSON object, rejecting unknown keys."""
    data = dict(data or {})
    sections = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            sections[name] = _strict(cls, data.pop(name), name)
    cfg = _strict(ExperimentConfig, data, "config")
    for name, value in sections.items():
        setattr(cfg, name, value)
    if cfg.version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.version}; expected {CONFIG_VERSION}")
    if cfg.grid not in ("desk", "full"):
        raise ConfigError(f"grid must be 'desk' or 'full', got {cfg.grid!r}")
    if cfg.n_seeds < 1:
        raise ConfigError("n_seeds must be >= 1")
    cfg.dataset.system = SYSTEM_ALIASES.get(cfg.dataset.system, cfg.dataset.system)
    for fam, over in cfg.training.family_overrides.items():
        _strict(TrainingConfig, over, f"training.family_overrides.{fam}")
    cfg.model_specs()
    for entries in (cfg.stitching.models, cfg.perturbation.models or []):
        for e in entries:
            _model_entry(e)
    system_spec(cfg)
    return cfg


def load_config(path):
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def system_spec(cfg):
    d = cfg.dataset
    if d.system == "pod_wake":
        return None
    if d.system not in DEFAULT_PARAMS:
        raise ConfigError(f"unknown system {d.system!r}")
    return SystemSpec.default(d.system, d.params, dt=d.dt, T=d.T, n_traj=d.n_traj, seed=cfg.seed)


# -- output helpers ------------------------------------------------------------------

class Run:
    """A run directory bound to one resolved config."""

    def __init__(self, cfg, out, workers=1):
        self.cfg = cfg
        self.out = Path(out)
        self.workers = max(1, int(workers))
        self.hash = cfg.hash()
        self.files = []
        self._dataset = None

    def path(self, *parts):
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_csv(self, rel, header, rows):
        """CSV with a header row; every row carries the config hash and seed."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(header) + ["config_hash", "seed"])
        for row in rows:
            w.writerow([_fmt(v) for v in row] + [self.hash, self.cfg.seed])
        p = self.path(rel)
        p.write_text(buf.getvalue())
        self.files.append(str(p.relative_to(self.out)))
        return p

    def write_json(self, rel, obj):
        obj = dict(obj)
        obj.setdefault("config_hash", self.hash)
        obj.setdefault("seed", self.cfg.seed)
        p = self.path(rel)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.files.append(str(p.relative_to(self.out)))
        return p

    def manifest(self, command, started):
        return self.write_json(f"manifests/{command}.json", {
            "command": command,
            "config_hash": self.hash,
            "config": self.cfg.to_dict(),
            "version": __version__,
            "source_digest": _source_digest(),
            "wall_time_s": round(time.time() - started, 3),
            "files": sorted(set(self.files)),
        })

    # -- prerequisites --

    def dataset(self):
        if self._dataset is None:
            meta = self.out / "dataset" / "meta.json"
            if not meta.exists():
                cmd_generate(self)
            self._dataset = load_dataset(self.out / "dataset")
        return self._dataset


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _source_digest():
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.rglob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


# -- training tasks ------------------------------------------------------------------

def _train_kwargs(cfg, spec):
    t = asdict(cfg.training)
    overrides = t.pop("family_overrides")
    t.update(overrides.get(spec.family, {}))
    t.update(overrides.get(spec.label, {}))
    return t


def _task_key(spec, kwargs, extra=""):
    blob = json.dumps({"spec": spec.to_dict(), "train": kwargs, "extra": extra}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:8]


def _slug(label):
    return label.replace("-", "").lower()


def _run_train_task(task):
    dataset_dir, path, spec_dict, kwargs, kind, extra = task
    dataset = load_dataset(dataset_dir)
    spec = ForecasterSpec.from_dict(spec_dict)
    if kind == "relative":
        ckpt = train_relative(spec, dataset, np.asarray(extra["anchor_index"]), **kwargs)
    else:
        ckpt = train(spec, dataset, input_noise=extra.get("input_noise", 0.0), **kwargs)
    ckpt.save(path)
    return path


def _run_tasks(run, tasks):
    pending = [t for t in tasks if not Path(t[1]).exists()]
    if run.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=run.workers) as pool:
            list(pool.map(_run_train_task, pending))
    else:
        for t in pending:
            _run_train_task(t)


def ensure_checkpoints(run, specs=None, seeds=None):
    """Train (or reuse) one checkpoint per (spec, seed); returns them in grid order."""
    cfg = run.cfg
    run.dataset()
    specs = cfg.model_specs() if specs is None else specs
    seeds = cfg.seeds() if seeds is None else seeds
    tasks, paths = [], []
    for spec in specs:
        for seed in seeds:
            s = spec.replace(seed=seed)
            kw = _train_kwargs(cfg, s)
            p = run.path("checkpoints", f"{_slug(s.label)}_s{seed}_{_task_key(s, kw)}.npz")
            tasks.append((str(run.out / "dataset"), str(p), s.to_dict(), kw, "absolute", {}))
            paths.append(p)
    _run_tasks(run, tasks)
    for p in paths:
        run.files.append(str(p.relative_to(run.out)))
    return [ForecasterCheckpoint.load(p) for p in paths]


def shared_sample(run, L, H):
    """Shared test-window sample; positions valid for the largest window in use."""
    a = run.cfg.alignment
    return draw_sample_index(run.dataset(), L, H, a.n_samples, run.cfg.seed)


def _max_window(ckpts):
    return max(c.spec.L for c in ckpts), max(c.spec.H for c in ckpts)


# -- commands -------------------------------------------------------------------------

def cmd_generate(run):
    cfg = run.cfg
    started = time.time()
    d = cfg.dataset
    if d.system == "pod_wake":
        if not d.input:
            raise ConfigError("pod_wake needs dataset.input (or --input) pointing at the coefficient table")
        ds = load_pod(d.input, n_traj=d.n_traj, T=d.T, dt=d.dt if d.dt is not None else 0.2)
    else:
        ds = generate_dataset(system_spec(cfg))
    save_dataset(ds, run.out / "dataset")
    run.files += [f"dataset/{n}" for n in ("meta.json", "train.npy", "val.npy", "test.npy")]
    run.manifest("generate", started)
    return run.out / "dataset"


def cmd_train(run):
    started = time.time()
    ckpts = ensure_checkpoints(run)
    ds = run.dataset()
    rows = []
    for c in ckpts:
        rep = evaluate(c, ds, "test")
        rows.append([c.label, c.spec.seed, len(c.train_log), c.val_mse, rep.mse, rep.rmse, rep.mae])
    run.write_csv("train/metrics.csv", ["model", "model_seed", "epochs", "val_mse", "test_mse", "test_rmse", "test_mae"], rows)
    run.manifest("train", started)
    return ckpts


def _latents(run, ckpts):
    L, H = _max_window(ckpts)
    idx = shared_sample(run, L, H)
    lat = [collect_latents(TRUE_SYSTEM, run.dataset(), idx, L=min(c.spec.L for c in ckpts), H=H)]
    lat += [collect_latents(c, run.dataset(), idx) for c in ckpts]
    return idx, lat


def cmd_align(run):
    started = time.time()
    cfg = run.cfg
    ckpts = ensure_checkpoints(run)
    idx, lat = _latents(run, ckpts)
    anchors = rg.select_anchors(len(idx), cfg.alignment.n_anchors, cfg.seed)
    seeds = [-1] + [c.spec.seed for c in ckpts]
    reports = rg.alignment_grid(lat, anchors, seeds)
    rows = []
    for r in reports:
        rows.append(r.row())
        if r.id_a != r.id_b:
            rows.append([r.model_b, r.model_a, r.seed_b, r.seed_a, r.cosine, r.t1, r.rank])
    run.write_csv("align/alignment.csv", ["model_a", "model_b", "seed_a", "seed_b", "cosine", "t1", "rank"], rows)
    run.write_json("align/heatmap.json", {
        m: rg.heatmap(reports, MODEL_ORDER, metric=m) for m in ("cosine", "t1", "rank")
    } | {"n_samples": len(idx), "n_anchors": anchors.m})

    abs_rows = []
    for i in range(len(lat)):
        for j in range(i + 1, len(lat)):
            a, b = lat[i], lat[j]
            abs_rows.append([a.label, b.label, seeds[i], seeds[j], rg.baseline_cka(a.Z, b.Z),
                             rg.baseline_rsa(a.Z, b.Z), rg.baseline_procrustes(a.Z, b.Z)])
    run.write_csv("align/absolute.csv", ["model_a", "model_b", "seed_a", "seed_b", "cka", "rsa", "procrustes"], abs_rows)

    a = cfg.alignment
    anchors3 = a.temporal_anchors if a.temporal_anchors is not None else anchors.indices[:3].tolist()
    tracks = rg.temporal_alignment([TRUE_SYSTEM] + ckpts, run.dataset(), idx, anchors3, traj_id=a.temporal_traj,
                                   length=a.temporal_length, L=min(c.spec.L for c in ckpts), H=_max_window(ckpts)[1])
    t_rows = [[fid, t, tr[t, 0], tr[t, 1], tr[t, 2]] for fid, tr in tracks.items() for t in range(len(tr))]
    run.write_csv("align/temporal.csv", ["forecaster", "t", "z1", "z2", "z3"], t_rows)

    pca_rows = []
    for l in lat:
        p = rg.pca_project(l.Z, 2)
        pca_rows += [[l.forecaster_id, "absolute", i, p.coords[i, 0], p.coords[i, 1]] for i in range(len(p.coords))]
    joint = rg.pca_project(np.vstack([rg.relative_embed(l.Z, anchors).R for l in lat]), 2)
    n = len(idx)
    for k, l in enumerate(lat):
        c = joint.coords[k * n:(k + 1) * n]
        pca_rows += [[l.forecaster_id, "relative", i, c[i, 0], c[i, 1]] for i in range(n)]
    run.write_csv("align/pca.csv", ["forecaster", "space", "sample", "pc1", "pc2"], pca_rows)
    run.manifest("align", started)
    return reports


def cmd_ablate(run):
    started = time.time()
    cfg = run.cfg
    ckpts = ensure_checkpoints(run)
    idx, lat = _latents(run, ckpts)
    ref = lat[0]
    K_list = [k for k in cfg.ablation.K if k <= len(idx)]
    rows = []
    for seed_off, l in enumerate(lat[1:]):
        for r in rg.anchor_ablation(l.Z, ref.Z, K_list, cfg.ablation.repeats, cfg.seed):
            rows.append([l.label, l.forecaster_id, "shared", r.K, r.mean, r.std, cfg.ablation.repeats])
        for K in cfg.ablation.random_K:
            if 2 * K <= len(idx):
                b = rg.random_baseline(l.Z, ref.Z, K, cfg.ablation.repeats, cfg.seed)
                rows.append([l.label, l.forecaster_id, "random", K, b.mean, b.std, cfg.ablation.repeats])
    run.write_csv("ablate/ablation.csv", ["model", "forecaster", "anchors", "K", "mean", "std", "repeats"], rows)
    run.manifest("ablate", started)
    return rows


def _rss(run, ckpt, ds):
    """Alignment of one checkpoint with the true system on the shared sample."""
    idx = shared_sample(run, ckpt.spec.L, ckpt.spec.H)
    ref = collect_latents(TRUE_SYSTEM, ds, idx, L=ckpt.spec.L, H=ckpt.spec.H)
    z = collect_latents(ckpt, ds, idx)
    anchors = rg.select_anchors(len(idx), run.cfg.alignment.n_anchors, run.cfg.seed)
    return rg.alpha_cosine(rg.relative_embed(z.Z, anchors), rg.relative_embed(ref.Z, anchors))


def cmd_perturb(run):
    """Retrain per condition (noise level or window length) and report (MSE, RSS)."""
    started = time.time()
    cfg = run.cfg
    ds = run.dataset()
    p = cfg.perturbation
    specs = [_model_entry(e) for e in p.models] if p.models is not None else cfg.model_specs()
    conditions = [("noise", float(s)) for s in p.noise] + [("L", int(L)) for L in p.L]
    tasks, meta = [], []
    for spec in specs:
        for kind, value in conditions:
            for seed in cfg.seeds(p.n_seeds):
                s = spec.replace(seed=seed, L=value) if kind == "L" else spec.replace(seed=seed)
                noise = value if kind == "noise" else 0.0
                kw = _train_kwargs(cfg, s)
                key = _task_key(s, kw, f"{kind}={value}")
                path = run.path("perturb", "checkpoints", f"{_slug(s.label)}_{kind}{value:g}_s{seed}_{key}.npz")
                tasks.append((str(run.out / "dataset"), str(path), s.to_dict(), kw, "absolute", {"input_noise": noise}))
                meta.append((kind, value, s, path))
    _run_tasks(run, tasks)
    rows = []
    for kind, value, s, path in meta:
        ck = ForecasterCheckpoint.load(path)
        rows.append([kind, value, s.label, s.seed, evaluate(ck, ds).mse, _rss(run, ck, ds)])
    run.write_csv("perturb/perturb.csv", ["condition", "value", "model", "model_seed", "test_mse", "rss_cosine"], rows)
    run.manifest("perturb", started)
    return rows


def ensure_relative(run):
    cfg = run.cfg
    ds = run.dataset()
    st = cfg.stitching
    specs = [_model_entry(e) for e in st.models]
    L = max(s.L for s in specs)
    H = max(s.H for s in specs)
    anchor_index = stitch_anchor_index(ds, L, H, st.m, cfg.seed)
    tasks, paths = [], []
    for spec in specs:
        for seed in cfg.seeds(st.n_seeds):
            s = spec.replace(seed=seed)
            kw = _train_kwargs(cfg, s)
            key = _task_key(s, kw, f"relative m={st.m}")
            path = run.path("stitch", "checkpoints", f"rel_{_slug(s.label)}_s{seed}_{key}.npz")
            tasks.append((str(run.out / "dataset"), str(path), s.to_dict(), kw, "relative",
                          {"anchor_index": anchor_index.tolist()}))
            paths.append(path)
    _run_tasks(run, tasks)
    return [RelativeForecaster.load(p) for p in paths], specs


def cmd_stitch(run):
    started = time.time()
    cfg = run.cfg
    ds = run.dataset()
    rel, specs = ensure_relative(run)
    absolute = ensure_checkpoints(run, specs, cfg.seeds(cfg.stitching.n_seeds))
    tables = {"absolute": stitch_grid(absolute, ds, "absolute"), "relative": stitch_grid(rel, ds, "relative")}
    fams = tables["relative"].families
    rows = []
    for e in fams:
        for d in fams:
            a, r = tables["absolute"].value(e, d), tables["relative"].value(e, d)
            rows.append([e, d, "NA" if a is None else a, "NA" if r is None else r])
    run.write_csv("stitch/stitch.csv", ["encoder", "decoder", "abs_mse", "rel_mse"], rows)
    for mode, table in tables.items():
        run.write_csv(f"stitch/stitch_{mode}.csv", ["encoder", "decoder", "mse"], table.rows())
        run.write_csv(f"stitch/pairs_{mode}.csv", ["encoder", "decoder", "enc_family", "dec_family", "same_instance", "mse"],
                      [[p["encoder"], p["decoder"], p["enc_family"], p["dec_family"], p["same_instance"],
                        "NA" if p["mse"] is None else p["mse"]] for p in table.pairs])
    run.manifest("stitch", started)
    return tables


def cmd_probe(run):
    started = time.time()
    cfg = run.cfg
    ckpts = ensure_checkpoints(run)
    idx, lat = _latents(run, ckpts)
    anchors = rg.select_anchors(len(idx), cfg.alignment.n_anchors, cfg.seed)
    tr, te = rg.probe_split(len(idx), cfg.probe.train_fraction, cfg.seed)
    rows = []
    for c, l in zip(ckpts, lat[1:]):
        X = rg.current_states(run.dataset(), idx, c.spec.L)
        for space, Z in (("absolute", l.Z), ("relative", rg.relative_embed(l.Z, anchors).R)):
            res = rg.probe_ridge(Z, X, cfg.probe.ridge_lambda, tr, te)
            rows.append([c.label, c.spec.seed, space] + [float(v) for v in res.r2] + [res.mean_r2])
    dim = run.dataset().dim
    run.write_csv("probe/probe.csv", ["model", "model_seed", "space"] + [f"r2_x{i}" for i in range(dim)] + ["r2_mean"], rows)
    run.manifest("probe", started)
    return rows


def cmd_report(run):
    """Summarize every CSV and manifest in the run directory into ``report.json``."""
    started = time.time()
    out = run.out
    if not out.exists():
        raise ConfigError(f"run directory {out} does not exist")
    summary = {"manifests": {}, "tables": {}}
    for p in sorted(out.glob("manifests/*.json")):
        m = json.loads(p.read_text())
        summary["manifests"][p.stem] = {k: m.get(k) for k in ("config_hash", "wall_time_s", "files")}
    for p in sorted(out.rglob("*.csv")):
        with open(p) as fh:
            rows = list(csv.reader(fh))
        summary["tables"][str(p.relative_to(out))] = {"header": rows[0] if rows else [], "rows": max(0, len(rows) - 1)}
    metrics = out / "train" / "metrics.csv"
    if metrics.exists():
        with open(metrics) as fh:
            summary["test_mse"] = {f"{r['model']}#s{r['model_seed']}": float(r["test_mse"]) for r in csv.DictReader(fh)}
    heat = out / "align" / "heatmap.json"
    if heat.exists():
        summary["heatmap_cosine"] = json.loads(heat.read_text())["cosine"]
    run.write_json("report.json", summary)
    run.manifest("report", started)
    return summary


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "align": cmd_align, "ablate": cmd_ablate,
    "perturb": cmd_perturb, "stitch": cmd_stitch, "probe": cmd_probe, "report": cmd_report,
}


HELP = {
    "generate": "simulate (or ingest) the dataset and save it",
    "train": "train the model grid over all seeds and write test metrics",
    "align": "alignment grid, heatmaps, absolute-space comparators, temporal tracks, PCA",
    "ablate": "anchor-count ablation and disjoint-anchor baseline",
    "perturb": "retrain under input noise and window-length sweeps; report (MSE, RSS)",
    "stitch": "relative and absolute encoder/decoder stitching tables",
    "probe": "linear ridge probes from latents to the current state",
    "report": "consolidated JSON summary of a run directory",
}


# -- argument parsing -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    p = _Parser(prog="latent-atlas", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int, help="base seed (dataset, sampling, first model seed)")
        s.add_argument("--out", help=f"run directory (default ${OUT_ENV} or ./runs/<config-hash>)")
        s.add_argument("--workers", type=int, default=1, help="parallel training processes")
        if name == "generate":
            s.add_argument("--system", help="system id or alias (lorenz, pendulum, logistic, pod, skew)")
            s.add_argument("--input", help="POD coefficient table for --system pod")
        if name in ("train", "align", "ablate", "probe"):
            s.add_argument("--n-seeds", type=int, dest="n_seeds")
            s.add_argument("--epochs", type=int, help="override training.epochs_max")
        if name in ("align", "ablate", "probe"):
            s.add_argument("--samples", type=int, help="override alignment.n_samples")
            s.add_argument("--anchors", type=int, help="override alignment.n_anchors")
        if name == "ablate":
            s.add_argument("--repeats", type=int)
        if name == "perturb":
            s.add_argument("--noise", type=_float_list, help="comma-separated noise std list")
            s.add_argument("--lengths", type=_float_list, help="comma-separated window-length list")
        if name == "probe":
            s.add_argument("--lambda", type=float, dest="ridge_lambda")
    return p


def resolve(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "system", None):
        cfg.dataset.system = SYSTEM_ALIASES.get(args.system, args.system)
    if getattr(args, "input", None):
        cfg.dataset.input = args.input
    if getattr(args, "n_seeds", None):
        cfg.n_seeds = args.n_seeds
    if getattr(args, "epochs", None):
        cfg.training.epochs_max = args.epochs
    if getattr(args, "samples", None):
        cfg.alignment.n_samples = args.samples
    if getattr(args, "anchors", None):
        cfg.alignment.n_anchors = args.anchors
    if getattr(args, "repeats", None):
        cfg.ablation.repeats = args.repeats
    if getattr(args, "noise", None) is not None:
        cfg.perturbation.noise = args.noise
    if getattr(args, "lengths", None) is not None:
        cfg.perturbation.L = [int(v) for v in args.lengths]
    if getattr(args, "ridge_lambda", None) is not None:
        cfg.probe.ridge_lambda = args.ridge_lambda
    cfg = parse_config(cfg.to_dict())
    out = args.out or cfg.out or os.environ.get(OUT_ENV)
    out = Path(out) if out else Path("runs") / cfg.hash()
    return Run(cfg, out, args.workers)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        run = resolve(args)
        COMMANDS[args.command](run)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(str(run.out))
    return 0
