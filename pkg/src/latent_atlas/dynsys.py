"""Benchmark dynamical systems and the trajectory datasets built from them.

Seven systems are supported. Five continuous flows are integrated with an
adaptive Dormand-Prince 5(4) pair, the logistic map is iterated directly, and
POD wake coefficients are read from a delimited text file. Datasets are
z-scored per channel with statistics of the training split only.

Every trajectory draws its initial condition from its own RNG stream keyed on
``(seed, trajectory_index)``, so generation order never changes the result.
"""

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateChannel,
    DomainError,
    GenerationFailed,
    NonFiniteState,
    ParseError,
    ShapeError,
    StepSizeUnderflow,
)

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

SYSTEM_DIMS = {
    "lorenz63": 3,
    "limit_cycle": 2,
    "double_pendulum": 4,
    "hopf": 2,
    "logistic_map": 1,
    "pod_wake": 3,
    "random_skew": 6,
}

DEFAULT_PARAMS = {
    "lorenz63": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "limit_cycle": {"mu": 1.0, "R": 1.0, "omega": 1.0},
    "double_pendulum": {"g": 9.81},
    # mu = 1 gives the unit-radius limit cycle; mu = 0 would decay to the origin.
    "hopf": {"mu": 1.0, "omega": 1.0},
    "logistic_map": {"r": 3.57},
    "pod_wake": {},
    "random_skew": {"epsilon": 0.05, "jitter": 0.15, "ic_noise": 0.1, "warmup_fraction": 0.1},
}

DEFAULT_DT = {
    "lorenz63": 0.01,
    "limit_cycle": 0.01,
    "double_pendulum": 0.01,
    "hopf": 0.01,
    "logistic_map": 0.1,
    "pod_wake": 0.2,
    "random_skew": 0.01,
}

INIT_SAMPLERS = {
    "lorenz63": "uniform [-20, 20]^3",
    "limit_cycle": "r0 ~ U[0, 20], theta0 ~ U[0, 2pi]",
    "double_pendulum": "angles ~ U[-20deg, 20deg], angular velocities ~ U[-1, 1]",
    "hopf": "uniform [-2, 2]^2",
    "logistic_map": "U(0, 1)",
    "pod_wake": "file",
    "random_skew": "founder seeds + N(0, ic_noise^2)",
}

TOLERANCES = {"random_skew": (1e-8, 1e-6)}
DEFAULT_TOLERANCE = (1e-9, 1e-7)


@dataclass(frozen=True)
class SystemSpec:
    system_id: str
    params: dict = field(default_factory=dict)
    dt: float = None
    T: int = 500
    n_traj: int = 10
    seed: int = 0
    init_sampler: str = None

    def __post_init__(self):
        if self.system_id not in SYSTEM_DIMS:
            raise ConfigError(f"unknown system {self.system_id!r}; expected one of {sorted(SYSTEM_DIMS)}")
        expected = set(DEFAULT_PARAMS[self.system_id])
        given = set(self.params)
        if given != expected:
            missing, extra = sorted(expected - given), sorted(given - expected)
            raise ConfigError(f"{self.system_id}: missing params {missing}, unknown params {extra}")
        if self.dt is None:
            object.__setattr__(self, "dt", DEFAULT_DT[self.system_id])
        if self.init_sampler is None:
            object.__setattr__(self, "init_sampler", INIT_SAMPLERS[self.system_id])
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.T < 2:
            raise ConfigError(f"T must be at least 2, got {self.T}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be at least 1, got {self.n_traj}")

    @classmethod
    def default(cls, system_id, params=None, **kwargs):
        if system_id not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown system {system_id!r}")
        merged = dict(DEFAULT_PARAMS[system_id])
        merged.update(params or {})
        return cls(system_id, merged, **kwargs)

    @property
    def dim(self):
        return SYSTEM_DIMS[self.system_id]

    @property
    def continuous(self):
        return self.system_id not in ("logistic_map", "pod_wake")

    def to_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    states: np.ndarray
    t0: float
    dt: float
    source_ic: np.ndarray


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x):
        return (x - self.mean) / self.std

    def invert(self, x):
        return x * self.std + self.mean


# -- vector fields --------------------------------------------------------------

def lorenz63(t, s, sigma, rho, beta):
    x, y, z = s
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rossler(t, s, a, b, c):
    x, y, z = s
    return np.array([-y - z, x + a * y, b + z * (x - c)])


def chen(t, s, a, b, c):
    x, y, z = s
    return np.array([a * (y - x), (c - a) * x - x * z + c * y, x * y - b * z])


def limit_cycle(t, s, mu, R, omega):
    x, y = s
    r = math.hypot(x, y)
    radial = mu * (R - r) / r if r > 0 else 0.0
    return np.array([radial * x - omega * y, radial * y + omega * x])


def double_pendulum(t, s, g):
    th1, th2, w1, w2 = s
    d = th2 - th1
    sd, cd = math.sin(d), math.cos(d)
    den = 2.0 - cd * cd
    dw1 = (w1 * w1 * sd * cd + g * math.sin(th2) * cd + w2 * w2 * sd - 2.0 * g * math.sin(th1)) / den
    dw2 = (-w2 * w2 * sd * cd + 2.0 * g * math.sin(th1) * cd - 2.0 * w1 * w1 * sd - 2.0 * g * math.sin(th2)) / den
    return np.array([w1, w2, dw1, dw2])


def double_pendulum_energy(s, g=9.81):
    """Total energy of the unit-mass, unit-length double pendulum."""
    th1, th2, w1, w2 = np.moveaxis(np.asarray(s), -1, 0)
    kinetic = w1**2 + 0.5 * w2**2 + w1 * w2 * np.cos(th1 - th2)
    potential = -2.0 * g * np.cos(th1) - g * np.cos(th2)
    return kinetic + potential


def hopf(t, s, mu, omega):
    x, y = s
    r2 = x * x + y * y
    return np.array([mu * x - omega * y - r2 * x, omega * x + mu * y - r2 * y])


_FIELDS = {
    "lorenz63": lorenz63,
    "limit_cycle": limit_cycle,
    "double_pendulum": double_pendulum,
    "hopf": hopf,
}

FOUNDERS = {
    "lorenz": (lorenz63, {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}, (1.0, 1.0, 1.0)),
    "rossler": (rossler, {"a": 0.2, "b": 0.2, "c": 5.7}, (0.1, 0.0, 0.0)),
    "chen": (chen, {"a": 35.0, "b": 3.0, "c": 28.0}, (-10.0, 0.0, 37.0)),
}


@dataclass
class SkewProduct:
    """A drive founder coupled one-way into a response founder."""

    drive: str
    response: str
    drive_params: dict
    response_params: dict
    epsilon: float

    @property
    def seed_state(self):
        return np.array(FOUNDERS[self.drive][2] + FOUNDERS[self.response][2])

    def __call__(self, t, s):
        fa = FOUNDERS[self.drive][0]
        fb = FOUNDERS[self.response][0]
        dx = fa(t, s[:3], **self.drive_params)
        dy = fb(t, s[3:], **self.response_params)
        dy[0] += self.epsilon * s[0]
        return np.concatenate([dx, dy])


def sample_skew_product(seed, epsilon=0.05, jitter=0.15):
    """Draw a random skew-product system.

    Two founders are drawn uniformly from {lorenz, rossler, chen} (repeats
    allowed). Each nominal parameter is multiplied by ``exp(nu)`` with
    ``nu ~ N(0, jitter^2)``, which keeps its sign.

    Returns
    -------
    field : SkewProduct
        Callable ``field(t, state)`` on the 6-D state ``[x; y]``.
    meta : dict
        Founder names and jittered parameters.
    """
    rng = np.random.default_rng([seed, 0])
    names = sorted(FOUNDERS)
    drive, response = (names[i] for i in rng.integers(0, len(names), size=2))

    def jittered(name):
        nominal = FOUNDERS[name][1]
        return {k: v * float(np.exp(rng.normal(0.0, jitter))) for k, v in nominal.items()}

    skew = SkewProduct(drive, response, jittered(drive), jittered(response), epsilon)
    meta = {
        "drive": drive,
        "response": response,
        "drive_params": skew.drive_params,
        "response_params": skew.response_params,
        "epsilon": epsilon,
    }
    return skew, meta


def vector_field(system):
    """Right-hand side ``f(t, x)`` for a continuous system."""
    if system.system_id == "random_skew":
        p = system.params
        return sample_skew_product(system.seed, p["epsilon"], p["jitter"])[0]
    if system.system_id not in _FIELDS:
        raise DomainError(f"{system.system_id} is not a continuous-time system")
    f, params = _FIELDS[system.system_id], system.params
    return lambda t, s: f(t, s, **params)


# -- Dormand-Prince 5(4) ------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

MIN_STEP = 1e-12


def _finite(k, t):
    if not np.all(np.isfinite(k)):
        raise NonFiniteState(f"non-finite state at t={t:.6g}")
    return k


def dopri5(f, x0, times, atol=1e-9, rtol=1e-7, max_steps=10_000_000):
    """Integrate ``x' = f(t, x)`` and return the states at ``times``.

    Steps are clipped so every requested time is hit exactly; no interpolation.
    """
    y = np.array(x0, dtype=np.float64)
    _finite(y, times[0])
    out = np.empty((len(times), y.size))
    out[0] = y
    t = float(times[0])
    k1 = _finite(f(t, y), t)

    # Hairer's starting-step heuristic
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    if len(times) > 1:
        h = min(h, times[1] - times[0])
        y1 = y + h * k1
        d2 = np.sqrt(np.mean(((_finite(f(t + h, y1), t + h) - k1) / scale) ** 2)) / h
        h1 = max(1e-6, h * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h, h1)

    steps = 0
    for n in range(1, len(times)):
        target = float(times[n])
        while t < target:
            last = t + h * 1.000001 >= target
            step = target - t if last else h
            if step < MIN_STEP:
                raise StepSizeUnderflow(f"step size {step:.3g} below {MIN_STEP} at t={t:.6g}")
            k = [k1]
            for i in range(1, 7):
                yi = y + step * sum(a * kj for a, kj in zip(_A[i], k) if a)
                k.append(_finite(f(t + _C[i] * step, yi), t))
            y_new = yi  # stage 7 is evaluated at the fifth-order solution (FSAL)
            err_vec = step * sum(e * kj for e, kj in zip(_E, k) if e)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean((err_vec / sc) ** 2))
            if err <= 1.0:
                t = target if last else t + step
                y = y_new
                k1 = k[6]
                factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not last:
                    h = step * factor
                else:
                    h = max(h, step * factor) if factor >= 1 else step * factor
            else:
                h = step * max(0.2, 0.9 * err ** -0.2)
            steps += 1
            if steps > max_steps:
                raise StepSizeUnderflow("maximum number of steps exceeded")
        out[n] = y
    return out


def integrate(system, x0, t_span, dt_record, field=None):
    """Integrate a continuous system from ``x0`` over ``[0, t_span]``.

    States are recorded every ``dt_record``; the default tolerances are
    ``atol=1e-9, rtol=1e-7`` (``1e-8, 1e-6`` for ``random_skew``).
    """
    if not system.continuous:
        raise DomainError(f"{system.system_id} is not a continuous-time system")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (system.dim,):
        raise ShapeError(f"initial condition of shape {x0.shape}, expected ({system.dim},)")
    if not np.all(np.isfinite(x0)):
        raise NonFiniteState("initial condition is not finite")
    n = int(round(t_span / dt_record))
    times = np.arange(n + 1) * dt_record
    atol, rtol = TOLERANCES.get(system.system_id, DEFAULT_TOLERANCE)
    f = field if field is not None else vector_field(system)
    states = dopri5(f, x0, times, atol=atol, rtol=rtol)
    return Trajectory(states=states, t0=0.0, dt=dt_record, source_ic=x0.copy())


def step_map(system, x):
    """One logistic-map iteration ``r x (1 - x)``."""
    if system.system_id != "logistic_map":
        raise DomainError(f"step_map needs the logistic map, got {system.system_id}")
    if not 0.0 < x < 1.0:
        raise DomainError(f"logistic map state must lie in (0, 1), got {x!r}")
    return system.params["r"] * x * (1.0 - x)


# -- datasets -------------------------------------------------------------------

@dataclass
class TrajectorySet:
    """Normalized trajectories per split, shape ``(n_traj, T, d)`` each."""

    splits: dict
    norm: NormalizationStats
    system: SystemSpec
    initial_conditions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.splits["train"].shape[2]

    @property
    def T(self):
        return self.splits["train"].shape[1]

    def trajectories(self, split, normalized=True):
        data = self.splits[split] if normalized else self.norm.invert(self.splits[split])
        ics = self.initial_conditions.get(split)
        return [
            Trajectory(states=s, t0=0.0, dt=self.system.dt, source_ic=None if ics is None else ics[i])
            for i, s in enumerate(data)
        ]

    def fingerprint(self):
        h = hashlib.sha256()
        for split in SPLITS:
            h.update(np.ascontiguousarray(self.splits[split]).tobytes())
        h.update(self.norm.mean.tobytes())
        h.update(self.norm.std.tobytes())
        return h.hexdigest()[:16]


def _initial_condition(system, rng):
    sid = system.system_id
    if sid == "lorenz63":
        return rng.uniform(-20.0, 20.0, size=3)
    if sid == "limit_cycle":
        r0, th0 = rng.uniform(0.0, 20.0), rng.uniform(0.0, 2 * np.pi)
        return np.array([r0 * np.cos(th0), r0 * np.sin(th0)])
    if sid == "double_pendulum":
        angles = np.deg2rad(rng.uniform(-20.0, 20.0, size=2))
        return np.concatenate([angles, rng.uniform(-1.0, 1.0, size=2)])
    if sid == "hopf":
        return rng.uniform(-2.0, 2.0, size=2)
    if sid == "logistic_map":
        x = 0.0
        while x == 0.0:
            x = rng.uniform(0.0, 1.0)
        return np.array([x])
    raise DomainError(f"no initial-condition sampler for {sid}")


def _logistic_trajectory(system, x0):
    states = np.empty((system.T, 1))
    x = float(x0[0])
    states[0, 0] = x
    for i in range(1, system.T):
        x = step_map(system, x)
        states[i, 0] = x
    return states


def _skew_acceptable(states):
    if not np.all(np.isfinite(states)):
        return False
    if np.max(np.linalg.norm(states, axis=1)) > 1e6:
        return False
    return np.sum(np.var(states, axis=0)) >= 1e-6


def _skew_trajectory(system, skew, index):
    p = system.params
    warmup = int(round(p["warmup_fraction"] * system.T))
    for attempt in range(2):
        rng = np.random.default_rng([system.seed, 1, index, attempt])
        x0 = skew.seed_state + rng.normal(0.0, p["ic_noise"], size=6)
        try:
            traj = integrate(system, x0, (warmup + system.T - 1) * system.dt, system.dt, field=skew)
        except (NonFiniteState, StepSizeUnderflow):
            continue
        states = traj.states[warmup:]
        if _skew_acceptable(states):
            return x0, states
    raise GenerationFailed(f"skew-product trajectory {index} rejected twice")


def _trajectory(system, index, skew=None):
    if system.system_id == "random_skew":
        return _skew_trajectory(system, skew, index)
    rng = np.random.default_rng([system.seed, 1, index])
    x0 = _initial_condition(system, rng)
    if system.system_id == "logistic_map":
        return x0, _logistic_trajectory(system, x0)
    traj = integrate(system, x0, (system.T - 1) * system.dt, system.dt)
    return x0, traj.states


def normalize_splits(raw):
    """z-score every split with per-channel statistics of ``raw['train']``."""
    flat = raw["train"].reshape(-1, raw["train"].shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    bad = np.flatnonzero(std < 1e-12)
    if bad.size:
        raise DegenerateChannel(f"train-split channel(s) {bad.tolist()} have zero variance")
    norm = NormalizationStats(mean=mean, std=std)
    return {k: norm.apply(v) for k, v in raw.items()}, norm


def generate_dataset(system):
    """Simulate ``n_traj`` trajectories per split and z-score them.

    Initial conditions ``0..n-1`` go to train, ``n..2n-1`` to val and the
    rest to test.
    """
    if system.system_id == "pod_wake":
        raise DomainError("pod_wake data is ingested from a file; use load_pod")
    skew, skew_meta = (None, None)
    if system.system_id == "random_skew":
        skew, skew_meta = sample_skew_product(system.seed, system.params["epsilon"], system.params["jitter"])

    raw, ics = {}, {}
    for s, split in enumerate(SPLITS):
        states, x0s = [], []
        for i in range(system.n_traj):
            x0, traj = _trajectory(system, s * system.n_traj + i, skew)
            x0s.append(x0)
            states.append(traj)
        raw[split] = np.stack(states)
        ics[split] = np.stack(x0s)

    splits, norm = normalize_splits(raw)
    meta = {"skew": skew_meta} if skew_meta else {}
    return TrajectorySet(splits=splits, norm=norm, system=system, initial_conditions=ics, meta=meta)


_SPLIT_RE = re.compile(r"[,\s]+")


def read_table(path):
    """Parse a comma- or whitespace-delimited numeric table.

    Blank lines and lines starting with ``#`` are skipped.
    """
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c for c in _SPLIT_RE.split(text) if c]
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(f"expected {width} columns, found {len(cells)}", line=lineno)
            row = []
            for col, cell in enumerate(cells, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"not a number: {cell!r}", line=lineno, column=col) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite value {cell!r}", line=lineno, column=col)
                row.append(value)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows)


def load_pod(path, n_traj=10, T=500, dt=0.2):
    """Ingest POD wake coefficients: one snapshot per row, three columns.

    Consecutive blocks of ``T`` rows become trajectories; the first
    ``n_traj`` blocks are train, then val, then test. Only z-scoring is
    applied.
    """
    table = read_table(path)
    if table.shape[1] != 3:
        raise ShapeError(f"POD table must have 3 channels, found {table.shape[1]}")
    needed = 3 * n_traj * T
    if table.shape[0] < needed:
        raise ShapeError(f"POD table has {table.shape[0]} rows, need {needed} for 3x{n_traj} trajectories of {T}")
    blocks = table[:needed].reshape(3 * n_traj, T, 3)
    raw = {split: blocks[s * n_traj:(s + 1) * n_traj] for s, split in enumerate(SPLITS)}
    splits, norm = normalize_splits(raw)
    system = SystemSpec("pod_wake", {}, dt=dt, T=T, n_traj=n_traj)
    ics = {split: raw[split][:, 0, :] for split in SPLITS}
    return TrajectorySet(splits=splits, norm=norm, system=system, initial_conditions=ics,
                         meta={"source": str(path)})


# -- windows -------------------------------------------------------------------------

@dataclass
class Window:
    input: np.ndarray
    target: np.ndarray
    traj_id: int
    start_index: int


@dataclass
class Windows:
    """All windows of one split as stacked arrays.

    ``start`` is the index of the first input step; the target begins at
    ``start + L``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    traj_id: np.ndarray
    start: np.ndarray

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        return Window(self.inputs[i], self.targets[i], int(self.traj_id[i]), int(self.start[i]))

    def subset(self, rows):
        return Windows(self.inputs[rows], self.targets[rows], self.traj_id[rows], self.start[rows])

    @property
    def index(self):
        return np.stack([self.traj_id, self.start], axis=1)


def windows_per_trajectory(T, L, H, stride=1):
    return (T - L - H) // stride + 1


def split_windows(data, L, H, stride=1):
    """Sliding windows over an array of trajectories ``(n, T, d)``."""
    n, T, d = data.shape
    if L < 1 or H < 1:
        raise ShapeError(f"L and H must be >= 1, got L={L}, H={H}")
    if L + H > T:
        raise ShapeError(f"L + H = {L + H} exceeds trajectory length {T}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    starts = np.arange(windows_per_trajectory(T, L, H, stride)) * stride
    view = np.lib.stride_tricks.sliding_window_view(data, L + H, axis=1)  # (n, T-L-H+1, d, L+H)
    view = np.moveaxis(view[:, starts], -1, 2)  # (n, W, L+H, d)
    full = view.reshape(-1, L + H, d)
    traj_id = np.repeat(np.arange(n), len(starts))
    start = np.tile(starts, n)
    return Windows(np.ascontiguousarray(full[:, :L]), np.ascontiguousarray(full[:, L:]), traj_id, start)


def make_windows(dataset, L, H, stride=1):
    """Windows for every split; they never cross trajectory boundaries."""
    return {split: split_windows(dataset.splits[split], L, H, stride) for split in SPLITS}


def gather_windows(dataset, index, L, H, split="test"):
    """Windows at explicit ``(traj_id, start)`` positions, in the given order."""
    data = dataset.splits[split]
    index = np.asarray(index, dtype=np.int64).reshape(-1, 2)
    n, T, _ = data.shape
    tid, start = index[:, 0], index[:, 1]
    if np.any(tid < 0) or np.any(tid >= n) or np.any(start < 0) or np.any(start + L + H > T):
        raise IndexError(f"sample index out of range for split {split!r} with L={L}, H={H}")
    offsets = np.arange(L + H)
    full = data[tid[:, None], start[:, None] + offsets[None, :]]
    return Windows(full[:, :L], full[:, L:], tid.copy(), start.copy())


def draw_sample_index(dataset, L, H, n, seed, split="test"):
    """Deterministic sample of ``n`` distinct ``(traj_id, start)`` pairs, sorted."""
    n_traj = dataset.splits[split].shape[0]
    per = windows_per_trajectory(dataset.T, L, H)
    total = n_traj * per
    if n > total:
        raise ShapeError(f"requested {n} samples but split {split!r} has only {total} windows")
    rng = np.random.default_rng([seed, 2])
    flat = np.sort(rng.choice(total, size=n, replace=False))
    return np.stack([flat // per, flat % per], axis=1)


# -- persistence ---------------------------------------------------------------------

def save_dataset(dataset, directory):
    """Write ``meta.json`` plus one ``<split>.npy`` array per split."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "system": dataset.system.to_dict(),
        "norm": {"mean": dataset.norm.mean.tolist(), "std": dataset.norm.std.tolist()},
        "shapes": {s: list(dataset.splits[s].shape) for s in SPLITS},
        "initial_conditions": {s: np.asarray(v).tolist() for s, v in dataset.initial_conditions.items()},
        "fingerprint": dataset.fingerprint(),
        "meta": dataset.meta,
    }
    for split in SPLITS:
        np.save(directory / f"{split}.npy", dataset.splits[split])
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(directory):
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset format_version {meta.get('format_version')}")
    system = SystemSpec(**meta["system"])
    norm = NormalizationStats(np.array(meta["norm"]["mean"]), np.array(meta["norm"]["std"]))
    splits = {s: np.load(directory / f"{s}.npy") for s in SPLITS}
    ics = {s: np.array(v) for s, v in meta.get("initial_conditions", {}).items()}
    return TrajectorySet(splits=splits, norm=norm, system=system, initial_conditions=ics, meta=meta.get("meta", {}))
