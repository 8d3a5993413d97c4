"""Casual-walk simulation of a single person and LOS-crossing statistics.

A walker moves in the rectangle [0, B] x [0, L] with a fixed speed. Its heading
is kept with probability ``p_keep`` at every step and otherwise redrawn
uniformly from the discrete heading set ``{0, dtheta, ..., 2*pi - dtheta}``.
Walls reflect the walker specularly. The transmitter/receiver pair sits at the
midpoints of the two walls ``y = 0`` and ``y = L`` so the line of sight is the
segment ``x = B / 2``.

The bulk simulator (:func:`simulate_walk`) uses the method of images: the
walk is run unconstrained and folded back into the box, which is pathwise
identical to repeated mirror reflection and lets the whole trajectory be
computed with array operations.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BURN_IN_STEPS = 1000
Z_MAX_CAP = 4000
TAIL_TOLERANCE = 1e-4
# relative kernel width used when smoothing a simulated CCDF for estimation
DEFAULT_SMOOTHING = 0.05

_HEADING_TOL = 1e-9
# positions this close to the LOS line (relative) count as on it
_LINE_TOL = 1e-9


@dataclass(frozen=True)
class MotionConfig:
    B: float = 7.8
    L: float = 6.3
    v: float = 1.0
    dt: float = 0.05
    p_keep: float = 0.9
    dtheta: float = math.pi / 8

    def __post_init__(self):
        for name in ("B", "L", "v", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0.0 <= self.p_keep <= 1.0:
            raise ValueError(f"p_keep must lie in [0, 1], got {self.p_keep!r}")
        if not self.dtheta > 0:
            raise ValueError(f"dtheta must be positive, got {self.dtheta!r}")
        ratio = 2 * math.pi / self.dtheta
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValueError(f"dtheta={self.dtheta!r} does not divide 2*pi into an integer number of headings")
        if not self.step_length < self.B / 2:
            raise ValueError(f"v*dt={self.step_length!r} must be smaller than B/2={self.B / 2!r}")

    @property
    def n_headings(self) -> int:
        return int(round(2 * math.pi / self.dtheta))

    @property
    def step_length(self) -> float:
        return self.v * self.dt

    @property
    def los_x(self) -> float:
        return self.B / 2

    def headings(self) -> np.ndarray:
        return np.arange(self.n_headings) * self.dtheta

    def replace(self, **changes) -> "MotionConfig":
        data = self.to_dict()
        data.update(changes)
        return MotionConfig(**data)

    def to_dict(self) -> dict:
        return {"B": self.B, "L": self.L, "v": self.v, "dt": self.dt, "p_keep": self.p_keep, "dtheta": self.dtheta}

    @classmethod
    def from_dict(cls, data: dict) -> "MotionConfig":
        """Build a config from a mapping; unknown keys are ignored so that
        profile files can carry extra pipeline settings."""
        known = {k: float(data[k]) for k in ("B", "L", "v", "dt", "p_keep", "dtheta") if k in data}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "MotionConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class PersonState:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class EventSequence:
    """Crossing times (step indices) observed over ``horizon`` steps."""

    event_times: np.ndarray
    horizon: int

    def __post_init__(self):
        times = np.asarray(self.event_times, dtype=np.int64)
        if times.ndim != 1:
            raise ValueError("event_times must be one-dimensional")
        if times.size and (times[0] < 0 or times[-1] >= self.horizon):
            raise ValueError("event times must lie in [0, horizon)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        object.__setattr__(self, "event_times", times)

    def __len__(self):
        return int(self.event_times.size)

    @property
    def inter_event_times(self) -> np.ndarray:
        return np.diff(self.event_times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step_index\n")
        for t in self.event_times:
            buf.write(f"{int(t)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon: int | None = None) -> "EventSequence":
        rows = list(csv.DictReader(io.StringIO(text)))
        times = np.array([int(r["step_index"]) for r in rows], dtype=np.int64)
        if horizon is None:
            horizon = int(times[-1]) + 1 if times.size else 1
        return cls(times, horizon)


@dataclass(frozen=True)
class InterEventCcdf:
    """Tabulated ``F_c(z) = P(T >= z)`` for ``z = 0 .. z_max`` and the per-step
    crossing probability ``p_c`` of a single walker."""

    ccdf: np.ndarray
    p_c: float
    n_samples: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        table = np.asarray(self.ccdf, dtype=np.float64)
        if table.ndim != 1 or table.size < 2:
            raise ValueError("ccdf table needs entries for at least z = 0 and z = 1")
        if not (0 < self.p_c <= 1):
            raise ValueError(f"p_c must lie in (0, 1], got {self.p_c!r}")
        if np.any(np.diff(table) > 1e-12):
            raise ValueError("ccdf must be non-increasing")
        object.__setattr__(self, "ccdf", table)

    @property
    def z_max(self) -> int:
        return int(self.ccdf.size - 1)

    def renewal_sum(self) -> float:
        """``sum_{m>=1} p_c F_c(m)``; equals 1 when ``p_c = 1 / E[T]``."""
        return math.fsum(self.p_c * self.ccdf[1:])

    def pmf(self) -> np.ndarray:
        """Single-walker inter-event PMF ``P(T = z)`` for ``z = 0 .. z_max``."""
        return self.ccdf - np.append(self.ccdf[1:], 0.0)

    def with_p_c(self, p_c: float) -> "InterEventCcdf":
        return InterEventCcdf(self.ccdf, p_c, self.n_samples, dict(self.extra))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("z,ccdf\n")
        for z, value in enumerate(self.ccdf):
            buf.write(f"{z},{float(value)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, p_c: float) -> "InterEventCcdf":
        rows = list(csv.DictReader(io.StringIO(text)))
        zs = [int(r["z"]) for r in rows]
        if zs != list(range(len(zs))):
            raise ValueError("ccdf CSV must list z = 0, 1, 2, ... in order")
        return cls(np.array([float(r["ccdf"]) for r in rows]), p_c)

    @classmethod
    def load(cls, ccdf_csv, p_c_json) -> "InterEventCcdf":
        meta = json.loads(Path(p_c_json).read_text(encoding="utf-8"))
        return cls.from_csv(Path(ccdf_csv).read_text(encoding="utf-8"), float(meta["p_c"]))


# --- single-step dynamics ---------------------------------------------------


def snap_heading(theta: float, cfg: MotionConfig) -> float:
    """Map an angle onto the nearest member of the heading set when it is within
    rounding error of one; otherwise just wrap it into [0, 2*pi)."""
    theta = theta % (2 * math.pi)
    k = round(theta / cfg.dtheta)
    if abs(theta - k * cfg.dtheta) < _HEADING_TOL:
        return (k % cfg.n_headings) * cfg.dtheta
    return theta


def step_heading(state: PersonState, cfg: MotionConfig, rng: np.random.Generator) -> float:
    if rng.random() < cfg.p_keep:
        return state.theta
    return float(rng.integers(cfg.n_headings)) * cfg.dtheta


def _reflect(value: float, upper: float) -> tuple[float, bool]:
    flipped = False
    while value < 0 or value > upper:
        value = -value if value < 0 else 2 * upper - value
        flipped = not flipped
    return value, flipped


def step_position(state: PersonState, cfg: MotionConfig) -> PersonState:
    """Advance one step along the current heading, mirroring off the walls."""
    x = state.x + cfg.step_length * math.cos(state.theta)
    y = state.y + cfg.step_length * math.sin(state.theta)
    x, flip_x = _reflect(x, cfg.B)
    y, flip_y = _reflect(y, cfg.L)
    theta = state.theta
    if flip_x:
        theta = math.pi - theta
    if flip_y:
        theta = -theta
    if flip_x or flip_y:
        theta = snap_heading(theta, cfg)
    return PersonState(x, y, theta)


def _side(x: float, c: float) -> int:
    tol = _LINE_TOL * max(abs(c), 1.0)
    return (x > c + tol) - (x < c - tol)


def detect_crossing(x_prev: float, x_next: float, cfg: MotionConfig) -> bool:
    """True when the step ``x_prev -> x_next`` crosses the LOS line.

    A step that lands exactly on the line counts; a step that starts on the
    line never does, so one transit through the line is counted once.
    """
    c = cfg.los_x
    before, after = _side(x_prev, c), _side(x_next, c)
    if before == 0:
        return False
    return after == 0 or after != before


def crossing_flags(x: np.ndarray, los_x: float) -> np.ndarray:
    """Vectorised :func:`detect_crossing` over consecutive positions.

    Element ``k`` of the result refers to the step ``x[k] -> x[k+1]``.
    """
    d = np.asarray(x) - los_x
    tol = _LINE_TOL * max(abs(los_x), 1.0)
    side = np.where(d > tol, 1, np.where(d < -tol, -1, 0))
    before, after = side[:-1], side[1:]
    return (before != 0) & ((after == 0) | (after != before))


def crossing_probability(cfg: MotionConfig) -> float:
    """Per-step LOS crossing probability of one walker, ``2 v dt / (B pi)``."""
    return 2 * cfg.v * cfg.dt / (cfg.B * math.pi)


# --- bulk simulation -------------------------------------------------------


def _fold(u: np.ndarray, upper: float) -> tuple[np.ndarray, np.ndarray]:
    """Fold unconstrained coordinates into [0, upper]; also report the parity of
    the number of reflections (True means the axis is mirrored)."""
    period = 2 * upper
    r = np.mod(u, period)
    mirrored = r > upper
    return np.where(mirrored, period - r, r), mirrored


def random_state(cfg: MotionConfig, rng: np.random.Generator) -> PersonState:
    return PersonState(
        float(rng.uniform(0, cfg.B)),
        float(rng.uniform(0, cfg.L)),
        float(rng.integers(cfg.n_headings)) * cfg.dtheta,
    )


def heading_indices(cfg: MotionConfig, steps: int, first: int, rng: np.random.Generator) -> np.ndarray:
    """Heading-index chain of length ``steps`` (Markov chain of the keep/redraw rule)."""
    redraw = rng.random(steps) >= cfg.p_keep
    redraw[0] = True
    values = rng.integers(cfg.n_headings, size=steps)
    values[0] = first
    last = np.maximum.accumulate(np.where(redraw, np.arange(steps), 0))
    return values[last]


def simulate_walk(
    cfg: MotionConfig,
    steps: int,
    rng: np.random.Generator,
    initial: PersonState | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions ``x[0..steps]``, ``y[0..steps]`` and headings ``theta[0..steps]``.

    ``theta[k]`` is the heading used for the move ``k -> k+1``.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if initial is None:
        initial = random_state(cfg, rng)
    n = cfg.n_headings
    first = int(round(initial.theta / cfg.dtheta)) % n
    if abs(snap_heading(initial.theta, cfg) - first * cfg.dtheta) > _HEADING_TOL:
        raise ValueError(f"initial heading {initial.theta!r} is not a multiple of dtheta")
    angles = heading_indices(cfg, steps + 1, first, rng) * cfg.dtheta
    ds = cfg.step_length
    ux = np.empty(steps + 1)
    uy = np.empty(steps + 1)
    ux[0], uy[0] = initial.x, initial.y
    ux[1:] = initial.x + ds * np.cumsum(np.cos(angles[:-1]))
    uy[1:] = initial.y + ds * np.cumsum(np.sin(angles[:-1]))
    x, mx = _fold(ux, cfg.B)
    y, my = _fold(uy, cfg.L)
    theta = np.where(mx, math.pi - angles, angles)
    theta = np.where(my, -theta, theta) % (2 * math.pi)
    return x, y, theta


def events_from_positions(x: np.ndarray, los_x: float) -> np.ndarray:
    """Step indices ``k+1`` at which the move ``k -> k+1`` crosses the LOS."""
    return np.flatnonzero(crossing_flags(x, los_x)) + 1


def simulate_person(
    cfg: MotionConfig,
    steps: int,
    seed: int | np.random.Generator | None = None,
    *,
    initial: PersonState | None = None,
    burn_in: int = BURN_IN_STEPS,
) -> EventSequence:
    """Simulate one walker and return its LOS crossings over ``steps`` steps.

    The walker starts uniformly over positions and headings (unless ``initial``
    is given) and walks ``burn_in`` unrecorded steps first. Event times are
    step indices relative to the end of the burn-in.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x, _, _ = simulate_walk(cfg, burn_in + steps - 1, rng, initial)
    events = events_from_positions(x, cfg.los_x) - burn_in
    return EventSequence(events[events >= 0], steps)


def simulate_people(cfg: MotionConfig, n: int, steps: int, seed: int | None = None, **kwargs) -> list[EventSequence]:
    """Independent walkers sharing one horizon, seeded by splitting ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [simulate_person(cfg, steps, np.random.default_rng(child), **kwargs) for child in children]


def merge_events(sequences: list[EventSequence]) -> EventSequence:
    """Superpose event sequences; coincident events collapse into one."""
    if not sequences:
        raise ValueError("need at least one sequence")
    horizon = max(s.horizon for s in sequences)
    times = np.unique(np.concatenate([s.event_times for s in sequences]))
    return EventSequence(times, horizon)


# --- empirical statistics --------------------------------------------------


def default_z_max(gaps: np.ndarray) -> int:
    """Smallest z with empirical ``F_c(z) < TAIL_TOLERANCE``, capped at ``Z_MAX_CAP``."""
    gaps = np.sort(np.asarray(gaps))
    n = gaps.size
    # F_c(z) = #(T >= z) / n drops below the tolerance once fewer than n*tol gaps remain
    keep = int(math.floor(n * TAIL_TOLERANCE))
    z = int(gaps[n - 1 - keep]) + 1 if keep < n else 1
    return max(2, min(z, Z_MAX_CAP))


def ccdf_from_gaps(gaps, z_max: int | None = None) -> np.ndarray:
    gaps = np.asarray(gaps, dtype=np.int64)
    if z_max is None:
        z_max = default_z_max(gaps)
    counts = np.bincount(np.minimum(gaps, z_max + 1), minlength=z_max + 2)
    # number of gaps >= z, for z = 0 .. z_max
    at_least = np.cumsum(counts[::-1])[::-1][: z_max + 1]
    return at_least / gaps.size


def empirical_interevent_ccdf(events: EventSequence | list[EventSequence], z_max: int | None = None) -> InterEventCcdf:
    """Empirical CCDF of inter-event times and the matching crossing probability.

    Several independent sequences may be passed; their inter-event samples are
    pooled and ``p_c`` is the pooled event rate.
    """
    seqs = events if isinstance(events, (list, tuple)) else [events]
    gaps = [s.inter_event_times for s in seqs]
    n = sum(g.size for g in gaps)
    if n < 1:
        raise ValueError("insufficient events for CCDF")
    all_gaps = np.concatenate(gaps)
    table = ccdf_from_gaps(all_gaps, z_max)
    p_c = sum(len(s) for s in seqs) / sum(s.horizon for s in seqs)
    return InterEventCcdf(table, p_c, n_samples=n)


def smooth_ccdf(ccdf: InterEventCcdf, rel_bandwidth: float = DEFAULT_SMOOTHING) -> InterEventCcdf:
    """Kernel-smooth the inter-event PMF behind a CCDF table.

    Each point mass at ``z`` is spread by a Gaussian of width
    ``max(rel_bandwidth * z, 0.5)`` steps, renormalised over ``1 .. z_max`` so no
    mass is lost. A finite simulation leaves empty bins in the long tail of the
    single-walker PMF; without smoothing those bins score as impossible under
    the one-person model. ``p_c`` is kept as is.
    """
    if rel_bandwidth <= 0:
        return ccdf
    pmf = ccdf.pmf()[1:]
    z = np.arange(1, pmf.size + 1, dtype=float)
    out = np.zeros_like(pmf)
    for j in np.flatnonzero(pmf):
        sigma = max(rel_bandwidth * z[j], 0.5)
        lo = max(0, int(z[j] - 5 * sigma) - 1)
        hi = min(pmf.size, int(z[j] + 5 * sigma) + 2)
        kernel = np.exp(-0.5 * ((z[lo:hi] - z[j]) / sigma) ** 2)
        out[lo:hi] += pmf[j] * kernel / kernel.sum()
    tail = np.cumsum(out[::-1])[::-1]
    table = np.concatenate(([1.0], tail / tail[0]))
    extra = dict(ccdf.extra, smoothing=rel_bandwidth)
    return InterEventCcdf(table, ccdf.p_c, ccdf.n_samples, extra)


def simulate_ccdf(
    cfg: MotionConfig,
    steps: int = 1_000_000,
    seed: int | None = 0,
    z_max: int | None = None,
    smooth: float = 0.0,
) -> InterEventCcdf:
    """Single-walker ``F_c`` and ``p_c`` from a long simulation."""
    events = simulate_person(cfg, steps, seed)
    ccdf = empirical_interevent_ccdf(events, z_max)
    ccdf.extra.update({"steps": steps, "seed": seed, "config": cfg.to_dict(), "p_c_analytic": crossing_probability(cfg)})
    return smooth_ccdf(ccdf, smooth) if smooth else ccdf


def lag1_correlation(events: EventSequence) -> float:
    """Lag-1 autocorrelation of the inter-event times (reported, not modelled)."""
    t = events.inter_event_times.astype(float)
    if t.size < 3:
        return float("nan")
    return float(np.corrcoef(t[:-1], t[1:])[0, 1])
