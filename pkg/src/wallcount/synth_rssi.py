"""Labelled synthetic RSSI traces for exercising the pipeline without radios.

A trace is a flat level plus bounded, temporally correlated multipath ripple,
with a blockage dip rendered around every LOS crossing of N simulated walkers.
Inside a dip the ripple is faded out so the trough sits exactly at the drawn
depth; overlapping dips combine into one dip as deep as the deepest of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .motion_sim import MotionConfig, merge_events, simulate_people
from .trace_processing import RssiTrace

# ripple std as a fraction of the clip level; ~1.3% of samples sit on the clip
_RIPPLE_SIGMA_FRACTION = 1 / 2.5
_EDGE_FRACTION = 0.3


@dataclass(frozen=True)
class SynthConfig:
    base_dbm: float = -45.0
    ripple_db: float = 3.8
    dip_depth_range_db: tuple[float, float] = (6.0, 10.0)
    dip_width_s: float = 1.0
    sample_rate: float = 20.0
    n_people: int = 1
    motion: MotionConfig = field(default_factory=MotionConfig)
    seed: int = 0
    duration_s: float = 300.0
    ripple_corr_s: float = 0.25

    def __post_init__(self):
        lo, hi = self.dip_depth_range_db
        object.__setattr__(self, "dip_depth_range_db", (float(lo), float(hi)))
        if not lo > self.ripple_db:
            raise ValueError("minimum dip depth must exceed ripple_db")
        if hi < lo:
            raise ValueError("dip_depth_range_db must be (min, max)")
        if not self.dip_width_s > 0:
            raise ValueError("dip_width_s must be positive")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.ripple_db < 0 or self.ripple_corr_s <= 0 or self.duration_s <= 0:
            raise ValueError("ripple_db, ripple_corr_s and duration_s must be positive")
        if int(self.n_people) != self.n_people or self.n_people < 0:
            raise ValueError("n_people must be a non-negative integer")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))

    def replace(self, **changes) -> "SynthConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return SynthConfig(**data)

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data["motion"] = self.motion.to_dict()
        data["dip_depth_range_db"] = list(self.dip_depth_range_db)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        motion = data.pop("motion", None)
        if isinstance(motion, dict):
            data["motion"] = MotionConfig.from_dict(motion)
        if "dip_depth_range_db" in data:
            data["dip_depth_range_db"] = tuple(data["dip_depth_range_db"])
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class LabeledTrace:
    trace: RssiTrace
    true_crossings: np.ndarray
    n_true: int
    dip_windows: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def labels_csv(self) -> str:
        return "t_s\n" + "".join(f"{t:.6f}\n" for t in self.true_crossings)


def _streams(cfg: SynthConfig):
    walkers, ripple, dips = np.random.SeedSequence(cfg.seed).spawn(3)
    return walkers, np.random.default_rng(ripple), np.random.default_rng(dips)


def _ripple(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_samples
    if cfg.ripple_db == 0:
        return np.zeros(n)
    sigma = cfg.ripple_corr_s * cfg.sample_rate
    noise = gaussian_filter1d(rng.standard_normal(n), sigma, mode="wrap") if sigma > 0 else rng.standard_normal(n)
    noise /= noise.std()
    noise -= noise.mean()
    return np.clip(noise * cfg.ripple_db * _RIPPLE_SIGMA_FRACTION, -cfg.ripple_db, cfg.ripple_db)


def dip_shape(t: np.ndarray, center: float, width: float) -> np.ndarray:
    """Flat-bottomed dip profile in [0, 1] with raised-cosine edges (Tukey)."""
    u = (t - center) / width + 0.5  # 0..1 across the dip
    out = np.zeros_like(t)
    inside = (u >= 0) & (u <= 1)
    edge = _EDGE_FRACTION / 2
    ui = u[inside]
    w = np.ones_like(ui)
    rising = ui < edge
    falling = ui > 1 - edge
    w[rising] = 0.5 * (1 - np.cos(np.pi * ui[rising] / edge))
    w[falling] = 0.5 * (1 - np.cos(np.pi * (1 - ui[falling]) / edge))
    out[inside] = w
    return out


def _time_axis(cfg: SynthConfig) -> np.ndarray:
    return np.arange(cfg.n_samples) / cfg.sample_rate


def multipath_only(cfg: SynthConfig) -> RssiTrace:
    """Ripple-only trace, as if people walked without blocking the LOS."""
    _, ripple_rng, _ = _streams(cfg)
    return RssiTrace(_time_axis(cfg), cfg.base_dbm + _ripple(cfg, ripple_rng), cfg.sample_rate)


def crossing_times(cfg: SynthConfig, walker_seed=None) -> np.ndarray:
    """Merged crossing times (seconds) of ``cfg.n_people`` simulated walkers."""
    if cfg.n_people == 0:
        return np.zeros(0)
    if walker_seed is None:
        walker_seed, _, _ = _streams(cfg)
    steps = int(round(cfg.duration_s / cfg.motion.dt))
    seed = int(walker_seed.generate_state(1)[0])
    merged = merge_events(simulate_people(cfg.motion, cfg.n_people, steps, seed))
    return merged.event_times * cfg.motion.dt


def render_trace(cfg: SynthConfig, crossings, ripple_rng: np.random.Generator, dip_rng: np.random.Generator) -> LabeledTrace:
    """Render ripple plus one dip per crossing time (seconds) onto the sample grid.

    Overlapping dips combine by taking the deeper attenuation at each sample,
    so coincident crossings block the link as a single region.
    """
    crossings = np.sort(np.asarray(crossings, dtype=float))
    t = _time_axis(cfg)
    ripple = _ripple(cfg, ripple_rng)
    envelope = np.zeros_like(t)
    attenuation = np.zeros_like(t)
    lo, hi = cfg.dip_depth_range_db
    windows = []
    for c in crossings:
        width = cfg.dip_width_s * dip_rng.uniform(0.8, 1.2)
        depth = dip_rng.uniform(lo, hi)
        a, b = np.searchsorted(t, [c - width / 2, c + width / 2])
        windows.append((c - width / 2, c + width / 2))
        if b <= a:
            continue
        shape = dip_shape(t[a:b], c, width)
        envelope[a:b] = np.maximum(envelope[a:b], shape)
        attenuation[a:b] = np.maximum(attenuation[a:b], depth * shape)
    rssi = cfg.base_dbm + ripple * (1 - envelope) - attenuation
    trace = RssiTrace(t, rssi, cfg.sample_rate)
    return LabeledTrace(trace, crossings, cfg.n_people, np.array(windows).reshape(-1, 2))


def synthesize(cfg: SynthConfig) -> LabeledTrace:
    walker_seed, ripple_rng, dip_rng = _streams(cfg)
    return render_trace(cfg, crossing_times(cfg, walker_seed), ripple_rng, dip_rng)


def inject(cfg: SynthConfig, crossings) -> LabeledTrace:
    """Trace with dips at the given crossing times instead of simulated ones."""
    _, ripple_rng, dip_rng = _streams(cfg)
    return render_trace(cfg, crossings, ripple_rng, dip_rng)
