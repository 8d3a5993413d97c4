"""End-to-end counting and the closed-loop synthetic harness.

Glue between the modules: trace -> baseline -> dips -> gaps -> ML count, plus
seeded synthetic experiments (synthesize, calibrate on a ripple-only trace,
count) and the speed/threshold sensitivity sweeps built on them.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .estimator import DEFAULT_M_MAX, EstimateResult, ObservedGaps, estimate_from_family, estimate_over_time
from .motion_sim import DEFAULT_SMOOTHING, InterEventCcdf, MotionConfig, simulate_ccdf
from .renewal_core import CountPmf, pmf_family
from .synth_rssi import SynthConfig, multipath_only, synthesize
from .trace_processing import (
    CalibrationResult,
    DipEvent,
    RssiTrace,
    baseline,
    calibrate_threshold,
    detect_dips,
    gaps_from_dips,
)

CCDF_STEPS = 1_000_000
CCDF_SEED = 0
T_MIN_S = 1.0
PIPELINE_BASELINE = "upper_median"
PIPELINE_ANCHOR = "end"
SWEEP_COUNTS = (1, 3, 5, 7, 9)
WORKERS_ENV = "WALLCOUNT_WORKERS"


@lru_cache(maxsize=32)
def _cached_ccdf(cfg: MotionConfig, steps: int, seed: int, smooth: float) -> InterEventCcdf:
    return simulate_ccdf(cfg, steps, seed, smooth=smooth)


def model_ccdf(
    cfg: MotionConfig,
    steps: int = CCDF_STEPS,
    seed: int = CCDF_SEED,
    smooth: float = DEFAULT_SMOOTHING,
) -> InterEventCcdf:
    """Simulated single-walker CCDF used by the estimator (memoised)."""
    return _cached_ccdf(cfg, int(steps), int(seed), float(smooth))


@lru_cache(maxsize=64)
def _cached_family(cfg: MotionConfig, steps: int, seed: int, smooth: float, t_min: int, m_max: int):
    return tuple(pmf_family(_cached_ccdf(cfg, steps, seed, smooth), t_min, m_max))


def model_family(
    cfg: MotionConfig,
    t_min_steps: int,
    m_max: int = DEFAULT_M_MAX,
    steps: int = CCDF_STEPS,
    seed: int = CCDF_SEED,
    smooth: float = DEFAULT_SMOOTHING,
) -> list[CountPmf]:
    return list(_cached_family(cfg, int(steps), int(seed), float(smooth), int(t_min_steps), int(m_max)))


@dataclass
class TraceCount:
    result: EstimateResult
    gaps: ObservedGaps
    dips: list[DipEvent]
    base_db: float
    t_los_db: float
    series: list[tuple[float, int]]


def count_trace(
    trace: RssiTrace,
    family: list[CountPmf],
    t_los: float,
    dt: float,
    t_min_s: float = T_MIN_S,
    baseline_method: str = PIPELINE_BASELINE,
    anchor: str = PIPELINE_ANCHOR,
    checkpoint_s: float | None = 10.0,
) -> TraceCount:
    """Count people in one trace given a precomputed PMF family."""
    base = baseline(trace, baseline_method, window_db=t_los)
    dips = detect_dips(trace, base, t_los)
    gaps = gaps_from_dips(dips, t_min_s, dt, anchor=anchor)
    if len(gaps) == 0:
        raise ValueError("no events observed")
    result = estimate_from_family(gaps, family)
    series = estimate_over_time(gaps, None, len(family), checkpoint_s, family=family) if checkpoint_s else []
    return TraceCount(result, gaps, dips, base, t_los, series)


def calibration_for(cfg: SynthConfig, seed: int) -> CalibrationResult:
    """Calibrate on a ripple-only trace drawn with its own seed."""
    return calibrate_threshold(multipath_only(cfg.replace(n_people=0, seed=seed)))


def cell_seed(seed: int, *key: int) -> int:
    """Fixed sub-seed for one experiment cell, independent of execution order."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])


@dataclass
class ClosedLoopRun:
    n_true: int
    seed: int
    n_hat: int
    n_gaps: int
    t_los_db: float
    series: list[tuple[float, int]]

    @property
    def error(self) -> int:
        return self.n_hat - self.n_true


def closed_loop(
    n_people: int,
    seed: int,
    synth: SynthConfig | None = None,
    assumed_motion: MotionConfig | None = None,
    t_los: float | None = None,
    t_los_offset: float = 0.0,
    t_min_s: float = T_MIN_S,
    m_max: int = DEFAULT_M_MAX,
    checkpoint_s: float | None = None,
    anchor: str = PIPELINE_ANCHOR,
) -> ClosedLoopRun:
    """Synthesize a trace for ``n_people``, calibrate, detect and count.

    ``assumed_motion`` is the motion model behind the estimator's PMF family
    (defaults to the generator's); ``t_los`` overrides calibration.
    """
    synth = (synth or SynthConfig()).replace(n_people=n_people, seed=cell_seed(seed, n_people, 1))
    motion = assumed_motion or synth.motion
    if t_los is None:
        t_los = calibration_for(synth, cell_seed(seed, n_people, 2)).t_los_db
    t_los = t_los + t_los_offset
    dt = 1.0 / synth.sample_rate
    family = model_family(motion, int(round(t_min_s / dt)), m_max)
    labeled = synthesize(synth)
    out = count_trace(labeled.trace, family, t_los, dt, t_min_s, anchor=anchor, checkpoint_s=checkpoint_s)
    return ClosedLoopRun(n_people, seed, out.result.n_hat, len(out.gaps), t_los, out.series)


def _sweep_cell(args) -> tuple[tuple, int]:
    kind, value, n, seed, synth = args
    if kind == "speed":
        run = closed_loop(n, seed, synth, assumed_motion=synth.motion.replace(v=value))
    elif kind == "threshold":
        run = closed_loop(n, seed, synth, t_los_offset=value)
    elif kind == "threshold_abs":
        run = closed_loop(n, seed, synth, t_los=value)
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    return (value, n, seed), abs(run.error)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def sweep(
    kind: str,
    values,
    seeds,
    synth: SynthConfig | None = None,
    counts=SWEEP_COUNTS,
    workers: int | None = None,
) -> list[tuple[float, float]]:
    """Mean absolute count error at each parameter value.

    ``kind`` is ``speed`` (assumed walking speed, m/s), ``threshold`` (offset
    from the calibrated T_LOS, dB) or ``threshold_abs`` (absolute T_LOS, dB).
    Cells are keyed by (value, N, seed) and merged in sorted order, so the
    result does not depend on the worker count.
    """
    values = [float(v) for v in values]
    seeds = [int(s) for s in seeds]
    if not values:
        raise ValueError("empty parameter range")
    if not seeds:
        raise ValueError("empty seed list")
    synth = synth or SynthConfig()
    cells = [(kind, v, n, s, synth) for v in values for n in counts for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_sweep_cell, cells))
    else:
        results = dict(map(_sweep_cell, cells))
    out = []
    for v in values:
        errs = [results[(v, n, s)] for n in counts for s in seeds]
        out.append((v, float(np.mean(errs))))
    return out


def sweep_to_csv(rows: list[tuple[float, float]]) -> str:
    return "param_value,mean_abs_error\n" + "".join(f"{v:g},{e:.6f}\n" for v, e in rows)
