"""Maximum-likelihood people count from observed inter-event times."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .motion_sim import InterEventCcdf
from .renewal_core import CountPmf, pmf_family

PROB_FLOOR = 1e-12
DEFAULT_M_MAX = 30


@dataclass(frozen=True)
class ObservedGaps:
    """Observed inter-event times in steps.

    ``timestamps[i]`` (seconds), when present, is the time at which gap ``i``
    was completed, i.e. the start of the later of its two events.
    """

    gaps: np.ndarray
    t_min: int = 0
    dt: float = 0.05
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        gaps = np.asarray(self.gaps, dtype=np.int64).reshape(-1)
        if gaps.size and gaps.min() < max(1, self.t_min):
            raise ValueError(f"gaps must be >= max(1, t_min={self.t_min})")
        object.__setattr__(self, "gaps", gaps)
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
            if ts.size != gaps.size:
                raise ValueError("timestamps and gaps differ in length")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return int(self.gaps.size)

    def prefix(self, t_s: float) -> "ObservedGaps":
        if self.timestamps is None:
            raise ValueError("timestamps required")
        k = int(np.searchsorted(self.timestamps, t_s, side="right"))
        return ObservedGaps(self.gaps[:k], self.t_min, self.dt, self.timestamps[:k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.timestamps is None:
            buf.write("gap_steps\n")
            for g in self.gaps:
                buf.write(f"{int(g)}\n")
        else:
            buf.write("gap_steps,t_s\n")
            for g, t in zip(self.gaps, self.timestamps):
                buf.write(f"{int(g)},{float(t)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, t_min: int = 0, dt: float = 0.05) -> "ObservedGaps":
        import csv

        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            return cls(np.zeros(0, dtype=np.int64), t_min, dt)
        gaps = np.array([int(r["gap_steps"]) for r in rows])
        ts = None
        if "t_s" in rows[0] and rows[0]["t_s"] not in (None, ""):
            ts = np.array([float(r["t_s"]) for r in rows])
        return cls(gaps, t_min, dt, ts)


@dataclass(frozen=True)
class EstimateResult:
    n_hat: int
    loglik: np.ndarray
    n_observations: int

    def to_dict(self) -> dict:
        return {
            "n_hat": self.n_hat,
            "loglik": [[m, float(ll)] for m, ll in enumerate(self.loglik, start=1)],
            "n_observations": self.n_observations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def gap_log_terms(gaps: ObservedGaps, pmf: CountPmf) -> np.ndarray:
    """Per-gap ``log f(T_i)`` with the probability floor applied."""
    return np.log(np.maximum(pmf(gaps.gaps), PROB_FLOOR))


def log_likelihood(gaps: ObservedGaps, pmf: CountPmf) -> float:
    if len(gaps) == 0:
        raise ValueError("no observations")
    return float(np.sum(gap_log_terms(gaps, pmf)))


def _argmax_smallest(values: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the smallest candidate count
    return int(np.argmax(values)) + 1


def loglik_table(gaps: ObservedGaps, family: list[CountPmf]) -> np.ndarray:
    return np.array([log_likelihood(gaps, pmf) for pmf in family])


def estimate_from_family(gaps: ObservedGaps, family: list[CountPmf]) -> EstimateResult:
    ll = loglik_table(gaps, family)
    return EstimateResult(_argmax_smallest(ll), ll, len(gaps))


def estimate_count(gaps: ObservedGaps, ccdf: InterEventCcdf, m_max: int = DEFAULT_M_MAX) -> EstimateResult:
    """ML count over candidates ``1 .. m_max``; ties go to the smaller count."""
    if int(m_max) != m_max or m_max < 1:
        raise ValueError("m_max must be a positive integer")
    if len(gaps) == 0:
        raise ValueError("no events observed")
    return estimate_from_family(gaps, pmf_family(ccdf, gaps.t_min, m_max))


def estimate_over_time(
    gaps: ObservedGaps,
    ccdf: InterEventCcdf,
    m_max: int = DEFAULT_M_MAX,
    checkpoint_s: float = 10.0,
    family: list[CountPmf] | None = None,
) -> list[tuple[float, int]]:
    """Estimate on the growing prefix of gaps at every ``checkpoint_s`` seconds.

    The per-gap log terms are computed once and accumulated, so the table at a
    checkpoint is the running sum over the gaps seen so far.
    """
    if gaps.timestamps is None:
        raise ValueError("timestamps required")
    if checkpoint_s <= 0:
        raise ValueError("checkpoint_s must be positive")
    if len(gaps) == 0:
        return []
    if family is None:
        family = pmf_family(ccdf, gaps.t_min, m_max)
    terms = np.stack([gap_log_terms(gaps, pmf) for pmf in family])  # (M, n)
    running = np.cumsum(terms, axis=1)
    end = float(gaps.timestamps[-1])
    checkpoints = np.arange(checkpoint_s, end + checkpoint_s, checkpoint_s)
    series = []
    for t in checkpoints:
        k = int(np.searchsorted(gaps.timestamps, t, side="right"))
        if k == 0:
            continue
        series.append((float(t), _argmax_smallest(running[:, k - 1])))
    return series


def series_to_csv(series: list[tuple[float, int]]) -> str:
    lines = ["t_s,n_hat"] + [f"{t:g},{n}" for t, n in series]
    return "\n".join(lines) + "\n"
