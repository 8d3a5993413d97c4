"""Inter-event PMF of N superposed walkers.

With one walker, the backward recurrence time ``Z`` (steps back to the last
crossing) has ``P(Z = z) = p_c F_c(z)`` for ``z >= 1``. For N independent
walkers the merged process has ``Z_p = min(Z^1, ..., Z^N)``, so

    P(Z_p >= z) = [sum_{m >= z} p_c F_c(m)] ** N

and the merged inter-event PMF is proportional to the (negated) first
difference of ``P(Z_p = z)``. Sums are truncated at the CCDF table's ``z_max``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .motion_sim import InterEventCcdf


@dataclass(frozen=True)
class SuperposedRecurrenceCcdf:
    """``P(Z_p >= z)`` for ``z = 0 .. z_max`` (entry 0 repeats entry 1 since
    ``Z_p >= 1`` always)."""

    table: np.ndarray
    n_people: int

    @property
    def z_max(self) -> int:
        return int(self.table.size - 1)

    def pmf(self) -> np.ndarray:
        """``P(Z_p = z)`` for ``z = 0 .. z_max`` (entry 0 is zero)."""
        g = self.table - np.append(self.table[1:], 0.0)
        g[0] = 0.0
        return np.clip(g, 0.0, None)


@dataclass(frozen=True)
class CountPmf:
    """Inter-event PMF ``f(z)`` for ``z = 0 .. z_max`` under ``n_people`` walkers.

    Entry 0 is always zero. ``norm_const`` is the factor applied to the raw
    second difference to make the table sum to one (the truncation factor is
    folded in when ``t_min > 1``).
    """

    n_people: int
    pmf: np.ndarray
    t_min: int = 0
    norm_const: float = 1.0

    def __post_init__(self):
        table = np.asarray(self.pmf, dtype=np.float64)
        if table.ndim != 1 or table.size < 2:
            raise ValueError("pmf table needs entries for z = 0 and z = 1")
        if np.any(table < 0):
            raise ValueError("pmf has negative entries")
        object.__setattr__(self, "pmf", table)

    @property
    def z_max(self) -> int:
        return int(self.pmf.size - 1)

    def __call__(self, z):
        z = np.asarray(z)
        inside = (z >= 0) & (z <= self.z_max)
        return np.where(inside, self.pmf[np.clip(z, 0, self.z_max)], 0.0)

    def total(self) -> float:
        return math.fsum(self.pmf)

    def mean(self) -> float:
        return math.fsum(np.arange(self.pmf.size) * self.pmf)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw i.i.d. inter-event times from the table."""
        cdf = self.cdf()
        cdf /= cdf[-1]
        return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), self.z_max).astype(np.int64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("z,probability\n")
        for z in range(1, self.pmf.size):
            buf.write(f"{z},{float(self.pmf[z])!r}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "n_people": self.n_people,
            "t_min": self.t_min,
            "norm_const": self.norm_const,
            "pmf": self.pmf[1:].tolist(),
        }

    @classmethod
    def from_csv(cls, text: str, n_people: int, t_min: int = 0) -> "CountPmf":
        rows = list(csv.DictReader(io.StringIO(text)))
        zs = [int(r["z"]) for r in rows]
        table = np.zeros(max(zs) + 1)
        table[zs] = [float(r["probability"]) for r in rows]
        return cls(n_people, table, t_min)


def _normalise(raw: np.ndarray) -> tuple[np.ndarray, float]:
    mass = math.fsum(raw)
    if not mass > 0:
        raise ValueError("degenerate PMF")
    c = 1.0 / mass
    return raw * c, c


def _check_count(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError("count must be positive")
    return int(n)


def single_recurrence_tail(ccdf: InterEventCcdf) -> np.ndarray:
    """``sum_{m=z}^{z_max} p_c F_c(m)`` for ``z = 0 .. z_max + 1``; entry 0 repeats
    entry 1 and the last entry is zero."""
    terms = ccdf.p_c * ccdf.ccdf[1:]
    # accumulate from the small tail terms upwards
    tail = np.cumsum(terms[::-1])[::-1]
    return np.concatenate(([tail[0]], tail, [0.0]))


def superposed_recurrence_ccdf(ccdf: InterEventCcdf, n: int) -> SuperposedRecurrenceCcdf:
    n = _check_count(n)
    tail = single_recurrence_tail(ccdf)[:-1]
    table = tail if n == 1 else tail**n
    return SuperposedRecurrenceCcdf(np.clip(table, 0.0, 1.0), n)


def superposed_interevent_pmf(ccdf: InterEventCcdf, n: int) -> CountPmf:
    """Untruncated inter-event PMF of ``n`` superposed walkers on ``1 .. z_max``."""
    n = _check_count(n)
    if n == 1:
        # P(Z = z) = p_c F_c(z) directly, without the round trip through the tail sum
        g = np.append(ccdf.p_c * ccdf.ccdf[1:], 0.0)
    else:
        power = single_recurrence_tail(ccdf) ** n
        # P(Z_p = z) for z = 1 .. z_max, then zero beyond the table
        g = np.append(power[1:-1] - power[2:], 0.0)
    # second stage: f(z) proportional to P(Z_p = z) - P(Z_p = z + 1)
    raw = np.abs(g[:-1] - g[1:])
    # exact arithmetic gives raw >= 0 (convexity); abs only absorbs rounding sign flips
    raw[np.abs(raw) < 1e-300] = 0.0
    pmf, c = _normalise(np.concatenate(([0.0], raw)))
    return CountPmf(n, pmf, 0, c)


def truncated_pmf(pmf: CountPmf, t_min: int) -> CountPmf:
    """Condition the PMF on ``T >= t_min``."""
    t_min = int(t_min)
    if t_min <= 1:
        return CountPmf(pmf.n_people, pmf.pmf, max(pmf.t_min, t_min), pmf.norm_const)
    if t_min > pmf.z_max:
        raise ValueError("truncation removes all support")
    table = pmf.pmf.copy()
    table[:t_min] = 0.0
    mass = math.fsum(table)
    if not mass > 0:
        raise ValueError("truncation removes all support")
    return CountPmf(pmf.n_people, table / mass, t_min, pmf.norm_const / mass)


def pmf_family(ccdf: InterEventCcdf, t_min: int, m_max: int) -> list[CountPmf]:
    """Truncated PMFs for candidate counts ``1 .. m_max``."""
    if int(m_max) != m_max or m_max < 1:
        raise ValueError("m_max must be a positive integer")
    family = []
    for n in range(1, int(m_max) + 1):
        try:
            family.append(truncated_pmf(superposed_interevent_pmf(ccdf, n), t_min))
        except ValueError as exc:
            raise ValueError(f"N={n}: {exc}") from exc
    return family


def family_to_json(family: list[CountPmf]) -> str:
    return json.dumps({str(p.n_people): p.to_dict() for p in family})


def family_from_json(text: str) -> list[CountPmf]:
    data = json.loads(text)
    out = []
    for key in sorted(data, key=int):
        d = data[key]
        out.append(CountPmf(int(d["n_people"]), np.concatenate(([0.0], d["pmf"])), int(d["t_min"]), float(d["norm_const"])))
    return out


def total_variation(p, q) -> float:
    """Total-variation distance between two PMF tables indexed from 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    size = max(p.size, q.size)
    p = np.pad(p, (0, size - p.size))
    q = np.pad(q, (0, size - q.size))
    return 0.5 * float(np.abs(p - q).sum())


def empirical_pmf(gaps, size: int | None = None) -> np.ndarray:
    """Relative frequencies of integer gaps, indexed from 0.

    ``size`` pads the table; gaps beyond it are kept, never dropped.
    """
    gaps = np.asarray(gaps, dtype=np.int64)
    counts = np.bincount(gaps, minlength=size or 0).astype(float)
    return counts / gaps.size
