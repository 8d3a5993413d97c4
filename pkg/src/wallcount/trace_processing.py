"""RSSI trace ingestion, LOS-dip detection and threshold calibration."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .estimator import ObservedGaps

MIN_SAMPLES = 100
DEBOUNCE_SAMPLES = 2
TROUGH_PROMINENCE_DB = 2.0
CALIBRATION_PERCENTILE = 99.9
CALIBRATION_MARGIN_DB = 1.0
CALIBRATION_STEP_DB = 0.5
IMPLAUSIBLE_THRESHOLD_DB = 10.0


class TraceError(ValueError):
    """Malformed or unusable RSSI trace."""


@dataclass(frozen=True)
class RssiTrace:
    t: np.ndarray
    rssi: np.ndarray
    sample_rate: float

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        rssi = np.asarray(self.rssi, dtype=float)
        if t.shape != rssi.shape or t.ndim != 1:
            raise TraceError("t and rssi must be 1-D arrays of equal length")
        if not np.all(np.isfinite(rssi)):
            raise TraceError("rssi values must be finite")
        if t.size > 1:
            step = np.diff(t)
            if np.any(step <= 0):
                raise TraceError("timestamps not increasing")
            period = 1.0 / self.sample_rate
            if np.any(np.abs(step - period) > 0.01 * period):
                raise TraceError(f"sample spacing deviates from 1/sample_rate={period:g} s by more than 1%")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "rssi", rssi)

    def __len__(self):
        return int(self.t.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_s,rssi_dbm\n")
        for t, r in zip(self.t, self.rssi):
            buf.write(f"{t:.6f},{r:.4f}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class DipEvent:
    start_s: float
    end_s: float
    depth_db: float


@dataclass(frozen=True)
class CalibrationResult:
    t_los_db: float
    max_multipath_dip_db: float
    baseline_db: float | None = None
    percentile_depth_db: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def load_trace(source, min_samples: int = MIN_SAMPLES) -> RssiTrace:
    """Parse a ``t_s,rssi_dbm`` CSV from a path, text, bytes or file object."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["t_s", "rssi_dbm"]:
        raise TraceError(f"expected header 't_s,rssi_dbm', got {header!r}")
    ts, values = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise TraceError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            t, r = float(row[0]), float(row[1])
        except ValueError:
            raise TraceError(f"line {lineno}: non-numeric value in {row!r}") from None
        if not (math.isfinite(t) and math.isfinite(r)):
            raise TraceError(f"line {lineno}: non-finite value in {row!r}")
        ts.append(t)
        values.append(r)
    if len(ts) < min_samples:
        raise TraceError(f"trace has {len(ts)} samples, need at least {min_samples}")
    t = np.array(ts)
    if np.any(np.diff(t) <= 0):
        raise TraceError("timestamps not increasing")
    spacing = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    return RssiTrace(t, np.array(values), 1.0 / spacing)


def baseline(trace: RssiTrace, method: str = "median", window_db: float = 5.0) -> float:
    """Unoccluded signal level.

    ``median``: median of all samples. ``top_half_mean``: mean of the upper
    half. ``upper_median``: fixed point of ``b = median{r : r >= b - window_db}``
    reached from the 99th percentile downwards; unlike the plain median it
    stays on the unoccluded level when dips cover most of the trace.
    """
    r = trace.rssi
    if method == "median":
        return float(np.median(r))
    if method == "top_half_mean":
        ordered = np.sort(r)
        return float(ordered[ordered.size // 2 :].mean())
    if method == "upper_median":
        level = float(np.percentile(r, 99))
        for _ in range(200):
            nxt = float(np.median(r[r >= level - window_db]))
            if abs(nxt - level) < 1e-9:
                break
            level = nxt
        return level
    raise ValueError(f"unknown baseline method {method!r}")


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (first, last) index pairs of the True runs in ``mask``."""
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


def detect_dips(
    trace: RssiTrace,
    base: float,
    t_los: float,
    debounce: int = DEBOUNCE_SAMPLES,
    prominence_db: float = TROUGH_PROMINENCE_DB,
) -> list[DipEvent]:
    """Blockage dips: excursions more than ``t_los`` dB below ``base``.

    Samples below ``base - t_los`` form runs; runs separated by fewer than
    ``debounce`` above-threshold samples merge. Each trough deeper than
    ``t_los`` whose prominence is at least ``prominence_db`` is one dip, so a
    run holding several such troughs (overlapping crossings that have not yet
    merged into one) is split at the highest point between them, and a run
    with no prominent trough is ignored. Prominence does not depend on
    ``t_los``, so raising the threshold can only remove dips, never split
    one into two. A dip ends one sample period after its last sample.
    """
    if not t_los > 0:
        raise ValueError("t_los must be positive")
    depth = base - trace.rssi
    # pad so that troughs touching either end of the trace are still found
    padded = np.concatenate(([-np.inf], depth, [-np.inf]))
    troughs, _ = find_peaks(padded, height=t_los, prominence=prominence_db)
    troughs = troughs - 1
    merged: list[list[int]] = []
    for first, last in _runs(depth > t_los):
        if merged and first - merged[-1][1] - 1 < debounce:
            merged[-1][1] = last
        else:
            merged.append([first, last])
    period = 1.0 / trace.sample_rate
    dips = []
    for a, b in merged:
        inside = troughs[(troughs >= a) & (troughs <= b)]
        if inside.size == 0:
            continue
        saddles = [int(p + np.argmin(depth[p : q + 1])) for p, q in zip(inside, inside[1:])]
        bounds = [a, *saddles, b + 1]
        for lo, hi in zip(bounds, bounds[1:]):
            dips.append(DipEvent(float(trace.t[lo]), float(trace.t[hi - 1]) + period, float(depth[lo:hi].max())))
    return dips


def dips_to_csv(dips: list[DipEvent]) -> str:
    lines = ["start_s,end_s,depth_db"] + [f"{d.start_s:.6f},{d.end_s:.6f},{d.depth_db:.4f}" for d in dips]
    return "\n".join(lines) + "\n"


def dips_from_csv(text: str) -> list[DipEvent]:
    return [DipEvent(float(r["start_s"]), float(r["end_s"]), float(r["depth_db"])) for r in csv.DictReader(io.StringIO(text))]


def typical_dip_width(dips: list[DipEvent], t_min: float) -> float:
    """Median duration of dips short enough to hold a single crossing."""
    widths = np.array([d.end_s - d.start_s for d in dips])
    single = widths[widths <= 1.5 * t_min]
    return float(np.median(single)) if single.size else t_min


def gaps_from_dips(dips: list[DipEvent], t_min: float, dt: float, anchor: str = "start") -> ObservedGaps:
    """Inter-event times (in steps of ``dt``) between detected dips.

    An event closer than ``t_min`` seconds to the previous kept event cannot be
    told apart from it and is absorbed, so every gap is at least ``t_min``.

    ``anchor="start"`` measures from the start of the previous kept dip.
    ``anchor="end"`` measures from the last crossing absorbed so far, located at
    ``end - w`` of the latest absorbed dip, where ``w`` is the typical width
    of a single-crossing dip. This matches the model's observation of exactly
    the inter-crossing gaps that are ``>= t_min``, even when a run of close
    crossings has merged into one long dip.
    """
    if len(dips) < 2:
        raise TraceError("insufficient dips")
    if anchor not in ("start", "end"):
        raise ValueError(f"unknown anchor {anchor!r}")
    t_min_steps = int(round(t_min / dt))
    eps = 1e-9
    width = typical_dip_width(dips, t_min) if anchor == "end" else 0.0

    def origin_of(d: DipEvent) -> float:
        return d.start_s if anchor == "start" else max(d.start_s, d.end_s - width)

    origin = origin_of(dips[0])
    gaps, stamps = [], []
    for d in dips[1:]:
        gap_s = d.start_s - origin
        if gap_s >= t_min - eps:
            gaps.append(max(int(round(gap_s / dt)), t_min_steps, 1))
            stamps.append(d.start_s)
            origin = origin_of(d)
        elif anchor == "end":
            origin = max(origin, origin_of(d))
    return ObservedGaps(np.array(gaps, dtype=np.int64), t_min_steps, dt, np.array(stamps))


def calibrate_threshold(multipath_trace: RssiTrace, base: float | None = None) -> CalibrationResult:
    """Threshold from a trace with no LOS crossings.

    The 99.9th percentile of the per-sample depth below baseline plus a 1 dB
    margin, rounded up to 0.5 dB; raised further if needed so that it stays
    above the deepest excursion seen.
    """
    if base is None:
        base = baseline(multipath_trace)
    depth = np.maximum(base - multipath_trace.rssi, 0.0)
    q = float(np.percentile(depth, CALIBRATION_PERCENTILE))
    deepest = float(depth.max())
    step = CALIBRATION_STEP_DB
    t_los = math.ceil((q + CALIBRATION_MARGIN_DB) / step - 1e-9) * step
    if t_los <= deepest:
        t_los = (math.floor(deepest / step) + 1) * step
    return CalibrationResult(t_los, deepest, base, q)


def looks_contaminated(result: CalibrationResult) -> bool:
    """A calibrated threshold this large suggests the trace contains crossings."""
    return result.t_los_db > IMPLAUSIBLE_THRESHOLD_DB
