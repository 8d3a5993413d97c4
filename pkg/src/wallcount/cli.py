"""Command-line front end: simulate, calibrate, synth, estimate, sweep.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import DEFAULT_M_MAX, ObservedGaps, estimate_from_family, estimate_over_time, series_to_csv
from .motion_sim import (
    DEFAULT_SMOOTHING,
    InterEventCcdf,
    MotionConfig,
    crossing_probability,
    empirical_interevent_ccdf,
    lag1_correlation,
    simulate_person,
    smooth_ccdf,
)
from .pipeline import PIPELINE_ANCHOR, PIPELINE_BASELINE, cell_seed, count_trace, sweep, sweep_to_csv
from .renewal_core import pmf_family
from .synth_rssi import SynthConfig, multipath_only, synthesize
from .trace_processing import (
    TraceError,
    baseline,
    calibrate_threshold,
    dips_to_csv,
    load_trace,
    looks_contaminated,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class DataError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_paths: list[str]
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    parameters: dict = field(default_factory=dict)


def _default_profile() -> Path:
    return Path(str(resources.files("wallcount") / "profiles" / "area1.json"))


def _load_profile(path) -> dict:
    path = Path(path) if path else _default_profile()
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from None


def _motion(profile: dict) -> MotionConfig:
    try:
        return MotionConfig.from_dict(profile)
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad motion config: {exc}") from None


def _synth(profile: dict, motion: MotionConfig) -> SynthConfig:
    data = dict(profile.get("synth", {}))
    data["motion"] = motion
    try:
        return SynthConfig.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad synth config: {exc}") from None


class _Writer:
    def __init__(self, out_dir: Path, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest
        out_dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8")
        self.manifest.outputs.append(str(path))
        return path

    def finish(self) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self.manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _config_paths(args) -> list[str]:
    return [str(Path(args.config))] if args.config else [str(_default_profile())]


# --- commands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    profile = _load_profile(args.config)
    cfg = _motion(profile)
    events = simulate_person(cfg, args.steps, args.seed)
    try:
        ccdf = empirical_interevent_ccdf(events, args.z_max)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    manifest = RunManifest("simulate", _config_paths(args), args.seed, parameters={"steps": args.steps, "z_max": ccdf.z_max})
    out = _Writer(Path(args.out_dir), manifest)
    out.write("events.csv", events.to_csv())
    out.write("ccdf.csv", ccdf.to_csv())
    meta = {
        "p_c": ccdf.p_c,
        "p_c_analytic": crossing_probability(cfg),
        "renewal_sum": ccdf.renewal_sum(),
        "n_events": len(events),
        "steps": args.steps,
        "z_max": ccdf.z_max,
        "lag1_correlation": lag1_correlation(events),
    }
    out.write("p_c.json", json.dumps(meta, indent=2) + "\n")
    out.finish()
    return EXIT_OK


def cmd_calibrate(args) -> int:
    trace = _read_trace(args.trace)
    result = calibrate_threshold(trace, baseline(trace, args.baseline, window_db=args.window_db))
    if looks_contaminated(result):
        print(
            f"warning: calibrated threshold {result.t_los_db:g} dB is implausibly large; "
            "the calibration trace may contain LOS crossings",
            file=sys.stderr,
        )
    manifest = RunManifest("calibrate", [str(args.trace)], None, parameters={"baseline": args.baseline})
    out = _Writer(Path(args.out_dir), manifest)
    out.write("calibration.json", result.to_json() + "\n")
    out.finish()
    return EXIT_OK


def cmd_synth(args) -> int:
    profile = _load_profile(args.config)
    synth = _synth(profile, _motion(profile))
    changes = {"n_people": args.n_people, "seed": args.seed}
    if args.duration_s is not None:
        changes["duration_s"] = args.duration_s
    synth = synth.replace(**changes)
    labeled = synthesize(synth)
    manifest = RunManifest("synth", _config_paths(args), args.seed, parameters=synth.to_dict())
    out = _Writer(Path(args.out_dir), manifest)
    out.write("trace.csv", labeled.trace.to_csv())
    out.write("labels.csv", labeled.labels_csv())
    if args.multipath:
        ripple = multipath_only(synth.replace(n_people=0, seed=cell_seed(args.seed, 2)))
        out.write("multipath.csv", ripple.to_csv())
    out.write("synth_config.json", json.dumps(synth.to_dict(), indent=2) + "\n")
    out.finish()
    return EXIT_OK


def _read_trace(path):
    try:
        return load_trace(Path(path))
    except FileNotFoundError:
        raise DataError(f"trace not found: {path}") from None


def _model_ccdf(args, cfg: MotionConfig) -> InterEventCcdf:
    if args.ccdf:
        if not args.p_c:
            raise DataError("--ccdf needs --p-c (the p_c.json written by simulate)")
        try:
            ccdf = InterEventCcdf.load(args.ccdf, args.p_c)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read CCDF: {exc}") from None
    else:
        ccdf = empirical_interevent_ccdf(simulate_person(cfg, args.ccdf_steps, args.seed))
    return smooth_ccdf(ccdf, args.smooth)


def cmd_estimate(args) -> int:
    profile = _load_profile(args.config)
    cfg = _motion(profile)
    t_min_s = args.t_min_s if args.t_min_s is not None else float(profile.get("t_min_s", 1.0))
    t_los = args.t_los
    if t_los is None and args.calibration:
        t_los = float(json.loads(Path(args.calibration).read_text(encoding="utf-8"))["t_los_db"])
    if t_los is None:
        t_los = float(profile.get("t_los_db", 5.0))
    ccdf = _model_ccdf(args, cfg)
    outputs: dict[str, str] = {}
    if args.trace:
        trace = _read_trace(args.trace)
        dt = cfg.dt  # gaps are counted in model steps, whatever the sample rate
        family = pmf_family(ccdf, int(round(t_min_s / dt)), args.m_max)
        try:
            counted = count_trace(trace, family, t_los, dt, t_min_s, args.baseline, args.anchor, args.checkpoint_s)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        result, series = counted.result, counted.series
        outputs["dips.csv"] = dips_to_csv(counted.dips)
        outputs["gaps.csv"] = counted.gaps.to_csv()
    else:
        dt = cfg.dt
        t_min_steps = int(round(t_min_s / dt))
        try:
            raw = ObservedGaps.from_csv(Path(args.gaps).read_text(encoding="utf-8"), 0, dt)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read gaps: {exc}") from None
        keep = raw.gaps >= max(1, t_min_steps)
        if not keep.all():
            print(f"note: dropped {int((~keep).sum())} gaps shorter than t_min", file=sys.stderr)
        ts = raw.timestamps[keep] if raw.timestamps is not None else None
        gaps = ObservedGaps(raw.gaps[keep], t_min_steps, dt, ts)
        if len(gaps) == 0:
            raise DataError("no events observed")
        family = pmf_family(ccdf, t_min_steps, args.m_max)
        result = estimate_from_family(gaps, family)
        series = estimate_over_time(gaps, None, args.m_max, args.checkpoint_s, family=family) if ts is not None else []
    params = {"t_min_s": t_min_s, "t_los_db": t_los, "m_max": args.m_max, "smooth": args.smooth, "anchor": args.anchor}
    paths = _config_paths(args) + [p for p in (args.trace, args.gaps, args.ccdf, args.p_c, args.calibration) if p]
    manifest = RunManifest("estimate", [str(p) for p in paths], args.seed, parameters=params)
    out = _Writer(Path(args.out_dir), manifest)
    out.write("estimate.json", result.to_json() + "\n")
    if series:
        out.write("estimate_vs_time.csv", series_to_csv(series))
    for name, text in outputs.items():
        out.write(name, text)
    out.finish()
    print(result.n_hat)
    return EXIT_OK


def cmd_sweep(args) -> int:
    profile = _load_profile(args.config)
    synth = _synth(profile, _motion(profile))
    if args.duration_s is not None:
        synth = synth.replace(duration_s=args.duration_s)
    kind = args.kind if not (args.kind == "threshold" and args.absolute) else "threshold_abs"
    seeds = [cell_seed(args.seed, s) for s in args.seeds]
    rows = sweep(kind, args.values, seeds, synth, counts=args.counts)
    params = {"kind": kind, "values": args.values, "seeds": args.seeds, "counts": list(args.counts)}
    manifest = RunManifest("sweep", _config_paths(args), args.seed, parameters=params)
    out = _Writer(Path(args.out_dir), manifest)
    out.write("sweep.csv", sweep_to_csv(rows))
    out.finish()
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    """``0,1,2`` or ``0-4`` (inclusive)."""
    out: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("list is empty")
    return out


def _float_range(text: str) -> list[float]:
    """``start:stop:step`` (inclusive of stop) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 10) for i in range(max(n, 0))]
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("range is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wallcount", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wallcount {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--config", help="profile JSON (default: bundled area1.json)")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out-dir", required=True)

    p = sub.add_parser("simulate", help="simulate one walker; write events, F_c and p_c")
    common(p)
    p.add_argument("--steps", type=_positive_int, default=1_000_000)
    p.add_argument("--z-max", type=_positive_int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate T_LOS from a crossing-free trace")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--baseline", choices=["median", "top_half_mean", "upper_median"], default="median")
    p.add_argument("--window-db", type=float, default=5.0, help="window for the upper_median baseline")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="write a labelled synthetic RSSI trace")
    common(p)
    p.add_argument("--n-people", type=int, required=True)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--multipath", action="store_true", help="also write a ripple-only calibration trace")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the number of people")
    common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="RSSI CSV (t_s,rssi_dbm)")
    src.add_argument("--gaps", help="gap CSV (gap_steps[,t_s])")
    p.add_argument("--ccdf", help="ccdf.csv from simulate (otherwise simulated from --config)")
    p.add_argument("--p-c", help="p_c.json from simulate")
    p.add_argument("--ccdf-steps", type=_positive_int, default=1_000_000)
    p.add_argument("--smooth", type=float, default=DEFAULT_SMOOTHING, help="relative CCDF smoothing width (0 = off)")
    p.add_argument("--t-min-s", type=float, default=None)
    p.add_argument("--t-los", type=float, default=None, help="dip threshold in dB")
    p.add_argument("--calibration", help="calibration.json from calibrate")
    p.add_argument("--m-max", type=_positive_int, default=DEFAULT_M_MAX)
    p.add_argument("--baseline", choices=["median", "top_half_mean", "upper_median"], default=PIPELINE_BASELINE)
    p.add_argument("--anchor", choices=["start", "end"], default=PIPELINE_ANCHOR)
    p.add_argument("--checkpoint-s", type=float, default=10.0)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="speed or threshold sensitivity on synthetic data")
    common(p)
    p.add_argument("--kind", choices=["speed", "threshold"], required=True)
    p.add_argument(
        "--range",
        dest="values",
        type=_float_range,
        required=True,
        help="start:stop:step or comma list; speeds in m/s, thresholds as dB offsets from calibration "
        "(write --range=-1.5:1.5:0.5 when the first value is negative)",
    )
    p.add_argument("--absolute", action="store_true", help="threshold values are absolute dB")
    p.add_argument("--seeds", type=_int_list, required=True, help="e.g. 0-4 or 0,1,2")
    p.add_argument("--counts", type=_int_list, default=[1, 3, 5, 7, 9])
    p.add_argument("--duration-s", type=float, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
