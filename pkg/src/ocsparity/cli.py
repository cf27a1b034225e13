"""Command-line front end: ``ocsparity {dispersion,parity,qp,antenna}``.

Every command reads an optional YAML config, applies command-line flags on
top, writes CSV artifacts plus a report into the output directory and
prints a short summary. Exit codes: 0 success, 2 config or validation
error, 3 data or numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, antenna, io
from .errors import ConfigError, DegenerateInputError, NumericalError
from .protocol import SequenceParams, run_parity_monitor
from .qp import GapParams, Injection, LowConfidenceWarning, QpTrace, RtParams, fit_trapping_rate, integrate_rt
from .telegraph import (
    RateUnresolvedWarning,
    apply_readout_infidelity,
    estimate_psd,
    fit_parity_rate,
    simulate_telegraph,
    task_seed,
)
from .transmon import DEFAULT_CUTOFF, TransmonParams, dispersion_curve, fit_ej_ec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
ENV_OUTPUT_DIR = "OCSPARITY_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "ocsparity_out"
TOP_KEYS = {"seed", "output_dir", "format", "devices_file", "dispersion", "parity", "qp", "antenna"}

_REQUIRED = object()
TOP = "__top__"


class Section:
    """One command's config mapping with flag overrides and typed access.

    Keys read through `get` are recorded in `resolved`, which is what the
    report embeds and hashes. `finish` rejects keys that were never read.
    """

    def __init__(self, cfg: io.Config, name: str, overrides: dict):
        raw = cfg.data.get(name, {})
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise cfg.error("must be a mapping", name)
        self.cfg, self.name, self.raw = cfg, name, raw
        self.values = dict(raw)
        self.values.update({k: v for k, v in overrides.items() if v is not None})
        self.resolved: dict = {}

    def has(self, key) -> bool:
        return self.values.get(key) is not None

    def error(self, message, key=None, *more) -> ConfigError:
        head = () if self.name == TOP else (self.name,)
        keys = head if key is None else (*head, key, *more)
        return self.cfg.error(message, *keys)

    def get(self, key, kind=float, default=_REQUIRED, check=None, describe=""):
        v = self.values.get(key)
        if v is None:
            if default is _REQUIRED:
                raise self.error(f"missing key {key!r}{describe}")
            self.resolved[key] = default
            return default
        try:
            if kind is float:
                if isinstance(v, bool):
                    raise TypeError
                v = float(v)
            elif kind is int:
                if isinstance(v, bool) or float(v) != int(float(v)):
                    raise TypeError
                v = int(float(v))
            elif kind is str:
                v = str(v)
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
        except (TypeError, ValueError):
            raise self.error(f"expected {kind.__name__}, got {v!r}", key) from None
        if check is not None and not check(v):
            raise self.error(f"invalid value {v!r}", key)
        self.resolved[key] = v
        return v

    def raw_value(self, key):
        v = self.values.get(key)
        self.resolved[key] = v
        return v

    def finish(self):
        unknown = sorted(set(self.raw) - set(self.resolved))
        if unknown:
            raise self.error(f"unknown key {unknown[0]!r}", unknown[0])


class Run:
    """Shared bookkeeping for one command invocation."""

    def __init__(self, command: str, args, cfg: io.Config):
        self.command, self.args, self.cfg = command, args, cfg
        unknown = sorted(set(cfg.data) - TOP_KEYS)
        if unknown:
            raise cfg.error(f"unknown top-level key {unknown[0]!r}", unknown[0])
        top = Section(cfg, TOP, {})
        top.values = {k: v for k, v in cfg.data.items() if k in ("seed", "format", "output_dir", "devices_file")}
        for attr, key in (("seed", "seed"), ("format", "format"), ("output_dir", "output_dir")):
            if getattr(args, attr, None) is not None:
                top.values[key] = getattr(args, attr)
        self.seed = top.get("seed", int, 0, check=lambda s: s >= 0)
        self.format = top.get("format", str, "json", check=lambda f: f in ("json", "csv"))
        out = top.values.get("output_dir") or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
        self.output_dir = Path(out)
        self.devices_file = top.values.get("devices_file")
        self.inputs: list = []
        self.artifacts: list = []
        self.warnings: list = []
        if args.config is not None:
            self.add_input(args.config, Path(args.config))

    def device(self, name: str, section: Section) -> dict:
        path = self.cfg.resolve_path(self.devices_file) if self.devices_file else None
        if path is not None:
            self.add_input(self.devices_file, path)
        devices = io.load_devices(path)
        if name not in devices:
            raise section.error(f"unknown device {name!r}; known: {sorted(devices)}", "device")
        return devices[name]

    def add_input(self, label, path: Path):
        if not Path(path).exists():
            raise ConfigError(f"input file not found: {label}")
        entry = {"path": str(label), "sha256": io.file_sha256(path)}
        if entry not in self.inputs:
            self.inputs.append(entry)

    def out(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.output_dir / name

    def warn(self, message: str):
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)

    def write_report(self, section: Section, results: dict) -> Path:
        config = {"command": self.command, "seed": self.seed, "format": self.format, self.command: section.resolved}
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        stamp = (
            datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat() if epoch else None
        )
        report = {
            "command": self.command,
            "version": __version__,
            "timestamp": stamp,
            "seed": self.seed,
            "config_hash": io.config_hash(_jsonable(config)),
            "config": config,
            "inputs": self.inputs,
            "artifacts": sorted(self.artifacts),
            "results": results,
            "warnings": self.warnings,
        }
        report = _jsonable(report)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if self.format == "json":
            path = self.output_dir / "report.json"
            path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        else:
            path = self.output_dir / "report.csv"
            io.write_csv(path, ("key", "value"), _flatten(report))
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], "" if obj is None else obj


def _positive(v):
    return v > 0


# dispersion -----------------------------------------------------------------


def cmd_dispersion(args, cfg: io.Config) -> int:
    run = Run("dispersion", args, cfg)
    sec = Section(
        cfg,
        "dispersion",
        {
            "device": args.device,
            "ej": args.ej,
            "ec": args.ec,
            "f01_bar_ghz": args.f01_bar,
            "ej_over_ec": args.ratio,
            "ng_points": args.ng_points,
            "n_charge_cutoff": args.cutoff,
        },
    )
    cutoff = sec.get("n_charge_cutoff", int, DEFAULT_CUTOFF, check=lambda n: n >= 5)
    ng_points = sec.get("ng_points", int, 201, check=lambda n: n >= 3)
    reference = None
    if sec.has("device"):
        dev = run.device(sec.get("device", str), sec)
        for key in ("f01_bar_ghz", "ej_over_ec"):
            if sec.values.get(key) is None:
                sec.values[key] = dev.get(key)
        reference = dev.get("delta_f_max_mhz")
    if sec.has("ej") or sec.has("ec"):
        ej = sec.get("ej", float, check=lambda v: v >= 0)
        ec = sec.get("ec", float, check=_positive)
        params = TransmonParams(ej, ec, 0.0, cutoff)
    elif sec.has("f01_bar_ghz") or sec.has("ej_over_ec"):
        params = fit_ej_ec(
            sec.get("f01_bar_ghz", float, check=_positive),
            sec.get("ej_over_ec", float),
            cutoff,
        )
    else:
        raise sec.error("missing key 'ej' (give ej and ec, f01_bar_ghz and ej_over_ec, or a device)")
    sec.finish()

    curve = dispersion_curve(params, ng_points)
    io.write_dispersion_csv(run.out("dispersion.csv"), curve)
    results = {
        "ej_ghz": params.ej,
        "ec_ghz": params.ec,
        "ej_over_ec": params.ej / params.ec,
        "n_charge_cutoff": cutoff,
        "f01_bar_ghz": curve.f01_bar,
        "delta_f_max_mhz": curve.delta_f_max,
    }
    if reference is not None:
        results["reference_delta_f_max_mhz"] = reference
    run.write_report(sec, results)
    print(f"E_J = {params.ej:.6f} GHz, E_c = {params.ec:.6f} GHz (E_J/E_c = {params.ej / params.ec:.4g})")
    print(f"f01_bar = {curve.f01_bar:.6f} GHz, delta_f_max = {curve.delta_f_max:.6f} MHz")
    if reference is not None:
        print(f"listed delta_f_max = {reference} MHz")
    print(f"wrote {run.output_dir}")
    return EXIT_OK


# parity pipeline ---------------------------------------------------------------


def _simulate_and_fit(job):
    """One Monte-Carlo task; module-level so process pools can pickle it."""
    kind, params, sub_seed, segment_length, overlap = job
    if kind == "protocol":
        rate, seq_kwargs, dt, duration = params
        trace = run_parity_monitor(rate, SequenceParams(**seq_kwargs), dt, duration, sub_seed)
    else:
        rate, dt, duration, fidelity = params
        trace = simulate_telegraph(rate, dt, duration, sub_seed)
        if fidelity < 1:
            trace = apply_readout_infidelity(trace, fidelity, task_seed(sub_seed, 1))
    spectrum = estimate_psd(trace, segment_length, overlap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateUnresolvedWarning)
        fit = fit_parity_rate(spectrum)
    return trace, spectrum, fit


def cmd_parity(args, cfg: io.Config) -> int:
    run = Run("parity", args, cfg)
    sec = Section(
        cfg,
        "parity",
        {
            "device": args.device,
            "mode": args.mode,
            "rate_hz": args.rate,
            "sample_dt_ms": None if args.dt is None else args.dt * 1e3,
            "duration_s": args.duration,
            "fidelity": args.fidelity,
            "batch": args.batch,
            "segment_length": args.segment_length,
            "trace_csv": args.trace,
            "delta_f_hz": args.delta_f,
            "t1_us": args.t1_us,
            "drive_detuning_hz": args.drive_detuning,
        },
    )
    if sec.has("device"):
        dev = run.device(sec.get("device", str), sec)
        for key, value in (
            ("rate_hz", dev.get("parity_rate_hz")),
            ("delta_f_hz", None if dev.get("delta_f_max_mhz") is None else dev["delta_f_max_mhz"] * 1e6),
            ("t1_us", dev.get("t1_us")),
        ):
            if sec.values.get(key) is None:
                sec.values[key] = value
    segment_length = sec.get("segment_length", int, None, check=_positive)
    overlap = sec.get("overlap", float, 0.5, check=lambda v: 0 <= v < 1)

    if sec.has("trace_csv"):
        label = sec.get("trace_csv", str)
        path = cfg.resolve_path(label)
        run.add_input(label, path)
        sec.finish()
        trace = io.read_trace_csv(path)
        spectrum = estimate_psd(trace, segment_length, overlap)
        fits = [(None, trace, spectrum, _fit_warn(spectrum))]
        batch = 1
    else:
        mode = sec.get("mode", str, "telegraph", check=lambda m: m in ("telegraph", "protocol"))
        rate = sec.get("rate_hz", float, check=lambda v: v >= 0)
        dt = sec.get("sample_dt_ms", float, 1.0, check=_positive) * 1e-3
        duration = sec.get("duration_s", float, 0.5, check=_positive)
        fidelity = sec.get("fidelity", float, 1.0, check=lambda f: 0.5 < f <= 1)
        batch = sec.get("batch", int, 1, check=lambda n: n >= 1)
        if mode == "protocol":
            t1 = sec.get("t1_us", float, None, check=_positive)
            seq = dict(
                delta_f=sec.get("delta_f_hz", float, check=_positive),
                drive_detuning=sec.get("drive_detuning_hz", float, 0.0),
                fidelity=fidelity,
                t1=np.inf if t1 is None else t1 * 1e-6,
            )
            SequenceParams(**seq)
            params = (rate, seq, dt, duration)
        else:
            for key in ("delta_f_hz", "t1_us", "drive_detuning_hz"):
                if key in sec.raw:
                    raise sec.error("only used with mode: protocol", key)
            params = (rate, dt, duration, fidelity)
        sec.finish()
        seeds = [run.seed] if batch == 1 else [task_seed(run.seed, i) for i in range(batch)]
        jobs = [(mode, params, s, segment_length, overlap) for s in seeds]
        workers = max(1, int(args.jobs or 1))
        if workers > 1 and batch > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_simulate_and_fit, jobs, chunksize=max(1, batch // (4 * workers))))
        else:
            outcomes = [_simulate_and_fit(j) for j in jobs]
        # map preserves task order, so records stay keyed by sub-seed index
        fits = [(s, *o) for s, o in zip(seeds, outcomes)]

    records = []
    for i, (sub_seed, trace, spectrum, fit) in enumerate(fits):
        rec = {"index": i, "seed": sub_seed, **fit.to_dict()}
        records.append(rec)
    n_unresolved = sum(r["rate_unresolved"] for r in records)
    if n_unresolved:
        run.warn(
            f"{n_unresolved} of {len(records)} fit(s) flagged rate-unresolved: the fitted rate is "
            "too fast for the sampling interval"
        )

    if batch == 1:
        _, trace, spectrum, fit = fits[0]
        io.write_trace_csv(run.out("trace.csv"), trace)
        io.write_spectrum_csv(run.out("spectrum.csv"), spectrum)
        results = {"fit": records[0]}
        if trace.true_rate is not None:
            results["true_rate_hz"] = trace.true_rate
        print(_fit_line(fit))
    else:
        rates = np.array([r["rate_hz"] for r in records])
        q25, med, q75 = np.percentile(rates, [25, 50, 75])
        io.write_csv(
            run.out("batch.csv"),
            ("index", "seed", "rate_hz", "a", "c", "rate_unresolved"),
            ((r["index"], r["seed"], r["rate_hz"], r["a"], r["c"], r["rate_unresolved"]) for r in records),
        )
        results = {
            "n": batch,
            "true_rate_hz": params[0],
            "median_rate_hz": float(med),
            "q25_rate_hz": float(q25),
            "q75_rate_hz": float(q75),
            "iqr_rate_hz": float(q75 - q25),
            "median_c": float(np.median([r["c"] for r in records])),
            "n_unresolved": int(n_unresolved),
        }
        print(
            f"{batch} traces: median rate = {med:.4f} 1/s (IQR {q25:.4f} - {q75:.4f}), "
            f"generating rate {params[0]} 1/s"
        )
    results["rate_unresolved"] = bool(n_unresolved)
    run.write_report(sec, results)
    print(f"wrote {run.output_dir}")
    return EXIT_OK


def _fit_warn(spectrum):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateUnresolvedWarning)
        return fit_parity_rate(spectrum)


def _fit_line(fit) -> str:
    sa, sr, sc = fit.stderr
    flag = " [rate unresolved]" if fit.rate_unresolved else ""
    return (
        f"rate = {fit.rate:.4f} +/- {sr:.4f} 1/s, A = {fit.a:.4g} +/- {sa:.2g}, "
        f"C = {fit.c:.4g} +/- {sc:.2g} 1/Hz{flag}"
    )


# quasiparticle recovery -----------------------------------------------------------


def _usable(tau, x):
    keep = np.isfinite(x) & (x > 0)
    return tau[keep], x[keep], int(np.count_nonzero(~keep))


def _fit_quiet(trace):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowConfidenceWarning)
        return fit_trapping_rate(trace)


def cmd_qp(args, cfg: io.Config) -> int:
    run = Run("qp", args, cfg)
    sec = Section(
        cfg,
        "qp",
        {
            "s_per_ms": args.s_per_ms,
            "r_per_s": args.r,
            "x0": args.x0,
            "recovery_csv": args.recovery,
            "t_max_s": args.t_max,
            "points": args.points,
            "delta_uev": args.delta_uev,
            "f_q_ghz": args.f_q,
        },
    )
    gap = GapParams(sec.get("delta_uev", float, 200.0), sec.get("f_q_ghz", float, 4.15))
    row_meta = {k: sec.get(k, float, None) for k in ("b_ut", "t1_us", "parity_rate_hz")}

    if sec.has("fields"):
        entries = sec.raw_value("fields")
        if not isinstance(entries, list) or not entries:
            raise sec.error("must be a nonempty list", "fields")
        sec.finish()
        rows, details = [], []
        for i, entry in enumerate(entries):
            rows_i, detail = _field_row(run, sec, i, entry, gap)
            rows.append(rows_i)
            details.append(detail)
        io.write_field_table_csv(run.out("field_table.csv"), rows)
        results = {"rows": details}
        print(f"{'B (uT)':>8} {'T1 (us)':>8} {'s (1/ms)':>12} {'rate (1/s)':>11}")
        for row in rows:
            s_txt = f"{row['s_per_ms']:.4g}" if row["s_per_ms"] is not None else row["s_status"]
            print(
                f"{_num(row['b_ut']):>8} {_num(row['t1_us']):>8} {s_txt:>12} {_num(row['parity_rate_hz']):>11}"
            )
        run.write_report(sec, results)
        print(f"wrote {run.output_dir}")
        return EXIT_OK

    if sec.has("recovery_csv"):
        label = sec.get("recovery_csv", str)
        path = cfg.resolve_path(label)
        run.add_input(label, path)
        sec.finish()
        tau, x, mode = io.read_qp_csv(path, gap)
        tau, x, dropped = _usable(tau, x)
        if dropped:
            run.warn(f"dropped {dropped} point(s) at or below background")
        if tau.size < 4:
            raise DegenerateInputError(f"{label}: only {tau.size} usable point(s); need at least 4")
        trace = QpTrace(tau, x)
        source = {"input_mode": mode}
    else:
        s = sec.get("s_per_ms", float, check=_positive) * 1e3
        r = sec.get("r_per_s", float, 0.0, check=lambda v: v >= 0)
        g = sec.get("g_background_per_s", float, 0.0, check=lambda v: v >= 0)
        x0 = sec.get("x0", float, 1e-6, check=_positive)
        shape = sec.get("injection", str, "jump")
        params = RtParams(
            r,
            s,
            g,
            Injection(
                x0,
                sec.get("t_start_s", float, 0.0),
                sec.get("t_stop_s", float, None),
                shape,
            ),
        )
        t0 = params.injection.t_stop if shape == "rect" else params.injection.t_start
        t_max = sec.get("t_max_s", float, t0 + 5.0 / s, check=lambda v: v > t0)
        points = sec.get("points", int, 50, check=lambda n: n >= 4)
        sec.finish()
        sim = integrate_rt(params, np.linspace(t0, t_max, points))
        tau, x, _ = _usable(sim.times, sim.excess)
        trace = QpTrace(tau, x)
        source = {"input_mode": "simulation", "x_steady": sim.x_steady}

    fit = _fit_quiet(trace)
    if fit.low_confidence:
        run.warn("recovery spans less than one decade; trapping rate is low confidence")
    io.write_qp_csv(run.out("qp_trace.csv"), trace)
    row = {
        **row_meta,
        "s_per_ms": None if fit.low_confidence else fit.s_per_ms,
        "s_status": "low_confidence" if fit.low_confidence else "ok",
    }
    io.write_field_table_csv(run.out("field_table.csv"), [row])
    results = {**source, "fit": fit.to_dict(), "field_table_row": row}
    run.write_report(sec, results)
    print(f"s = {fit.s_per_ms:.6g} +/- {fit.s_stderr * 1e-3:.2g} 1/ms, x0 = {fit.x0:.4g} ({fit.n_points} points)")
    print(f"wrote {run.output_dir}")
    return EXIT_OK


def _num(v):
    return "" if v is None else f"{v:g}"


def _field_row(run: Run, sec: Section, i: int, entry, gap: GapParams):
    if not isinstance(entry, dict):
        raise sec.error("each field entry must be a mapping", "fields", i)
    allowed = {"b_ut", "t1_us", "parity_rate_hz", "recovery_csv", "s_per_ms"}
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise sec.error(f"unknown key {unknown[0]!r}", "fields", i, unknown[0])
    meta = {}
    for key in ("b_ut", "t1_us", "parity_rate_hz"):
        v = entry.get(key)
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise sec.error(f"expected float, got {v!r}", "fields", i, key)
        meta[key] = None if v is None else float(v)
    detail = dict(meta)
    if entry.get("recovery_csv") is not None:
        label = str(entry["recovery_csv"])
        path = run.cfg.resolve_path(label)
        run.add_input(label, path)
        tau, x, mode = io.read_qp_csv(path, gap)
        tau, x, dropped = _usable(tau, x)
        detail.update(recovery_csv=label, input_mode=mode, n_dropped=dropped)
        try:
            fit = _fit_quiet(QpTrace(tau, x))
        except DegenerateInputError as exc:
            detail.update(s_status="unresolved", reason=str(exc))
            s, status = None, "unresolved"
        else:
            status = "low_confidence" if fit.low_confidence else "ok"
            s = None if fit.low_confidence else fit.s_per_ms
            detail.update(s_status=status, fit=fit.to_dict())
    elif entry.get("s_per_ms") is not None:
        s, status = float(entry["s_per_ms"]), "given"
        detail.update(s_status=status)
    else:
        s, status = None, "unresolved"
        detail.update(s_status=status, reason="no recovery data")
    detail["s_per_ms"] = s
    return {**meta, "s_per_ms": s, "s_status": status}, detail


# antenna ----------------------------------------------------------------------------


def _parse_band(text):
    try:
        lo, hi = (float(p) for p in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"band must look like F_MIN:F_MAX in Hz, got {text!r}") from None
    return lo, hi


def cmd_antenna(args, cfg: io.Config) -> int:
    run = Run("antenna", args, cfg)
    overrides = {
        "t_star_k": args.t_star,
        "e_c_const": args.e_c_const,
        "r_n_ohm": args.r_n,
        "c_j_f": args.c_j,
        "efficiency_scale": args.efficiency_scale,
        "delta_uev": args.delta_uev,
    }
    if args.band is not None:
        overrides["f_min_hz"], overrides["f_max_hz"] = _parse_band(args.band)
    if args.impedance or args.synthetic:
        targets = list(args.target_rate or [])
        tables = [{"impedance_csv": p} for p in args.impedance or []]
        tables += [{"synthetic": n} for n in args.synthetic or []]
        for t, rate in zip(tables, targets):
            t["target_rate_hz"] = rate
        overrides["tables"] = tables
    sec = Section(cfg, "antenna", overrides)

    scale = sec.get("efficiency_scale", float, 1.0, check=lambda v: 0 < v <= 1)
    if sec.has("f_min_hz"):
        f_min = sec.get("f_min_hz", float, check=lambda v: v >= 0)
    else:
        f_min = antenna.pair_breaking_frequency(sec.get("delta_uev", float, 200.0, check=_positive))
    f_max = sec.get("f_max_hz", float, 400e9, check=lambda v: v > f_min)
    grid = sec.raw_value("t_grid") or {}
    if not isinstance(grid, dict) or set(grid) - {"t_min_k", "t_max_k", "points"}:
        raise sec.error("t_grid takes t_min_k, t_max_k and points", "t_grid")
    temps = np.linspace(float(grid.get("t_min_k", 0.2)), float(grid.get("t_max_k", 0.5)), int(grid.get("points", 31)))
    if temps[0] <= 0 or temps.size < 2 or np.any(np.diff(temps) <= 0):
        raise sec.error("t_grid needs 0 < t_min_k < t_max_k and at least 2 points", "t_grid")
    t_star = sec.get("t_star_k", float, None, check=_positive)

    curves = []
    if sec.has("e_c_const"):
        value = sec.get("e_c_const", float, check=lambda v: 0 <= v <= 1)
        curves.append((antenna.EfficiencyCurve.constant(value, f_min, f_max, "constant"), None))
    entries = sec.raw_value("tables")
    if entries:
        if not isinstance(entries, list):
            raise sec.error("must be a list", "tables")
        rcsj = antenna.RcsjParams(
            sec.get("r_n_ohm", float, antenna.SYNTHETIC_RCSJ.r_n),
            sec.get("c_j_f", float, antenna.SYNTHETIC_RCSJ.c_j),
        )
        for i, entry in enumerate(entries):
            curves.append(_antenna_curve(run, sec, i, entry, rcsj))
    if not curves:
        raise sec.error("missing key 'tables' (or give e_c_const)")
    sec.finish()

    results = {"band_hz": [f_min, f_max], "efficiency_scale": scale, "devices": []}
    names = _unique_names([c.label for c, _ in curves])
    for (curve, target), name in zip(curves, names):
        curve.check_covers(f_min, f_max)
        rates = antenna.rate_vs_temperature(curve, temps, f_min, f_max, scale)
        io.write_efficiency_csv(run.out(f"efficiency_{name}.csv"), curve)
        io.write_rate_csv(run.out(f"rate_vs_t_{name}.csv"), temps, rates)
        rec = {
            "name": name,
            "label": curve.label,
            "band_integrated_e_c_hz": antenna.band_integrated_efficiency(curve, f_min, f_max),
        }
        line = f"{name}: integral e_c df = {rec['band_integrated_e_c_hz']:.6g} Hz"
        if t_star is not None:
            rec["rate_at_t_star_hz"] = antenna.parity_rate_from_blackbody(
                curve, antenna.BlackbodySource(t_star, f_min, f_max), scale
            )
            line += f", rate({t_star * 1e3:.4f} mK) = {rec['rate_at_t_star_hz']:.10g} 1/s"
        if target is not None:
            rec["target_rate_hz"] = target
            rec["t_star_k"] = antenna.invert_t_star(target, curve, f_min, f_max, scale)
            line += f", T* = {rec['t_star_k'] * 1e3:.4f} mK for {target:g} 1/s"
        results["devices"].append(rec)
        print(line)
    with_t = [d for d in results["devices"] if "t_star_k" in d]
    if len(with_t) >= 2:
        results["delta_t_star_mk"] = [
            {"a": a["name"], "b": b["name"], "value": (b["t_star_k"] - a["t_star_k"]) * 1e3}
            for k, a in enumerate(with_t)
            for b in with_t[k + 1 :]
        ]
        for d in results["delta_t_star_mk"]:
            print(f"T*({d['b']}) - T*({d['a']}) = {d['value']:.4f} mK")
    run.write_report(sec, results)
    print(f"wrote {run.output_dir}")
    return EXIT_OK


def _antenna_curve(run: Run, sec: Section, i: int, entry, rcsj):
    if not isinstance(entry, dict):
        raise sec.error("each table entry must be a mapping", "tables", i)
    allowed = {"name", "impedance_csv", "efficiency_csv", "synthetic", "target_rate_hz"}
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise sec.error(f"unknown key {unknown[0]!r}", "tables", i, unknown[0])
    sources = [k for k in ("impedance_csv", "efficiency_csv", "synthetic") if entry.get(k) is not None]
    if len(sources) != 1:
        raise sec.error("give exactly one of impedance_csv, efficiency_csv, synthetic", "tables", i)
    kind, value = sources[0], str(entry[sources[0]])
    name = entry.get("name")
    if kind == "synthetic":
        label = str(name or value)
        curve = antenna.efficiency_curve(antenna.synthetic_table(value), rcsj)
    else:
        path = run.cfg.resolve_path(value)
        run.add_input(value, path)
        label = str(name or Path(value).stem)
        if kind == "impedance_csv":
            curve = antenna.efficiency_curve(io.read_impedance_csv(path, label), rcsj)
        else:
            curve = io.read_efficiency_csv(path, label)
    curve = antenna.EfficiencyCurve(curve.freqs, curve.e_c, label)
    target = entry.get("target_rate_hz")
    if target is not None:
        if isinstance(target, bool) or not isinstance(target, (int, float)) or not target > 0:
            raise sec.error(f"must be a positive number, got {target!r}", "tables", i, "target_rate_hz")
        target = float(target)
    return curve, target


def _unique_names(labels):
    out, seen = [], {}
    for lab in labels:
        base = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in lab) or "table"
        n = seen.get(base, 0)
        seen[base] = n + 1
        out.append(base if n == 0 else f"{base}_{n + 1}")
    return out


# entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="YAML config file")
    common.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    common.add_argument(
        "--output-dir", "-o", help=f"artifact directory (default ${ENV_OUTPUT_DIR} or ./{DEFAULT_OUTPUT_DIR})"
    )
    common.add_argument("--format", choices=("json", "csv"), help="report format (default json)")

    parser = argparse.ArgumentParser(prog="ocsparity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dispersion", parents=[common], help="charge dispersion of both parity branches")
    p.add_argument("--device", help="device name from the devices table")
    p.add_argument("--ej", type=float, help="Josephson energy (GHz)")
    p.add_argument("--ec", type=float, help="charging energy (GHz)")
    p.add_argument("--f01-bar", type=float, help="mean transition frequency (GHz)")
    p.add_argument("--ratio", type=float, help="E_J/E_c")
    p.add_argument("--ng-points", type=int, help="offset-charge grid size (default 201)")
    p.add_argument("--cutoff", type=int, help="charge-basis cutoff (default 30)")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("parity", parents=[common], help="simulate or ingest a parity trace and fit its rate")
    p.add_argument("--device", help="take rate, delta_f and T1 from a listed device")
    p.add_argument("--mode", choices=("telegraph", "protocol"), help="simulation model (default telegraph)")
    p.add_argument("--rate", type=float, help="generating parity rate (1/s)")
    p.add_argument("--dt", type=float, help="sampling interval (s, default 1e-3)")
    p.add_argument("--duration", type=float, help="trace length (s, default 0.5)")
    p.add_argument("--fidelity", type=float, help="single-shot readout fidelity (default 1)")
    p.add_argument("--batch", type=int, help="number of Monte-Carlo traces (default 1)")
    p.add_argument("--jobs", type=int, help="worker processes for batch runs (default 1)")
    p.add_argument("--segment-length", type=int, help="Welch segment length in samples")
    p.add_argument("--trace", help="ingest a t_s,parity CSV instead of simulating")
    p.add_argument("--delta-f", type=float, help="parity half-splitting (Hz, protocol mode)")
    p.add_argument("--t1-us", type=float, help="qubit T1 (us, protocol mode)")
    p.add_argument("--drive-detuning", type=float, help="drive minus odd-branch frequency (Hz)")
    p.set_defaults(func=cmd_parity)

    p = sub.add_parser("qp", parents=[common], help="quasiparticle recovery simulation and trapping-rate fit")
    p.add_argument("--s-per-ms", type=float, help="trapping rate to simulate (1/ms)")
    p.add_argument("--r", type=float, help="recombination coefficient (1/s)")
    p.add_argument("--x0", type=float, help="injected normalized density")
    p.add_argument("--t-max", type=float, help="last delay of the simulated grid (s)")
    p.add_argument("--points", type=int, help="simulated grid size (default 50)")
    p.add_argument("--recovery", help="ingest a recovery CSV (x_qp or delta_gamma1_per_s)")
    p.add_argument("--delta-uev", type=float, help="junction gap (ueV, default 200)")
    p.add_argument("--f-q", type=float, help="qubit frequency (GHz, default 4.15)")
    p.set_defaults(func=cmd_qp)

    p = sub.add_parser("antenna", parents=[common], help="coupling efficiency, blackbody rate and T* inversion")
    p.add_argument("--impedance", action="append", help="impedance CSV (repeatable)")
    p.add_argument("--synthetic", action="append", help="shipped synthetic table name (repeatable)")
    p.add_argument("--target-rate", action="append", type=float, help="rate to invert for T*, paired in order")
    p.add_argument("--e-c-const", type=float, help="use a flat efficiency over the band")
    p.add_argument("--band", help="integration band F_MIN:F_MAX in Hz")
    p.add_argument("--t-star", type=float, help="evaluate the rate at this temperature (K)")
    p.add_argument("--r-n", type=float, help="junction normal resistance (ohm)")
    p.add_argument("--c-j", type=float, help="junction capacitance (F)")
    p.add_argument("--delta-uev", type=float, help="gap setting f_min = 2 delta / h (ueV)")
    p.add_argument("--efficiency-scale", type=float, help="parity flips per absorbed photon")
    p.set_defaults(func=cmd_antenna)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = io.load_config(args.config) if args.config else io.Config({})
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
