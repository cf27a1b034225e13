"""CSV and config-file input/output.

CSV files carry one header row, use ``.`` as the decimal separator and
write floats with ``repr`` so every value reads back bit-identically.
Config files are YAML; errors point at the offending line.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .antenna import EfficiencyCurve, ImpedanceTable
from .errors import ConfigError
from .qp import GapParams, QpTrace, xqp_from_gamma1
from .telegraph import PowerSpectrum, TelegraphTrace
from .transmon import DispersionCurve

DISPERSION_COLUMNS = ("ng", "f01_even_ghz", "f01_odd_ghz")
TRACE_COLUMNS = ("t_s", "parity")
SPECTRUM_COLUMNS = ("f_hz", "s_pp_per_hz")
QP_COLUMNS = ("tau_qp_s", "x_qp")
QP_GAMMA_COLUMNS = ("tau_qp_s", "delta_gamma1_per_s")
IMPEDANCE_COLUMNS = ("f_hz", "re_z_ohm", "im_z_ohm")
EFFICIENCY_COLUMNS = ("f_hz", "e_c")
RATE_COLUMNS = ("t_star_k", "rate_hz")
FIELD_TABLE_COLUMNS = ("b_ut", "t1_us", "s_per_ms", "parity_rate_hz", "s_status")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Write `rows` (an iterable of sequences) under `header`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_columns(path, header, *columns) -> Path:
    return write_csv(path, header, zip(*columns))


def read_csv(path, required, *, optional=()) -> dict:
    """Read a headered numeric CSV into float arrays keyed by column name.

    Every `required` column must be present; blank cells in `optional`
    columns become NaN. Errors name the file, line and column.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ConfigError(f"{path}:1: missing column(s) {missing}; header is {header}")
        wanted = [c for c in (*required, *optional) if c in header]
        idx = {c: header.index(c) for c in wanted}
        data = {c: [] for c in wanted}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            for c in wanted:
                cell = row[idx[c]].strip()
                if cell == "" and c in optional:
                    data[c].append(np.nan)
                    continue
                try:
                    data[c].append(float(cell))
                except ValueError:
                    raise ConfigError(
                        f"{path}:{line_no}: column {c!r} has non-numeric value {cell!r}"
                    ) from None
    return {c: np.array(v, dtype=float) for c, v in data.items()}


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# dispersion ---------------------------------------------------------------


def write_dispersion_csv(path, curve: DispersionCurve) -> Path:
    return write_columns(path, DISPERSION_COLUMNS, curve.ng_grid, curve.f01_even, curve.f01_odd)


def read_dispersion_csv(path) -> dict:
    return read_csv(path, DISPERSION_COLUMNS)


# traces and spectra --------------------------------------------------------


def write_trace_csv(path, trace: TelegraphTrace) -> Path:
    return write_columns(path, TRACE_COLUMNS, trace.times, trace.values.astype(int))


def read_trace_csv(path) -> TelegraphTrace:
    """Parity trace from ``t_s, parity`` columns; samples must be evenly spaced."""
    d = read_csv(path, TRACE_COLUMNS)
    t, v = d["t_s"], d["parity"]
    if t.size < 2:
        raise ConfigError(f"{path}: a trace needs at least 2 samples")
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ConfigError(f"{path}: t_s must be evenly spaced and increasing")
    bad = ~np.isin(v, (1.0, -1.0))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConfigError(f"{path}:{k + 2}: parity must be +1 or -1, got {v[k]!r}")
    return TelegraphTrace(dt=float(dt), values=v.astype(np.int8))


def write_spectrum_csv(path, spectrum: PowerSpectrum) -> Path:
    return write_columns(path, SPECTRUM_COLUMNS, spectrum.freqs, spectrum.psd)


def read_spectrum_csv(path, n_averages: int = 1) -> PowerSpectrum:
    d = read_csv(path, SPECTRUM_COLUMNS)
    try:
        return PowerSpectrum(d["f_hz"], d["s_pp_per_hz"], n_averages=n_averages)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# quasiparticle recovery ------------------------------------------------------


def write_qp_csv(path, trace: QpTrace) -> Path:
    return write_columns(path, QP_COLUMNS, trace.times, trace.x_qp)


def read_qp_csv(path, gap: GapParams | None = None) -> tuple[np.ndarray, np.ndarray, str]:
    """Recovery data as ``(tau_qp_s, x_qp, input_mode)``.

    Accepts either ``tau_qp_s, x_qp`` or ``tau_qp_s, delta_gamma1_per_s``; the
    latter is converted with `xqp_from_gamma1` using `gap` (defaults apply).
    Values are returned unfiltered, so non-positive entries may remain.
    """
    try:
        with Path(path).open(encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    if "x_qp" in header:
        d = read_csv(path, QP_COLUMNS)
        return d["tau_qp_s"], d["x_qp"], "x_qp"
    if "delta_gamma1_per_s" in header:
        d = read_csv(path, QP_GAMMA_COLUMNS)
        g = d["delta_gamma1_per_s"]
        # negative excess rates sit below background; keep them as non-positive density
        x = np.sign(g) * xqp_from_gamma1(np.abs(g), gap or GapParams())
        return d["tau_qp_s"], x, "delta_gamma1"
    raise ConfigError(
        f"{path}:1: expected columns {QP_COLUMNS} or {QP_GAMMA_COLUMNS}, got {header}"
    )


def write_field_table_csv(path, rows) -> Path:
    return write_csv(path, FIELD_TABLE_COLUMNS, ([r.get(c) for c in FIELD_TABLE_COLUMNS] for r in rows))


# antenna --------------------------------------------------------------------


def write_impedance_csv(path, table: ImpedanceTable) -> Path:
    return write_columns(path, IMPEDANCE_COLUMNS, table.freqs, table.z_real, table.z_imag)


def read_impedance_csv(path, label: str | None = None) -> ImpedanceTable:
    d = read_csv(path, IMPEDANCE_COLUMNS)
    try:
        return ImpedanceTable(d["f_hz"], d["re_z_ohm"], d["im_z_ohm"], label or Path(path).stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_efficiency_csv(path, curve: EfficiencyCurve) -> Path:
    return write_columns(path, EFFICIENCY_COLUMNS, curve.freqs, curve.e_c)


def read_efficiency_csv(path, label: str | None = None) -> EfficiencyCurve:
    d = read_csv(path, EFFICIENCY_COLUMNS)
    try:
        return EfficiencyCurve(d["f_hz"], d["e_c"], label or Path(path).stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_rate_csv(path, temps, rates) -> Path:
    return write_columns(path, RATE_COLUMNS, temps, rates)


def read_rate_csv(path) -> dict:
    return read_csv(path, RATE_COLUMNS)


# shipped data ---------------------------------------------------------------


def data_path(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    p = Path(str(resources.files("ocsparity") / "data" / name))
    if not p.exists():
        raise ConfigError(f"no shipped data file {name!r}")
    return p


# config files ---------------------------------------------------------------


@dataclass
class Config:
    """Parsed config: plain values plus the source line of every key."""

    data: dict
    path: Path | None = None
    lines: dict = field(default_factory=dict)

    def where(self, *keys) -> str:
        """``file:line`` prefix for the deepest recorded key along `keys`."""
        name = str(self.path) if self.path else "<config>"
        for n in range(len(keys), -1, -1):
            if keys[:n] in self.lines:
                return f"{name}:{self.lines[keys[:n]]}"
        return name

    def error(self, message: str, *keys) -> ConfigError:
        dotted = ".".join(str(k) for k in keys)
        return ConfigError(f"{self.where(*keys)}: {dotted + ': ' if dotted else ''}{message}")

    def resolve_path(self, value) -> Path:
        """Interpret a path in the config relative to the config file."""
        p = Path(value)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p


def _walk(node, path, lines, where, loader):
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = k_node.value
            if not isinstance(k_node, yaml.ScalarNode):
                raise ConfigError(f"{where}:{k_node.start_mark.line + 1}: keys must be plain scalars")
            if key in out:
                raise ConfigError(f"{where}:{k_node.start_mark.line + 1}: duplicate key {key!r}")
            lines[path + (key,)] = k_node.start_mark.line + 1
            out[key] = _walk(v_node, path + (key,), lines, where, loader)
        return out
    if isinstance(node, yaml.SequenceNode):
        items = []
        for i, item in enumerate(node.value):
            lines[path + (i,)] = item.start_mark.line + 1
            items.append(_walk(item, path + (i,), lines, where, loader))
        return items
    return loader.construct_object(node, deep=True)


def parse_config(text: str, path=None) -> Config:
    where = str(path) if path else "<config>"
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = f":{mark.line + 1}:{mark.column + 1}" if mark else ""
        raise ConfigError(f"{where}{line}: YAML syntax error: {exc.problem or exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: YAML error: {exc}") from None
    if root is None:
        return Config({}, Path(path) if path else None, {})
    lines: dict = {(): root.start_mark.line + 1}
    try:
        data = _walk(root, (), lines, where, yaml.SafeLoader(""))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: YAML error: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}:1: top level of a config file must be a mapping")
    return Config(data, Path(path) if path else None, lines)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    return parse_config(text, path)


def canonical_json(obj) -> str:
    """Deterministic JSON text (sorted keys, no whitespace variance)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


DEVICE_KEYS = (
    "name",
    "geometry",
    "material",
    "ej_over_ec",
    "f01_bar_ghz",
    "delta_f_max_mhz",
    "t1_us",
    "parity_rate_hz",
)


def load_devices(path=None) -> dict:
    """Device rows keyed by name from a YAML file with a ``devices`` list.

    Defaults to the shipped table of measured device parameters.
    """
    cfg = load_config(path if path is not None else data_path("devices.yaml"))
    rows = cfg.data.get("devices")
    if not isinstance(rows, list):
        raise cfg.error("expected a 'devices' list")
    out = {}
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise cfg.error("each device must be a mapping", "devices", i)
        unknown = sorted(set(row) - set(DEVICE_KEYS))
        if unknown:
            raise cfg.error(f"unknown key(s) {unknown}", "devices", i)
        if "name" not in row:
            raise cfg.error("missing key 'name'", "devices", i)
        for key in DEVICE_KEYS[3:]:
            v = row.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise cfg.error(f"must be a number, got {v!r}", "devices", i, key)
        out[str(row["name"])] = dict(row)
    return out
