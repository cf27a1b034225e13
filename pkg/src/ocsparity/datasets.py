"""Builders for the synthetic example data shipped in ``ocsparity/data``.

Nothing here is measured data. The impedance tables come from toy resonant
antenna models and the recovery set is drawn from exponentials with
multiplicative noise. `write_shipped_data` regenerates every file
bit-identically, which the test suite checks against the shipped copies.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import io
from .antenna import synthetic_table
from .qp import GapParams, gamma1_from_xqp

# Field-dependent recovery set for one device: (B in uT, T1 in us,
# trapping rate in 1/ms, parity rate in 1/s). The 39 uT entry decays faster
# than the delay grid can follow, so its s is not resolvable by design.
RECOVERY_FIELDS = [
    (0.0, 82.0, 6.52, 144.0),
    (16.0, 61.0, 4.66, 126.0),
    (23.0, 72.0, 4.12, 126.0),
    (31.0, 5.5, 138.0, 123.0),
    (39.0, 13.0, 400.0, 117.0),
    (47.0, 11.0, 22.4, 111.0),
]
RECOVERY_X0 = 2.0e-6
RECOVERY_NOISE = 0.03
RECOVERY_FLOOR = 100.0  # excess decay rates below this (1/s) read as 0
RECOVERY_POINTS = 12
RECOVERY_SEED = 20240


def recovery_rows(s_per_ms: float, resolved_delay_s: float | None, rng: np.random.Generator, gap: GapParams):
    """Excess decay rates on a delay grid spanning four decay times.

    For an unresolvable rate pass the last delay of a neighbouring field as
    `resolved_delay_s`; the signal then sinks below the floor after a point
    or two.
    """
    s = s_per_ms * 1e3
    t_max = 4.0 / s if resolved_delay_s is None else resolved_delay_s
    tau = np.linspace(t_max / RECOVERY_POINTS, t_max, RECOVERY_POINTS)
    dg = gamma1_from_xqp(RECOVERY_X0 * np.exp(-s * tau), gap)
    dg = dg * (1.0 + RECOVERY_NOISE * rng.standard_normal(tau.size))
    dg = np.where(dg < RECOVERY_FLOOR, 0.0, dg)
    return tau, dg


def write_shipped_data(root) -> list[Path]:
    root = Path(root)
    written = []
    for name in ("xmon_like", "two_pads_like"):
        written.append(io.write_impedance_csv(root / f"zrad_{name}.csv", synthetic_table(name)))

    gap = GapParams()
    rng = np.random.default_rng(RECOVERY_SEED)
    sub = root / "recovery"
    lines = [
        "# Synthetic field-dependent recovery set; run with `ocsparity qp --config <this file>`.",
        "qp:",
        "  fields:",
    ]
    for b, t1, s_ms, rate in RECOVERY_FIELDS:
        delay = 4.0 / 22.4e3 if s_ms > 200 else None
        tau, dg = recovery_rows(s_ms, delay, rng, gap)
        fname = f"recovery_b{int(b):02d}ut.csv"
        written.append(io.write_columns(sub / fname, io.QP_GAMMA_COLUMNS, tau, dg))
        lines.append(
            f"    - {{b_ut: {b:g}, t1_us: {t1:g}, parity_rate_hz: {rate:g}, "
            f"recovery_csv: {fname}}}"
        )
    cfg = sub / "fields.yaml"
    cfg.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(cfg)
    return written


if __name__ == "__main__":  # pragma: no cover
    for p in write_shipped_data(Path(__file__).parent / "data"):
        print(p)
