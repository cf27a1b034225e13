import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocsparity import io
from ocsparity.antenna import EfficiencyCurve, synthetic_table
from ocsparity.datasets import write_shipped_data
from ocsparity.errors import ConfigError
from ocsparity.qp import GapParams, QpTrace, xqp_from_gamma1
from ocsparity.telegraph import PowerSpectrum, simulate_telegraph
from ocsparity.transmon import TransmonParams, dispersion_curve

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(cols=st.lists(st.tuples(finite, finite), min_size=1, max_size=30))
def test_float_columns_roundtrip_exactly(tmp_path_factory, cols):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    a, b = (np.array(c, dtype=float) for c in zip(*cols))
    io.write_columns(path, ("a", "b"), a, b)
    back = io.read_csv(path, ("a", "b"))
    np.testing.assert_array_equal(back["a"], a)
    np.testing.assert_array_equal(back["b"], b)


def test_schema_roundtrips(tmp_path):
    curve = dispersion_curve(TransmonParams(9.0, 0.3), 7)
    d = io.read_dispersion_csv(io.write_dispersion_csv(tmp_path / "d.csv", curve))
    np.testing.assert_array_equal(d["f01_odd_ghz"], curve.f01_odd)

    tr = simulate_telegraph(33.3, 1e-3, 0.5, 2)
    back = io.read_trace_csv(io.write_trace_csv(tmp_path / "t.csv", tr))
    np.testing.assert_array_equal(back.values, tr.values)
    assert back.dt == pytest.approx(tr.dt, rel=1e-14)

    psd_est = PowerSpectrum(np.linspace(1, 50, 50), np.geomspace(1e-2, 1e-5, 50))
    s = io.read_spectrum_csv(io.write_spectrum_csv(tmp_path / "s.csv", psd_est))
    np.testing.assert_array_equal(s.psd, psd_est.psd)

    table = synthetic_table("xmon_like")
    t = io.read_impedance_csv(io.write_impedance_csv(tmp_path / "z.csv", table))
    np.testing.assert_array_equal(t.z_imag, table.z_imag)

    eff = EfficiencyCurve([1e11, 2e11, 3e11], [0.1, 0.25, 1.0])
    e = io.read_efficiency_csv(io.write_efficiency_csv(tmp_path / "e.csv", eff))
    np.testing.assert_array_equal(e.e_c, eff.e_c)

    qp = QpTrace(np.linspace(0, 1e-3, 5), np.geomspace(1e-6, 1e-8, 5))
    times, x, mode = io.read_qp_csv(io.write_qp_csv(tmp_path / "q.csv", qp))
    assert mode == "x_qp"
    np.testing.assert_array_equal(x, qp.x_qp)


def test_gamma1_input_is_converted(tmp_path):
    path = io.write_columns(tmp_path / "g.csv", io.QP_GAMMA_COLUMNS, [0.0, 1e-4], [1e4, 2e3])
    gap = GapParams(190.0, 4.0)
    _, x, mode = io.read_qp_csv(path, gap)
    assert mode == "delta_gamma1"
    np.testing.assert_allclose(x, xqp_from_gamma1(np.array([1e4, 2e3]), gap), rtol=1e-15)


def test_csv_errors_name_file_and_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f_hz,re_z_ohm,im_z_ohm\n1e11,1,0\n2e11,oops,0\n")
    with pytest.raises(ConfigError, match=r"bad\.csv:3: column 're_z_ohm' has non-numeric value 'oops'"):
        io.read_impedance_csv(p)
    p.write_text("f_hz,re_z_ohm\n1,2\n")
    with pytest.raises(ConfigError, match=r"bad\.csv:1: missing column"):
        io.read_impedance_csv(p)
    p.write_text("t_s,parity\n0,1\n0.001,0\n")
    with pytest.raises(ConfigError, match=r"bad\.csv:3: parity"):
        io.read_trace_csv(p)
    p.write_text("t_s,parity\n0,1\n0.001,1\n0.003,1\n")
    with pytest.raises(ConfigError, match="evenly spaced"):
        io.read_trace_csv(p)
    with pytest.raises(ConfigError, match="file not found"):
        io.read_qp_csv(tmp_path / "missing.csv")
    with pytest.raises(ConfigError, match="file not found"):
        io.read_csv(tmp_path / "missing.csv", ("a",))


def test_config_errors_are_line_precise():
    with pytest.raises(ConfigError, match=r"<config>:3:10: YAML syntax error"):
        io.parse_config("a: 1\nb: 2\nc: [1, 2]]\n")
    with pytest.raises(ConfigError, match=r"<config>:2: duplicate key 'a'"):
        io.parse_config("a: 1\na: 2\n")
    cfg = io.parse_config("dispersion:\n  ej: 8\n  ec: x\n")
    assert cfg.where("dispersion", "ec") == "<config>:3"
    assert str(cfg.error("bad", "dispersion", "ec")) == "<config>:3: dispersion.ec: bad"
    with pytest.raises(ConfigError, match="must be a mapping"):
        io.parse_config("- 1\n- 2\n")
    assert io.parse_config("").data == {}


def test_config_hash_is_canonical():
    a = io.config_hash({"b": 1, "a": [1.5, {"y": 2, "x": None}]})
    b = io.config_hash({"a": [1.5, {"x": None, "y": 2}], "b": 1})
    assert a == b
    assert a != io.config_hash({"b": 2, "a": [1.5, {"x": None, "y": 2}]})


def test_shipped_devices():
    dev = io.load_devices()
    assert sorted(dev) == ["Q1", "Q2", "Q3", "Q4", "Q5"]
    assert dev["Q3"]["delta_f_max_mhz"] == 0.40
    assert dev["Q4"]["parity_rate_hz"] == 17.5
    assert dev["Q5"]["ej_over_ec"] == 18


def test_device_file_validation(tmp_path):
    p = tmp_path / "dev.yaml"
    p.write_text("devices:\n  - {name: A, t1_us: fast}\n")
    with pytest.raises(ConfigError, match=r"dev\.yaml:2: devices\.0\.t1_us: must be a number"):
        io.load_devices(p)
    p.write_text("devices:\n  - {name: A, colour: red}\n")
    with pytest.raises(ConfigError, match="unknown key"):
        io.load_devices(p)


def test_shipped_data_regenerates_identically(tmp_path):
    written = write_shipped_data(tmp_path)
    assert len(written) == 2 + 6 + 1
    for path in written:
        rel = path.relative_to(tmp_path)
        assert filecmp.cmp(path, io.data_path(str(rel)), shallow=False), rel
