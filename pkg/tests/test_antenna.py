import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants

from ocsparity import io
from ocsparity.antenna import (
    SYNTHETIC_RCSJ,
    BlackbodySource,
    EfficiencyCurve,
    ImpedanceTable,
    RcsjParams,
    band_integrated_efficiency,
    bose_occupation,
    coupling_efficiency,
    efficiency_curve,
    invert_t_star,
    junction_impedance,
    pair_breaking_frequency,
    parity_rate_from_blackbody,
    rate_vs_temperature,
    synthetic_table,
)
from ocsparity.errors import BracketError, ConfigError, CoverageError, SingularInputError

F_MIN = pair_breaking_frequency(200.0)
TABLES = ("xmon_like", "two_pads_like")

# 10^6-point midpoint sums of e_c(f) / (exp(hf/kT) - 1), computed once and frozen
RIEMANN_FLAT_100_200_350MK = 8087.153263696521
RIEMANN_342MK = {"xmon_like": 33.17147572772266, "two_pads_like": 10.210341312297125}


def midpoint(curve, a, b, t, n=10**6):
    f = a + (np.arange(n) + 0.5) * (b - a) / n
    return np.sum(curve(f) / np.expm1(constants.h * f / (constants.k * t))) * (b - a) / n


def shipped_curve(name):
    table = io.read_impedance_csv(io.data_path(f"zrad_{name}.csv"))
    return efficiency_curve(table, SYNTHETIC_RCSJ)


def test_junction_impedance_hand_value():
    z = junction_impedance(RcsjParams(10e3, 1e-15), 150e9)
    # 1 / (1e-4 + i 9.42478e-4); |Y|^2 = 8.98265e-7
    assert z.real == pytest.approx(111.3258, rel=1e-5)
    assert z.imag == pytest.approx(-1049.221, rel=1e-5)


def test_junction_impedance_limits():
    f = np.geomspace(1e9, 1e12, 7)
    np.testing.assert_allclose(junction_impedance(RcsjParams(50.0, 0.0), f), 50.0)
    z = junction_impedance(RcsjParams(1e4, 1e-15), 1e16)
    assert abs(z) == pytest.approx(1 / (2 * np.pi * 1e16 * 1e-15), rel=1e-6)
    assert np.degrees(np.angle(z)) == pytest.approx(-90.0, abs=1e-3)
    with pytest.raises(ConfigError):
        junction_impedance(RcsjParams(1.0, 1.0), 0.0)


def test_coupling_efficiency_examples():
    zj = 30 - 40j
    assert coupling_efficiency(np.conj(zj), zj) == pytest.approx(1.0, abs=1e-12)
    assert coupling_efficiency(100.0, 50.0) == pytest.approx(8 / 9, rel=1e-14)
    assert coupling_efficiency(1e12, 50.0) < 1e-9
    reflection = 1 - abs((100 - 50) / (100 + 50)) ** 2
    assert coupling_efficiency(100.0, 50.0) == pytest.approx(reflection, rel=1e-14)


def test_coupling_efficiency_errors():
    # passive inputs only reach a zero denominator through underflow
    with pytest.raises(SingularInputError):
        coupling_efficiency(0.0, 1e-200)
    with pytest.raises(ConfigError):
        coupling_efficiency(-1.0, 50.0)
    with pytest.raises(ConfigError):
        coupling_efficiency(1.0, 0.0)


@st.composite
def passive_pair(draw):
    mag = st.floats(1e-3, 1e6)
    zr = complex(draw(st.floats(0, 1e6)), draw(st.floats(-1e6, 1e6)))
    zj = complex(draw(mag), draw(st.floats(-1e6, 1e6)))
    return zr, zj


@settings(max_examples=200, deadline=None)
@given(pair=passive_pair(), k=st.floats(1e-6, 1e6))
def test_efficiency_bounded_and_scale_invariant(pair, k):
    zr, zj = pair
    e = coupling_efficiency(zr, zj)
    assert 0.0 <= e <= 1.0
    assert coupling_efficiency(k * zr, k * zj) == pytest.approx(e, rel=1e-9, abs=1e-300)


def test_efficiency_bounded_on_random_batch():
    rng = np.random.default_rng(7)
    n = 10_000
    zr = rng.uniform(0, 1e4, n) + 1j * rng.uniform(-1e4, 1e4, n)
    zj = rng.uniform(1e-2, 1e4, n) + 1j * rng.uniform(-1e4, 1e4, n)
    e = coupling_efficiency(zr, zj)
    assert np.all((e >= 0) & (e <= 1))
    np.testing.assert_allclose(coupling_efficiency(np.conj(zj), zj), 1.0, atol=1e-12)


def test_bose_occupation():
    f, t = 100e9, 0.35
    x = constants.h * f / (constants.k * t)
    assert bose_occupation(f, t) == pytest.approx(1.109e-6, rel=1e-3)
    assert bose_occupation(f, t) == pytest.approx(np.exp(-x), rel=1e-5)
    assert bose_occupation(1e15, 0.01) == 0.0


def test_zero_efficiency_gives_zero_rate():
    curve = EfficiencyCurve.constant(0.0, 50e9, 500e9)
    assert parity_rate_from_blackbody(curve, BlackbodySource(0.35, F_MIN)) == 0.0


def test_flat_band_matches_riemann_oracle():
    curve = EfficiencyCurve.constant(1.0, 100e9, 200e9)
    rate = parity_rate_from_blackbody(curve, BlackbodySource(0.35, 100e9, 200e9))
    assert rate == pytest.approx(RIEMANN_FLAT_100_200_350MK, rel=1e-6)
    assert midpoint(curve, 100e9, 200e9, 0.35) == pytest.approx(RIEMANN_FLAT_100_200_350MK, rel=1e-12)


@pytest.mark.parametrize("name", TABLES)
def test_shipped_tables_match_riemann_oracle(name):
    curve = shipped_curve(name)
    rate = parity_rate_from_blackbody(curve, BlackbodySource(0.342, F_MIN))
    assert rate == pytest.approx(RIEMANN_342MK[name], rel=1e-6)


@pytest.mark.parametrize("name", TABLES)
def test_cutoff_above_400ghz_negligible(name):
    curve = shipped_curve(name)
    low = parity_rate_from_blackbody(curve, BlackbodySource(0.356, F_MIN, 400e9))
    extended = EfficiencyCurve(np.r_[curve.freqs, 800e9], np.r_[curve.e_c, curve.e_c[-1]])
    high = parity_rate_from_blackbody(extended, BlackbodySource(0.356, F_MIN, 800e9))
    assert high >= low
    assert high / low - 1 < 1e-3


def test_efficiency_scale_is_linear():
    curve = shipped_curve("xmon_like")
    src = BlackbodySource(0.34, F_MIN)
    full = parity_rate_from_blackbody(curve, src)
    assert parity_rate_from_blackbody(curve, src, 0.25) == pytest.approx(0.25 * full, rel=1e-14)
    with pytest.raises(ConfigError):
        parity_rate_from_blackbody(curve, src, 0.0)
    with pytest.raises(ConfigError):
        parity_rate_from_blackbody(curve, src, 1.5)


def test_table_pair_accepted():
    table = synthetic_table("xmon_like")
    src = BlackbodySource(0.34, F_MIN)
    assert parity_rate_from_blackbody((table, SYNTHETIC_RCSJ), src) == parity_rate_from_blackbody(
        efficiency_curve(table, SYNTHETIC_RCSJ), src
    )
    with pytest.raises(ConfigError):
        parity_rate_from_blackbody("nope", src)


def test_coverage_error_names_gap():
    curve = EfficiencyCurve.constant(1.0, 120e9, 300e9, "short")
    with pytest.raises(CoverageError, match=r"missing \[1e\+11, 1\.2e\+11\] Hz and \[3e\+11, 4e\+11\] Hz"):
        parity_rate_from_blackbody(curve, BlackbodySource(0.35, 100e9, 400e9))


def test_rate_increases_with_temperature():
    temps = np.linspace(0.2, 0.5, 31)
    rates = rate_vs_temperature(shipped_curve("xmon_like"), temps, F_MIN)
    assert np.all(np.diff(rates) > 0)
    assert np.all(rates > 0)


@pytest.mark.parametrize("t_star", [0.300, 0.342, 0.356, 0.400])
def test_inversion_roundtrip(t_star):
    curve = shipped_curve("xmon_like")
    rate = parity_rate_from_blackbody(curve, BlackbodySource(t_star, F_MIN))
    # 0.01 mK, tighter than the 0.1 mK roundtrip requirement
    assert abs(invert_t_star(rate, curve, F_MIN) - t_star) < 1e-5


def test_doubling_efficiency_lowers_t_star():
    base = EfficiencyCurve.constant(0.3, F_MIN, 400e9)
    double = EfficiencyCurve.constant(0.6, F_MIN, 400e9)
    assert invert_t_star(20.0, double, F_MIN) < invert_t_star(20.0, base, F_MIN)


def test_inversion_bracket_error():
    curve = EfficiencyCurve.constant(1e-6, F_MIN, 400e9)
    with pytest.raises(BracketError, match="outside"):
        invert_t_star(1e30, curve, F_MIN)
    with pytest.raises(ConfigError):
        invert_t_star(0.0, curve, F_MIN)


def test_synthetic_pair_reproduces_near_equal_temperatures():
    xmon, pads = shipped_curve("xmon_like"), shipped_curve("two_pads_like")
    ratio = band_integrated_efficiency(xmon, F_MIN, 400e9) / band_integrated_efficiency(pads, F_MIN, 400e9)
    assert ratio == pytest.approx(2.0, rel=0.01)
    t1 = invert_t_star(33.3, xmon, F_MIN)
    t2 = invert_t_star(17.5, pads, F_MIN)
    assert abs(t1 - t2) < 0.025
    assert t1 == pytest.approx(0.342, abs=0.005)


def test_shipped_tables_equal_generators():
    for name in TABLES:
        shipped = io.read_impedance_csv(io.data_path(f"zrad_{name}.csv"))
        fresh = synthetic_table(name)
        np.testing.assert_array_equal(shipped.freqs, fresh.freqs)
        np.testing.assert_array_equal(shipped.z_real, fresh.z_real)
        np.testing.assert_array_equal(shipped.z_imag, fresh.z_imag)


def test_table_validation():
    with pytest.raises(ConfigError):
        ImpedanceTable([1e9], [1.0], [0.0])
    with pytest.raises(ConfigError):
        ImpedanceTable([2e9, 1e9], [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ConfigError, match="Re Z >= 0"):
        ImpedanceTable([1e9, 2e9], [1.0, -1.0], [0.0, 0.0])
    with pytest.raises(ConfigError):
        EfficiencyCurve([1e9, 2e9], [0.5, 1.5])
    with pytest.raises(ConfigError):
        BlackbodySource(0.0, 1e9)
    with pytest.raises(ConfigError):
        BlackbodySource(0.3, 5e11, 4e11)
    with pytest.raises(ConfigError):
        synthetic_table("unknown")
    with pytest.raises(ConfigError):
        RcsjParams(0.0, 1e-15)


def test_pair_breaking_frequency():
    assert F_MIN == pytest.approx(96.7196e9, rel=1e-6)
