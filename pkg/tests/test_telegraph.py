import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ocsparity.errors import ConfigError, DegenerateInputError
from ocsparity.lm import LMConvergenceError
from ocsparity.telegraph import (
    PowerSpectrum,
    RateUnresolvedWarning,
    TelegraphTrace,
    apply_readout_infidelity,
    estimate_psd,
    fit_parity_rate,
    lorentzian,
    recover_rate,
    simulate_switch_times,
    simulate_telegraph,
    task_seed,
)


def sampled_telegraph_psd(f, rate, dt):
    """One-sided PSD of a +-1 telegraph process observed every dt.

    The sampled sequence has autocorrelation rho^|k| with rho = exp(-2 rate dt),
    an AR(1) spectrum that tends to 2 rate / (rate^2 + (pi f)^2) for f dt << 1.
    """
    rho = np.exp(-2 * rate * dt)
    return 2 * dt * (1 - rho**2) / (1 - 2 * rho * np.cos(2 * np.pi * f * dt) + rho**2)


def test_zero_rate_is_constant():
    tr = simulate_telegraph(0.0, 1e-3, 0.5, 4)
    assert len(tr) == 500
    assert np.all(tr.values == tr.values[0])


def test_simulation_is_deterministic():
    a = simulate_telegraph(33.3, 1e-3, 0.5, 12)
    b = simulate_telegraph(33.3, 1e-3, 0.5, 12)
    c = simulate_telegraph(33.3, 1e-3, 0.5, 13)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.true_rate == 33.3 and a.seed == 12


def test_task_seeds_are_stable_and_distinct():
    seeds = [task_seed(0, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert seeds[:3] == [task_seed(0, 0), task_seed(0, 1), task_seed(0, 2)]
    assert task_seed(1, 0) != task_seed(0, 1)


def test_dwell_times_are_exponential():
    rng = np.random.default_rng(2024)
    _, switches = simulate_switch_times(50.0, 210.0, rng)
    dwell = np.diff(switches)[:10_000]
    assert dwell.size == 10_000
    assert stats.kstest(dwell, "expon", args=(0, 1 / 50.0)).pvalue > 0.01


def test_mean_dwell_from_samples():
    rate, dt = 10.0, 1e-3
    tr = simulate_telegraph(rate, dt, 1000.0, 5)
    assert len(tr) == 1_000_000
    edges = np.flatnonzero(np.diff(tr.values) != 0)
    dwell = np.diff(edges) * dt
    assert np.mean(dwell) == pytest.approx(1 / rate, rel=0.02)


def test_observed_switch_rate():
    # sign changes between consecutive samples: (1 - exp(-2 G dt)) / 2 per sample
    rate, dt = 33.3, 1e-3
    counts = [
        np.count_nonzero(np.diff(simulate_telegraph(rate, dt, 0.5, task_seed(8, i)).values))
        for i in range(200)
    ]
    observed = np.mean(counts) / 0.5
    expected = (1 - np.exp(-2 * rate * dt)) / 2 / dt
    assert observed == pytest.approx(expected, rel=0.03)
    assert observed == pytest.approx(rate, rel=0.05)


def test_readout_infidelity():
    tr = simulate_telegraph(33.3, 1e-3, 0.5, 1)
    same = apply_readout_infidelity(tr, 1.0, 2)
    assert np.array_equal(same.values, tr.values) and same.fidelity == 1.0
    const = simulate_telegraph(0.0, 1e-3, 100.0, 3)
    noisy = apply_readout_infidelity(const, 0.9, 4)
    flipped = np.mean(noisy.values != const.values)
    assert abs(flipped - 0.10) < 0.01
    assert noisy.fidelity == 0.9
    with pytest.raises(ConfigError):
        apply_readout_infidelity(tr, 0.5, 0)


def test_trace_validation():
    with pytest.raises(ConfigError):
        TelegraphTrace(1e-3, np.array([1, 0, -1]))
    with pytest.raises(ConfigError):
        TelegraphTrace(0.0, np.array([1, -1]))
    with pytest.raises(ConfigError):
        TelegraphTrace(1e-3, np.array([], dtype=int))
    with pytest.raises(ConfigError):
        simulate_telegraph(-1.0, 1e-3, 0.5, 0)
    with pytest.raises(ConfigError):
        simulate_telegraph(1.0, 1e-3, 1e-4, 0)


def test_constant_trace_has_zero_spectrum():
    psd_est = estimate_psd(simulate_telegraph(0.0, 1e-3, 0.5, 0))
    assert np.all(psd_est.psd < 1e-30)
    with pytest.raises(DegenerateInputError):
        fit_parity_rate(psd_est)


def test_white_level_and_parseval():
    rng = np.random.default_rng(1)
    tr = TelegraphTrace(1e-3, np.where(rng.random(2**20) < 0.5, 1, -1))
    psd_est = estimate_psd(tr, include_dc=True)
    df = psd_est.freqs[1] - psd_est.freqs[0]
    assert psd_est.psd.sum() * df == pytest.approx(np.var(tr.values.astype(float)), rel=0.01)
    assert np.mean(psd_est.psd[1:]) == pytest.approx(2e-3, rel=0.05)


def test_matches_scipy_periodogram_for_one_segment():
    from scipy import signal

    tr = simulate_telegraph(40.0, 1e-3, 0.512, 6)
    psd_est = estimate_psd(tr, include_dc=True)
    assert psd_est.n_averages == 1
    f, p = signal.periodogram(tr.values.astype(float), fs=1e3, window="hann", detrend="constant")
    np.testing.assert_allclose(psd_est.freqs, f)
    np.testing.assert_allclose(psd_est.psd, p, rtol=1e-12, atol=1e-18)
    assert psd_est.dof[0] == 1 and psd_est.dof[-1] == 1 and np.all(psd_est.dof[1:-1] == 2)


def test_segment_bookkeeping():
    tr = simulate_telegraph(40.0, 1e-3, 10.0, 6)
    psd_est = estimate_psd(tr, segment_length=1000, overlap=0.5)
    assert psd_est.n_averages == 19
    assert psd_est.freqs[0] == pytest.approx(1.0)
    assert np.all(psd_est.dof[:-1] == 38) and psd_est.dof[-1] == 19
    with pytest.raises(ConfigError):
        estimate_psd(tr, segment_length=20_000)
    with pytest.raises(ConfigError):
        estimate_psd(tr, overlap=1.0)


def test_long_trace_follows_sampled_lorentzian():
    rate, dt = 100.0, 1e-3
    tr = simulate_telegraph(rate, dt, 400.0, 9)
    psd_est = estimate_psd(tr, segment_length=4096)
    band = psd_est.freqs < 200
    ratio = psd_est.psd[band] / sampled_telegraph_psd(psd_est.freqs[band], rate, dt)
    assert np.mean(ratio) == pytest.approx(1.0, rel=0.03)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RateUnresolvedWarning)
        fit = fit_parity_rate(psd_est)
    assert fit.rate == pytest.approx(rate, rel=0.05)
    assert fit.a == pytest.approx(2.0, rel=0.05)
    # half-power point of the fitted Lorentzian sits at rate / pi
    corner = lorentzian(fit.rate / np.pi, fit.a, fit.rate, 0.0)
    assert corner == pytest.approx(0.5 * lorentzian(0.0, fit.a, fit.rate, 0.0), rel=1e-12)


def make_exact_spectrum():
    f = np.linspace(2.0, 500.0, 250)
    return PowerSpectrum(f, lorentzian(f, 1.0, 100.0, 1e-4))


@pytest.fixture
def exact_spectrum():
    return make_exact_spectrum()


def test_exact_model_recovered(exact_spectrum):
    fit = fit_parity_rate(exact_spectrum)
    assert fit.a == pytest.approx(1.0, rel=1e-9)
    assert fit.rate == pytest.approx(100.0, rel=1e-9)
    assert fit.c == pytest.approx(1e-4, rel=1e-9)
    assert fit.residual_norm < 1e-6
    assert not fit.rate_unresolved


def test_fit_report_fields(exact_spectrum):
    d = fit_parity_rate(exact_spectrum).to_dict()
    assert set(d) == {"a", "rate_hz", "c", "stderr", "residual_norm", "rate_unresolved"}
    assert set(d["stderr"]) == {"a", "rate_hz", "c"}


@settings(max_examples=20, deadline=None)
@given(perm_seed=st.integers(0, 2**32 - 1))
def test_fit_invariant_to_grid_order(perm_seed):
    exact_spectrum = make_exact_spectrum()
    noisy_f = exact_spectrum.freqs
    rng = np.random.default_rng(1234)
    noisy = PowerSpectrum(noisy_f, exact_spectrum.psd * rng.chisquare(4, noisy_f.size) / 4, n_averages=2)
    order = np.random.default_rng(perm_seed).permutation(noisy_f.size)
    shuffled = PowerSpectrum(noisy_f[order], noisy.psd[order], n_averages=2)
    a, b = fit_parity_rate(noisy), fit_parity_rate(shuffled)
    assert (a.a, a.rate, a.c) == (b.a, b.rate, b.c)


def test_covariance_is_symmetric_psd():
    psd_est = estimate_psd(apply_readout_infidelity(simulate_telegraph(33.3, 1e-3, 0.5, 21), 0.9, 22))
    fit = fit_parity_rate(psd_est)
    np.testing.assert_array_equal(fit.covariance, fit.covariance.T)
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= -1e-12 * np.abs(fit.covariance).max())
    assert np.all(fit.stderr > 0)


def test_readout_noise_raises_floor():
    for seed in range(5):
        tr = simulate_telegraph(33.3, 1e-3, 0.5, task_seed(30, seed))
        clean = fit_parity_rate(estimate_psd(tr))
        noisy = fit_parity_rate(estimate_psd(apply_readout_infidelity(tr, 0.85, task_seed(31, seed))))
        assert noisy.c > clean.c


def test_fast_rate_flagged():
    tr = simulate_telegraph(1e4, 1e-3, 0.5, 3)
    with pytest.warns(RateUnresolvedWarning):
        fit = fit_parity_rate(estimate_psd(tr))
    assert fit.rate_unresolved


def test_resolved_rate_not_flagged():
    tr = simulate_telegraph(33.3, 1e-3, 0.5, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RateUnresolvedWarning)
        fit = fit_parity_rate(estimate_psd(tr))
    assert not fit.rate_unresolved


def test_non_convergence_carries_state():
    tr = simulate_telegraph(100.0, 1e-3, 0.5, 3)
    with pytest.raises(LMConvergenceError) as info:
        fit_parity_rate(estimate_psd(tr), max_iter=1)
    assert info.value.x.shape == (3,)
    assert len(info.value.history) == 2
    assert info.value.history[1] <= info.value.history[0]


def test_fit_preconditions():
    f = np.linspace(1, 7, 7)
    with pytest.raises(ConfigError):
        fit_parity_rate(PowerSpectrum(f, np.ones(7)))
    f = np.linspace(1, 5, 20)
    with pytest.raises(ConfigError):
        fit_parity_rate(PowerSpectrum(f, np.ones(20)))
    with pytest.raises(DegenerateInputError):
        fit_parity_rate(PowerSpectrum(np.linspace(1, 100, 20), np.zeros(20)))


@pytest.mark.parametrize("rate", [10.0, 33.3, 100.0])
def test_end_to_end_recovery(rate):
    fits = [recover_rate(rate, 1e-3, 0.5, 0.9, task_seed(0, i)) for i in range(100)]
    assert np.median(fits) == pytest.approx(rate, rel=0.15)


@settings(max_examples=25, deadline=None)
@given(
    rate=st.floats(0.0, 500.0),
    seed=st.integers(0, 2**31),
    nseg=st.sampled_from([None, 64, 100, 256]),
    overlap=st.floats(0.0, 0.9),
)
def test_psd_is_nonnegative_and_sign_blind(rate, seed, nseg, overlap):
    tr = simulate_telegraph(rate, 1e-3, 0.5, seed)
    psd_est = estimate_psd(tr, nseg, overlap)
    assert np.all(psd_est.psd >= 0)
    assert np.all(np.diff(psd_est.freqs) > 0)
    flipped = estimate_psd(TelegraphTrace(tr.dt, -tr.values), nseg, overlap)
    np.testing.assert_allclose(flipped.psd, psd_est.psd, rtol=1e-12, atol=1e-20)
