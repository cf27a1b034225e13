"""Bloch-vector model of the Ramsey-like parity-mapping sequence.

One cycle: pi/2 pulse, free precession for `wait_time`, pi/2 pulse, single-shot
readout, then a reset wait of ``reset_wait_multiplier * t1``. The drive sits
on the odd-parity transition, so with ``wait_time = 1 / (4 delta_f)`` the odd
branch returns to the excited state and the even branch, which precesses at
an extra ``2 delta_f``, lands in the ground state.

Bloch convention: z = +1 is the ground state, pulses rotate about +y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .telegraph import TelegraphTrace, n_samples, simulate_switch_times, states_at, task_seed

EVEN, ODD = 1, -1


def _parity(p) -> int:
    if p in (EVEN, "even", "e"):
        return EVEN
    if p in (ODD, "odd", "o"):
        return ODD
    raise ConfigError(f"parity must be 'even'/'odd' or +1/-1, got {p!r}")


@dataclass(frozen=True)
class SequenceParams:
    """Timing and readout settings of the parity-mapping sequence.

    Frequencies in Hz, times in seconds. `wait_time` defaults to
    ``1 / (4 delta_f)``.
    """

    delta_f: float
    drive_detuning: float = 0.0
    wait_time: float | None = None
    fidelity: float = 1.0
    t1: float = np.inf
    reset_wait_multiplier: float = 10.0

    def __post_init__(self):
        if not self.delta_f > 0:
            raise ConfigError(f"delta_f must be positive, got {self.delta_f}")
        if not 0.5 < self.fidelity <= 1:
            raise ConfigError(f"fidelity must be in (0.5, 1], got {self.fidelity}")
        if not self.t1 > 0:
            raise ConfigError(f"t1 must be positive, got {self.t1}")
        if self.wait_time is None:
            object.__setattr__(self, "wait_time", 1.0 / (4.0 * self.delta_f))
        if not self.wait_time > 0:
            raise ConfigError(f"wait_time must be positive, got {self.wait_time}")

    def detuning(self, parity) -> float:
        """Precession frequency (Hz) in the drive frame for a parity branch."""
        d = self.drive_detuning
        return d if _parity(parity) == ODD else d + 2.0 * self.delta_f

    @property
    def cycle_time(self) -> float:
        """Wall-clock length of one cycle including the reset wait (s)."""
        reset = self.reset_wait_multiplier * self.t1 if np.isfinite(self.t1) else 0.0
        return self.wait_time + reset


@dataclass(frozen=True)
class BlochState:
    x: float = 0.0
    y: float = 0.0
    z: float = 1.0

    def __post_init__(self):
        if self.x**2 + self.y**2 + self.z**2 > 1 + 1e-12:
            raise ValueError(f"Bloch vector outside the unit ball: {self}")

    @property
    def excited_probability(self) -> float:
        return float(np.clip(0.5 * (1.0 - self.z), 0.0, 1.0))


def rotate_y(state: BlochState, angle: float) -> BlochState:
    c, s = np.cos(angle), np.sin(angle)
    return BlochState(c * state.x + s * state.z, state.y, -s * state.x + c * state.z)


def free_evolution(state: BlochState, detuning: float, t: float, t1: float) -> BlochState:
    """Precess about z at `detuning` for time `t` with energy relaxation to ground."""
    phi = 2.0 * np.pi * detuning * t
    c, s = np.cos(phi), np.sin(phi)
    decay = np.exp(-t / t1) if np.isfinite(t1) else 1.0
    shrink = np.sqrt(decay)
    x = (c * state.x - s * state.y) * shrink
    y = (s * state.x + c * state.y) * shrink
    z = 1.0 - (1.0 - state.z) * decay
    return BlochState(x, y, z)


def final_state(parity, params: SequenceParams, flip_times=()) -> BlochState:
    """State just before readout for a branch starting in `parity`.

    `flip_times` are parity switches measured from the first pulse; only
    those inside the wait window matter.
    """
    p = _parity(parity)
    state = rotate_y(BlochState(), np.pi / 2)
    t = 0.0
    for tf in sorted(ft for ft in flip_times if 0 < ft < params.wait_time):
        state = free_evolution(state, params.detuning(p), tf - t, params.t1)
        t, p = tf, -p
    state = free_evolution(state, params.detuning(p), params.wait_time - t, params.t1)
    return rotate_y(state, np.pi / 2)


def bit_one_probability(parity, params: SequenceParams, flip_times=()) -> float:
    """Probability that readout reports the excited state (bit 1)."""
    p1 = final_state(parity, params, flip_times).excited_probability
    f = params.fidelity
    return f * p1 + (1.0 - f) * (1.0 - p1)


def run_shot(parity, params: SequenceParams, seed: int, flip_times=()) -> int:
    """One cycle of the sequence; returns the readout bit (1 = excited = odd)."""
    u = np.random.default_rng(seed).random()
    return int(u < bit_one_probability(parity, params, flip_times))


def _bit_one_probabilities(phases, decay, fidelity):
    # closed form of final_state: z_final = -cos(phase) * exp(-wait / 2 T1)
    p1 = 0.5 * (1.0 + np.cos(phases) * decay)
    return fidelity * p1 + (1.0 - fidelity) * (1.0 - p1)


def run_parity_monitor(
    rate: float, params: SequenceParams, dt: float, duration: float, seed: int
) -> TelegraphTrace:
    """Repeat the sequence every `dt` on top of a simulated parity process.

    The underlying process uses the same random stream as
    `simulate_telegraph(rate, dt, duration, seed)`, so both see identical
    parity histories. Switches falling inside a wait window change the
    precession frequency for the rest of that window. Measured bits map to
    parity as 0 -> +1 (even), 1 -> -1 (odd).
    """
    if not dt >= params.wait_time:
        raise ConfigError(
            f"sampling interval {dt} s is shorter than the wait time {params.wait_time} s"
        )
    if not rate >= 0:
        raise ConfigError(f"rate must be non-negative, got {rate}")
    if not duration >= dt:
        raise ConfigError(f"duration must be at least dt, got {duration} < {dt}")
    rng = np.random.default_rng(seed)
    n = n_samples(dt, duration)
    s0, switches = simulate_switch_times(rate, n * dt, rng)
    t_k = np.arange(n) * dt
    start = states_at(s0, switches, t_k)

    wait = params.wait_time
    d_odd, d_even = params.detuning(ODD), params.detuning(EVEN)
    freq = np.where(start == ODD, d_odd, d_even)
    phases = 2.0 * np.pi * freq * wait
    lo = np.searchsorted(switches, t_k, side="right")
    hi = np.searchsorted(switches, t_k + wait, side="left")
    for k in np.nonzero(hi > lo)[0]:
        p, t, phase = int(start[k]), 0.0, 0.0
        for tf in switches[lo[k] : hi[k]] - t_k[k]:
            phase += 2.0 * np.pi * (d_odd if p == ODD else d_even) * (tf - t)
            t, p = tf, -p
        phase += 2.0 * np.pi * (d_odd if p == ODD else d_even) * (wait - t)
        phases[k] = phase
    decay = np.exp(-wait / (2.0 * params.t1)) if np.isfinite(params.t1) else 1.0
    prob = _bit_one_probabilities(phases, decay, params.fidelity)
    u = np.random.default_rng(task_seed(seed, 1)).random(n)
    bits = u < prob
    values = np.where(bits, ODD, EVEN)
    return TelegraphTrace(
        dt=dt, values=values, seed=seed, true_rate=float(rate), fidelity=params.fidelity
    )
