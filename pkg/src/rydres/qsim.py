"""Exact state-vector simulator for Rydberg programs (up to 14 qubits).

The Hamiltonian is applied matrix-free: the diagonal (interactions plus
detunings) is three precomputed vectors over basis states, and the Rabi term
couples each state to its n single-bit flips.  Time stepping is fixed-step
RK4 on i dpsi/dt = H(t) psi, with steps aligned to waveform breakpoints and
probe times so kinks in the drives never fall inside a step.

The norm is not renormalized during integration; it is checked against a
drift budget and renormalized only at probe times, so norm drift stays an
honest accuracy diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ConfigError, NumericalError
from .model import (DEFAULT_CONSTANTS, ProbeSchedule, RydbergProgram, Waveform,
                    interaction_matrix)

MAX_QUBITS = 14

#: default target step (us) and the stiffness safety factor in
#: h = min(DEFAULT_STEP, STEP_SAFETY / maxscale)
DEFAULT_STEP = 1e-3
STEP_SAFETY = 0.05

#: allowed |norm - 1| accumulated between renormalization points
NORM_DRIFT_TOL = 1e-9


# ------------------------------------------------------------ state vectors #


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes over the 2^n computational basis, site j <-> bit j."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (2**self.n_qubits,):
            raise ConfigError(f"state for {self.n_qubits} qubits needs {2**self.n_qubits} "
                              f"amplitudes, got shape {amp.shape}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @staticmethod
    def ground(n_qubits: int) -> "StateVector":
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise ConfigError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
        amp = np.zeros(2**n_qubits, dtype=np.complex128)
        amp[0] = 1.0
        return StateVector(amp, n_qubits)


# -------------------------------------------------------------- numba core #


@nb.njit(cache=True, inline="always")
def _wf_at(t, times, values):
    # hold first/last value outside the breakpoint range
    n = times.shape[0]
    if t <= times[0]:
        return values[0]
    for i in range(1, n):
        if t <= times[i]:
            w = (t - times[i - 1]) / (times[i] - times[i - 1])
            return values[i - 1] + w * (values[i] - values[i - 1])
    return values[n - 1]


@nb.njit(cache=True, inline="always")
def _deriv(out, psi, t, n_qubits, diag_v, occ_tot, occ_loc,
           rt, rv, gt, gv, lt, lv):
    # out = -i H(t) psi
    om_half = 0.5 * _wf_at(t, rt, rv)
    dg = _wf_at(t, gt, gv)
    dl = _wf_at(t, lt, lv)
    dim = psi.shape[0]
    for s in range(dim):
        acc = (diag_v[s] - dg * occ_tot[s] - dl * occ_loc[s]) * psi[s]
        for j in range(n_qubits):
            acc += om_half * psi[s ^ (1 << j)]
        out[s] = acc * (-1j)


@nb.njit(cache=True)
def _rk4_segment(psi, t0, t1, n_steps, n_qubits, diag_v, occ_tot, occ_loc,
                 rt, rv, gt, gv, lt, lv, k1, k2, k3, k4, tmp):
    h = (t1 - t0) / n_steps
    dim = psi.shape[0]
    for step in range(n_steps):
        t = t0 + step * h
        _deriv(k1, psi, t, n_qubits, diag_v, occ_tot, occ_loc, rt, rv, gt, gv, lt, lv)
        for s in range(dim):
            tmp[s] = psi[s] + 0.5 * h * k1[s]
        _deriv(k2, tmp, t + 0.5 * h, n_qubits, diag_v, occ_tot, occ_loc, rt, rv, gt, gv, lt, lv)
        for s in range(dim):
            tmp[s] = psi[s] + 0.5 * h * k2[s]
        _deriv(k3, tmp, t + 0.5 * h, n_qubits, diag_v, occ_tot, occ_loc, rt, rv, gt, gv, lt, lv)
        for s in range(dim):
            tmp[s] = psi[s] + h * k3[s]
        _deriv(k4, tmp, t + h, n_qubits, diag_v, occ_tot, occ_loc, rt, rv, gt, gv, lt, lv)
        sixth = h / 6.0
        for s in range(dim):
            psi[s] = psi[s] + sixth * (k1[s] + 2.0 * (k2[s] + k3[s]) + k4[s])


@nb.njit(cache=True)
def _build_diagonals(n_qubits, vmat, pattern):
    dim = 1 << n_qubits
    diag_v = np.zeros(dim)
    occ_tot = np.zeros(dim)
    occ_loc = np.zeros(dim)
    for s in range(dim):
        acc_v = 0.0
        tot = 0.0
        loc = 0.0
        for j in range(n_qubits):
            if (s >> j) & 1:
                tot += 1.0
                loc += pattern[j]
                for k in range(j + 1, n_qubits):
                    if (s >> k) & 1:
                        acc_v += vmat[j, k]
        diag_v[s] = acc_v
        occ_tot[s] = tot
        occ_loc[s] = loc
    return diag_v, occ_tot, occ_loc


# ---------------------------------------------------------------- stepping #


def _max_scale(program: RydbergProgram) -> float:
    v = interaction_matrix(program.array, program.constants)
    vmax = float(v.max()) if program.n_qubits > 1 else 0.0
    ts = np.unique(np.concatenate([program.rabi.times, program.global_detuning.times,
                                   program.local_detuning.times, [program.total_time]]))
    per_site = program.global_detuning(ts)[:, None] \
        + program.local_detuning(ts)[:, None] * program.local_pattern[None, :]
    dmax = float(np.max(np.abs(per_site)))
    return max(program.rabi.max_abs(), vmax, dmax)


def step_size(program: RydbergProgram, step: float | None = None) -> float:
    """Fixed RK4 step: explicit override, else min(1e-3, 0.05/maxscale)."""
    if step is not None:
        if step <= 0:
            raise ConfigError(f"step must be positive, got {step}")
        return float(step)
    scale = _max_scale(program)
    return DEFAULT_STEP if scale == 0 else min(DEFAULT_STEP, STEP_SAFETY / scale)


def _segment_boundaries(program: RydbergProgram, stops: np.ndarray) -> np.ndarray:
    kinks = np.concatenate([program.rabi.times, program.global_detuning.times,
                            program.local_detuning.times, [0.0], stops])
    kinks = np.unique(kinks)
    return kinks[(kinks >= 0.0) & (kinks <= stops[-1] + 1e-15)]


class _Engine:
    """Pre-digested program: diagonal vectors plus waveform arrays."""

    def __init__(self, program: RydbergProgram, step: float | None = None):
        n = program.n_qubits
        if n > MAX_QUBITS:
            raise ConfigError(f"state-vector backend is limited to {MAX_QUBITS} qubits, got {n}")
        self.program = program
        self.n_qubits = n
        vmat = interaction_matrix(program.array, program.constants)
        self.diag_v, self.occ_tot, self.occ_loc = _build_diagonals(n, vmat, program.local_pattern)
        self.h = step_size(program, step)
        dim = 1 << n
        self._bufs = tuple(np.empty(dim, dtype=np.complex128) for _ in range(5))

    def advance(self, psi: np.ndarray, t0: float, t1: float) -> None:
        if t1 <= t0 + 1e-15:
            return
        p = self.program
        bounds = _segment_boundaries(p, np.array([t0, t1]))
        bounds = bounds[(bounds >= t0 - 1e-15) & (bounds <= t1 + 1e-15)]
        k1, k2, k3, k4, tmp = self._bufs
        for a, b in zip(bounds[:-1], bounds[1:]):
            n_steps = max(1, int(math.ceil((b - a) / self.h - 1e-12)))
            _rk4_segment(psi, a, b, n_steps, self.n_qubits, self.diag_v,
                         self.occ_tot, self.occ_loc,
                         p.rabi.times, p.rabi.values,
                         p.global_detuning.times, p.global_detuning.values,
                         p.local_detuning.times, p.local_detuning.values,
                         k1, k2, k3, k4, tmp)


def _check_drift(psi: np.ndarray, where: str) -> float:
    norm = float(np.linalg.norm(psi))
    drift = abs(norm - 1.0)
    if not math.isfinite(norm):
        raise NumericalError(f"state norm became non-finite {where}")
    if drift > NORM_DRIFT_TOL:
        raise NumericalError(f"norm drift {drift:.3e} exceeds {NORM_DRIFT_TOL:.0e} {where}; "
                             "reduce the integration step")
    return drift


def evolve(program: RydbergProgram, t_end: float | None = None,
           initial: StateVector | None = None, step: float | None = None) -> StateVector:
    """Integrate one program from t=0 (or ``initial``) to ``t_end``.

    Asserts the norm-drift budget at the end and returns the state
    unnormalized (drift is part of the contract, not hidden).
    """
    t_end = program.total_time if t_end is None else float(t_end)
    if not 0.0 < t_end <= program.total_time + 1e-12:
        raise ConfigError(f"t_end must lie in (0, total_time], got {t_end}")
    eng = _Engine(program, step)
    if initial is None:
        psi = StateVector.ground(program.n_qubits).amplitudes.copy()
    else:
        if initial.n_qubits != program.n_qubits:
            raise ConfigError("initial state size does not match the program")
        psi = initial.amplitudes.copy()
    eng.advance(psi, 0.0, t_end)
    _check_drift(psi, f"at t={t_end}")
    return StateVector(psi, program.n_qubits)


# ------------------------------------------------------------- probe runs #


@dataclass(frozen=True, eq=False)
class EvolutionRecord:
    """Per-probe outcome distributions of one program run."""

    probe_times: tuple
    probabilities: np.ndarray  # (n_probes, 2^n)
    n_qubits: int
    norm_drifts: tuple
    states: tuple | None = None

    @property
    def n_probes(self) -> int:
        return len(self.probe_times)


def run_program(program: RydbergProgram, schedule: ProbeSchedule,
                step: float | None = None, keep_states: bool = False) -> EvolutionRecord:
    """Evolve and measure at each probe time.

    Default protocol: each probe is its own evolution from the ground state,
    with the Rabi drive rebuilt as a trapezoid (ramp from the schedule,
    plateau from the program) ending at the probe time, while the detuning
    waveforms run unchanged.  With ``schedule.snapshot_mode`` the program is
    integrated once, continuously, and mid-evolution states are recorded; the
    program's own waveforms (including any final Rabi ramp-down) apply.

    A probe exactly at ``total_time`` in snapshot mode is identical to
    ``evolve(program)``.
    """
    times = schedule.probe_times
    if times[-1] > program.total_time + 1e-12:
        raise ConfigError(f"probe time {times[-1]} exceeds total_time {program.total_time}")
    n = program.n_qubits
    probs = np.empty((len(times), 2**n))
    drifts = []
    states = [] if keep_states else None

    if schedule.snapshot_mode:
        eng = _Engine(program, step)
        psi = StateVector.ground(n).amplitudes.copy()
        t_prev = 0.0
        for k, t in enumerate(times):
            eng.advance(psi, t_prev, t)
            drifts.append(_check_drift(psi, f"at probe t={t}"))
            psi /= np.linalg.norm(psi)
            probs[k] = np.abs(psi) ** 2
            if keep_states:
                states.append(StateVector(psi.copy(), n))
            t_prev = t
    else:
        plateau = program.rabi.max_abs()
        for k, t in enumerate(times):
            if schedule.include_rampdown:
                rabi = Waveform.trapezoid(plateau, t, schedule.ramp)
            else:
                rabi = Waveform.ramp_up(plateau, t, schedule.ramp)
            sub = program.truncated(t, rabi=rabi)
            eng = _Engine(sub, step)
            psi = StateVector.ground(n).amplitudes.copy()
            eng.advance(psi, 0.0, t)
            drifts.append(_check_drift(psi, f"at probe t={t}"))
            psi /= np.linalg.norm(psi)
            probs[k] = np.abs(psi) ** 2
            if keep_states:
                states.append(StateVector(psi.copy(), n))

    return EvolutionRecord(times, probs, n, tuple(drifts),
                           tuple(states) if keep_states else None)


# ------------------------------------------------------------ observables #


@dataclass(frozen=True)
class ObservableSpec:
    """Which Z_i and Z_i Z_j expectation values to read out.

    Z is diagonal (Z_j = 2 n_j - 1), so everything here is computable from
    outcome probabilities alone; there are no off-diagonal observables.
    """

    singles: tuple
    pairs: tuple

    def __post_init__(self):
        singles = tuple(int(i) for i in self.singles)
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        for i, j in pairs:
            if not i < j:
                raise ConfigError(f"observable pairs must have i < j, got ({i}, {j})")
        object.__setattr__(self, "singles", singles)
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_features(self) -> int:
        return len(self.singles) + len(self.pairs)

    def labels(self) -> list:
        return [f"Z_{i}" for i in self.singles] + [f"ZZ_{i}_{j}" for i, j in self.pairs]

    #: above this qubit count, all-pairs correlators are trimmed to chain neighbors
    ALL_PAIRS_LIMIT = 16

    @staticmethod
    def all_pairs(n_qubits: int) -> "ObservableSpec":
        return ObservableSpec(tuple(range(n_qubits)),
                              tuple((i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)))

    @staticmethod
    def chain_neighbors(n_qubits: int) -> "ObservableSpec":
        return ObservableSpec(tuple(range(n_qubits)),
                              tuple((i, i + 1) for i in range(n_qubits - 1)))

    @staticmethod
    def grid_neighbors(shape: tuple) -> "ObservableSpec":
        """Horizontal and vertical neighbor pairs on an (ny, nx) grid,
        sites numbered row-major."""
        ny, nx = shape
        idx = lambda r, c: r * nx + c
        pairs = []
        for r in range(ny):
            for c in range(nx):
                if c + 1 < nx:
                    pairs.append((idx(r, c), idx(r, c + 1)))
                if r + 1 < ny:
                    pairs.append((idx(r, c), idx(r + 1, c)))
        pairs = tuple(sorted(tuple(sorted(p)) for p in pairs))
        return ObservableSpec(tuple(range(ny * nx)), pairs)

    @staticmethod
    def auto(n_qubits: int, geometry: str = "chain", shape: tuple | None = None) -> "ObservableSpec":
        """All-pairs up to ALL_PAIRS_LIMIT qubits, else geometric neighbors."""
        if n_qubits <= ObservableSpec.ALL_PAIRS_LIMIT:
            return ObservableSpec.all_pairs(n_qubits)
        if geometry == "grid" and shape is not None:
            return ObservableSpec.grid_neighbors(shape)
        return ObservableSpec.chain_neighbors(n_qubits)


_Z_CACHE: dict = {}


def _z_table(n_qubits: int) -> np.ndarray:
    """(2^n, n) matrix of Z_j eigenvalues (+1 excited, -1 ground)."""
    tbl = _Z_CACHE.get(n_qubits)
    if tbl is None:
        states = np.arange(1 << n_qubits, dtype=np.int64)
        bits = (states[:, None] >> np.arange(n_qubits)) & 1
        tbl = (2.0 * bits - 1.0).astype(np.float64)
        tbl.setflags(write=False)
        _Z_CACHE[n_qubits] = tbl
    return tbl


def observable_matrix(n_qubits: int, obs: ObservableSpec) -> np.ndarray:
    """(2^n, n_features) matrix whose columns are the Z_i / Z_i Z_j diagonals."""
    z = _z_table(n_qubits)
    cols = [z[:, i] for i in obs.singles]
    cols += [z[:, i] * z[:, j] for i, j in obs.pairs]
    return np.stack(cols, axis=1)


def exact_expectations(record: EvolutionRecord, obs: ObservableSpec) -> np.ndarray:
    """(n_probes, n_features) expectation values from outcome distributions."""
    return record.probabilities @ observable_matrix(record.n_qubits, obs)


# ---------------------------------------------------------------- sampling #


@dataclass(frozen=True, eq=False)
class ShotTable:
    """Measured bitstrings for one program run, stored as basis-state codes.

    ``codes[k, s]`` is shot s at probe k; bit j of a code is the outcome of
    site j (1 = Rydberg).  ``seed_path`` records the RNG derivation path.
    """

    n_qubits: int
    probe_times: tuple
    codes: np.ndarray  # (n_probes, n_shots) uint32
    seed_path: tuple = ()

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint32)
        if codes.ndim != 2 or codes.shape[0] != len(self.probe_times):
            raise ConfigError(f"codes must be (n_probes, n_shots), got {codes.shape}")
        if codes.size and codes.max() >= (1 << self.n_qubits):
            raise ConfigError("shot codes exceed the basis size")
        object.__setattr__(self, "codes", codes)

    @property
    def n_shots(self) -> int:
        return int(self.codes.shape[1])

    def bitstrings(self, probe: int) -> list:
        """Shots at one probe as '0'/'1' strings, site 0 first."""
        n = self.n_qubits
        return ["".join(str((int(c) >> j) & 1) for j in range(n)) for c in self.codes[probe]]


def sample_bitstrings(record: EvolutionRecord, n_shots: int,
                      rng: np.random.Generator, seed_path: tuple = ()) -> ShotTable:
    """Draw projective-measurement shots at every probe via inverse CDF."""
    if n_shots < 1:
        raise ConfigError(f"n_shots must be >= 1, got {n_shots}")
    codes = np.empty((record.n_probes, n_shots), dtype=np.uint32)
    for k in range(record.n_probes):
        cdf = np.cumsum(record.probabilities[k])
        cdf /= cdf[-1]
        u = rng.random(n_shots)
        codes[k] = np.searchsorted(cdf, u, side="right").astype(np.uint32)
    return ShotTable(record.n_qubits, record.probe_times, codes, seed_path)


def shot_counts(table: ShotTable, probe: int) -> np.ndarray:
    """Outcome histogram (length 2^n) of one probe's shots."""
    return np.bincount(table.codes[probe], minlength=1 << table.n_qubits).astype(np.int64)


def estimated_expectations(table: ShotTable, obs: ObservableSpec,
                           shot_idx: np.ndarray | None = None) -> np.ndarray:
    """(n_probes, n_features) empirical means from shots.

    ``shot_idx`` restricts to a subset of shot positions (used by the
    resampling protocol); all probes use the same subset.
    """
    zmat = observable_matrix(table.n_qubits, obs)
    out = np.empty((len(table.probe_times), obs.n_features))
    for k in range(len(table.probe_times)):
        codes = table.codes[k] if shot_idx is None else table.codes[k][shot_idx]
        counts = np.bincount(codes, minlength=1 << table.n_qubits)
        out[k] = (counts @ zmat) / codes.shape[0]
    return out
