"""Mean-field classical reservoir: unit spins driven by the same programs.

Each site carries a classical unit vector S_i precessing as

    dS_i/dt = B_i x S_i,
    B_i = (Omega(t)/2) x_hat
        + [ -Delta_i(t)/2 + (1/4) sum_{j!=i} V_ij (1 + S_j^z) ] z_hat,

started from all spins down (0, 0, -1).  This is the classical twin of the
quantum simulator: same programs, same probe protocol, embeddings read from
S^z values and their products.  A single resonant spin precesses at Omega/2,
half the quantum rate; the corresponding energy function is conserved for
constant drives, which the tests use as an integration diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ConfigError, NumericalError
from .model import ProbeSchedule, RydbergProgram, Waveform, interaction_matrix
from .qsim import NORM_DRIFT_TOL, ObservableSpec, _wf_at, step_size


@nb.njit(cache=True, inline="always")
def _crc_deriv(out, spins, t, vmat, pattern, rt, rv, gt, gv, lt, lv):
    om_half = 0.5 * _wf_at(t, rt, rv)
    dg = _wf_at(t, gt, gv)
    dl = _wf_at(t, lt, lv)
    n = spins.shape[0]
    for i in range(n):
        bz = -0.5 * (dg + pattern[i] * dl)
        for j in range(n):
            bz += 0.25 * vmat[i, j] * (1.0 + spins[j, 2])  # diag of vmat is 0
        sx, sy, sz = spins[i, 0], spins[i, 1], spins[i, 2]
        out[i, 0] = -bz * sy
        out[i, 1] = bz * sx - om_half * sz
        out[i, 2] = om_half * sy


@nb.njit(cache=True)
def _crc_rk4_segment(spins, t0, t1, n_steps, vmat, pattern, rt, rv, gt, gv, lt, lv):
    n = spins.shape[0]
    k1 = np.empty((n, 3))
    k2 = np.empty((n, 3))
    k3 = np.empty((n, 3))
    k4 = np.empty((n, 3))
    tmp = np.empty((n, 3))
    h = (t1 - t0) / n_steps
    for step in range(n_steps):
        t = t0 + step * h
        _crc_deriv(k1, spins, t, vmat, pattern, rt, rv, gt, gv, lt, lv)
        tmp[:] = spins + 0.5 * h * k1
        _crc_deriv(k2, tmp, t + 0.5 * h, vmat, pattern, rt, rv, gt, gv, lt, lv)
        tmp[:] = spins + 0.5 * h * k2
        _crc_deriv(k3, tmp, t + 0.5 * h, vmat, pattern, rt, rv, gt, gv, lt, lv)
        tmp[:] = spins + h * k3
        _crc_deriv(k4, tmp, t + h, vmat, pattern, rt, rv, gt, gv, lt, lv)
        spins += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _down_spins(n: int) -> np.ndarray:
    spins = np.zeros((n, 3))
    spins[:, 2] = -1.0
    return spins


class _ClassicalEngine:
    def __init__(self, program: RydbergProgram, step: float | None = None):
        self.program = program
        self.vmat = interaction_matrix(program.array, program.constants)
        self.h = step_size(program, step)

    def advance(self, spins: np.ndarray, t0: float, t1: float) -> None:
        if t1 <= t0 + 1e-15:
            return
        p = self.program
        kinks = np.unique(np.concatenate([p.rabi.times, p.global_detuning.times,
                                          p.local_detuning.times, [t0, t1]]))
        kinks = kinks[(kinks >= t0 - 1e-15) & (kinks <= t1 + 1e-15)]
        for a, b in zip(kinks[:-1], kinks[1:]):
            n_steps = max(1, int(math.ceil((b - a) / self.h - 1e-12)))
            _crc_rk4_segment(spins, a, b, n_steps, self.vmat, p.local_pattern,
                             p.rabi.times, p.rabi.values,
                             p.global_detuning.times, p.global_detuning.values,
                             p.local_detuning.times, p.local_detuning.values)


def _check_spin_norms(spins: np.ndarray, where: str) -> float:
    norms = np.linalg.norm(spins, axis=1)
    if not np.all(np.isfinite(norms)):
        raise NumericalError(f"spin norms became non-finite {where}")
    drift = float(np.max(np.abs(norms - 1.0)))
    if drift > NORM_DRIFT_TOL:
        raise NumericalError(f"spin norm drift {drift:.3e} exceeds {NORM_DRIFT_TOL:.0e} {where}")
    return drift


def crc_evolve(program: RydbergProgram, t_end: float | None = None,
               initial: np.ndarray | None = None, step: float | None = None) -> np.ndarray:
    """Integrate the spins to ``t_end``; returns (n, 3) without renormalizing."""
    t_end = program.total_time if t_end is None else float(t_end)
    if not 0.0 < t_end <= program.total_time + 1e-12:
        raise ConfigError(f"t_end must lie in (0, total_time], got {t_end}")
    spins = _down_spins(program.n_qubits) if initial is None else np.array(initial, dtype=float)
    if spins.shape != (program.n_qubits, 3):
        raise ConfigError(f"initial spins must be ({program.n_qubits}, 3), got {spins.shape}")
    eng = _ClassicalEngine(program, step)
    eng.advance(spins, 0.0, t_end)
    _check_spin_norms(spins, f"at t={t_end}")
    return spins


@dataclass(frozen=True, eq=False)
class ClassicalRecord:
    """Per-probe spin configurations of one classical run."""

    probe_times: tuple
    spins: np.ndarray  # (n_probes, n, 3)
    norm_drifts: tuple

    @property
    def n_probes(self) -> int:
        return len(self.probe_times)

    @property
    def n_sites(self) -> int:
        return int(self.spins.shape[1])


def crc_run_program(program: RydbergProgram, schedule: ProbeSchedule,
                    step: float | None = None) -> ClassicalRecord:
    """Classical twin of ``qsim.run_program``: same probe protocol and modes."""
    times = schedule.probe_times
    if times[-1] > program.total_time + 1e-12:
        raise ConfigError(f"probe time {times[-1]} exceeds total_time {program.total_time}")
    n = program.n_qubits
    out = np.empty((len(times), n, 3))
    drifts = []

    if schedule.snapshot_mode:
        eng = _ClassicalEngine(program, step)
        spins = _down_spins(n)
        t_prev = 0.0
        for k, t in enumerate(times):
            eng.advance(spins, t_prev, t)
            drifts.append(_check_spin_norms(spins, f"at probe t={t}"))
            spins /= np.linalg.norm(spins, axis=1, keepdims=True)
            out[k] = spins
            t_prev = t
    else:
        plateau = program.rabi.max_abs()
        for k, t in enumerate(times):
            if schedule.include_rampdown:
                rabi = Waveform.trapezoid(plateau, t, schedule.ramp)
            else:
                rabi = Waveform.ramp_up(plateau, t, schedule.ramp)
            sub = program.truncated(t, rabi=rabi)
            eng = _ClassicalEngine(sub, step)
            spins = _down_spins(n)
            eng.advance(spins, 0.0, t)
            drifts.append(_check_spin_norms(spins, f"at probe t={t}"))
            spins /= np.linalg.norm(spins, axis=1, keepdims=True)
            out[k] = spins

    return ClassicalRecord(times, out, tuple(drifts))


def crc_expectations(record: ClassicalRecord, obs: ObservableSpec) -> np.ndarray:
    """(n_probes, n_features) features: S_i^z singles, S_i^z S_j^z pairs.

    Same layout as ``qsim.exact_expectations`` so the two backends are
    interchangeable downstream.
    """
    sz = record.spins[:, :, 2]
    cols = [sz[:, i] for i in obs.singles]
    cols += [sz[:, i] * sz[:, j] for i, j in obs.pairs]
    return np.stack(cols, axis=1)


def crc_energy(program: RydbergProgram, spins: np.ndarray, t: float) -> float:
    """Conserved energy for constant drives; integration diagnostic."""
    vmat = interaction_matrix(program.array, program.constants)
    om = float(program.rabi(t))
    delta = program.detuning_at(t)
    sz = spins[:, 2]
    e = 0.5 * om * spins[:, 0].sum() - 0.5 * float(delta @ sz)
    one_z = 1.0 + sz
    e += 0.125 * float(one_z @ vmat @ one_z)  # (1/4) sum_{i<j}
    return e
