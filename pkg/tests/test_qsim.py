"""Quantum simulator: analytic dynamics, dense-expm cross-checks, sampling."""

import math

import numpy as np
import pytest

from rydres.errors import ConfigError, NumericalError
from rydres.model import AtomArray, ProbeSchedule, RydbergProgram, Waveform
from rydres.qsim import (EvolutionRecord, ObservableSpec, ShotTable,
                         StateVector, estimated_expectations,
                         exact_expectations, evolve, run_program,
                         sample_bitstrings, shot_counts, step_size)

from _oracles import expm_state

TWO_PI = 2 * math.pi


def _one_atom(omega=TWO_PI, delta=0.0):
    return RydbergProgram(AtomArray(np.array([[0.0, 0.0]])), Waveform.constant(omega),
                          global_detuning=Waveform.constant(delta),
                          total_time=4.0, hardware_ramps=False)


# ----------------------------------------------------------- single atom #

def test_resonant_rabi_flopping():
    prog = _one_atom()
    for t in (0.1, 0.25, 0.5, 0.93, 2.0):
        p_r = abs(evolve(prog, t).amplitudes[1]) ** 2
        assert p_r == pytest.approx(math.sin(TWO_PI * t / 2) ** 2, abs=1e-6)

def test_full_population_transfer_at_half_period():
    p_r = abs(evolve(_one_atom(), 0.5).amplitudes[1]) ** 2
    assert p_r == pytest.approx(1.0, abs=1e-6)

def test_detuned_rabi_formula():
    om, dl = TWO_PI, 2 * TWO_PI
    prog = _one_atom(om, dl)
    w = math.hypot(om, dl)
    for t in (0.17, 0.4, 1.3):
        p_r = abs(evolve(prog, t).amplitudes[1]) ** 2
        assert p_r == pytest.approx(om**2 / w**2 * math.sin(w * t / 2) ** 2, abs=1e-6)

def test_detuning_sign_enters_phase():
    # H uses -Delta n: the r-amplitude phase must rotate as exp(+i Delta t)
    prog = _one_atom(TWO_PI / 10, 5 * TWO_PI)
    amp = evolve(prog, 0.3).amplitudes[1]
    oracle = expm_state(prog, 0.3)[1]
    assert amp == pytest.approx(oracle, abs=1e-8)


# ------------------------------------------------------------- blockade #

def test_two_atom_blockade_against_dense_oracle():
    arr = AtomArray(np.array([[0.0, 0.0], [5.0, 0.0]]))
    prog = RydbergProgram(arr, Waveform.constant(TWO_PI), total_time=2.0,
                          hardware_ramps=False)
    for t in np.linspace(0.1, 2.0, 20):
        psi = evolve(prog, t).amplitudes
        oracle = expm_state(prog, t)
        fidelity = abs(np.vdot(oracle, psi)) ** 2
        assert fidelity >= 1 - 1e-8
        assert abs(psi[3]) ** 2 < 0.01  # |rr> stays empty at 5 um

def test_three_atom_dense_cross_check_with_detunings():
    arr = AtomArray(np.array([[0.0, 0.0], [8.0, 0.0], [8.0, 7.0]]))
    prog = RydbergProgram(arr, Waveform.constant(1.7 * TWO_PI),
                          global_detuning=Waveform.constant(0.9 * TWO_PI),
                          local_detuning=Waveform.constant(-1.3 * TWO_PI),
                          local_pattern=np.array([1.0, 0.3, 0.6]),
                          total_time=1.5, hardware_ramps=False)
    psi = evolve(prog, 1.5).amplitudes
    oracle = expm_state(prog, 1.5)
    assert abs(np.vdot(oracle, psi)) ** 2 >= 1 - 1e-8


# ----------------------------------------------------------- integration #

def test_step_halving_converges_below_1e7():
    arr = AtomArray.chain([7.9, 9.2, 8.4])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.5, 0.05),
                          global_detuning=Waveform.constant(TWO_PI), total_time=1.5)
    sched = ProbeSchedule.uniform(3, 0.5, snapshot_mode=True)
    h = step_size(prog)
    obs = ObservableSpec.all_pairs(4)
    e1 = exact_expectations(run_program(prog, sched, step=h), obs)
    e2 = exact_expectations(run_program(prog, sched, step=h / 2), obs)
    assert np.max(np.abs(e1 - e2)) < 1e-7

def test_norm_drift_budget_enforced():
    arr = AtomArray(np.array([[0.0, 0.0], [5.0, 0.0]]))
    prog = RydbergProgram(arr, Waveform.constant(TWO_PI), total_time=2.0,
                          hardware_ramps=False)
    with pytest.raises(NumericalError, match="drift"):
        evolve(prog, 2.0, step=5e-3)  # far too coarse for V ~ 350 rad/us

def test_probabilities_normalized_at_probes():
    arr = AtomArray.chain([8.0, 8.5])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.0, 0.05), total_time=1.0)
    rec = run_program(prog, ProbeSchedule.uniform(2, 0.5, snapshot_mode=True))
    assert np.allclose(rec.probabilities.sum(axis=1), 1.0, atol=1e-12)
    assert max(rec.norm_drifts) < 1e-9

def test_snapshot_final_probe_matches_plain_evolve():
    arr = AtomArray.chain([7.5, 8.8])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.0, 0.05),
                          global_detuning=Waveform.constant(0.5 * TWO_PI),
                          total_time=1.0)
    rec = run_program(prog, ProbeSchedule((0.4, 1.0), snapshot_mode=True), keep_states=True)
    direct = evolve(prog)
    amp = direct.amplitudes / direct.norm
    fidelity = abs(np.vdot(amp, rec.states[1].amplitudes)) ** 2
    assert fidelity == pytest.approx(1.0, abs=1e-12)

def test_rampdown_toggle_changes_expectations():
    # regression snapshot from this implementation (self-consistency values)
    arr = AtomArray.chain([8.0])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.0, 0.05), total_time=1.0)
    obs = ObservableSpec.all_pairs(2)
    with_rd = exact_expectations(run_program(prog, ProbeSchedule((1.0,))), obs)
    without = exact_expectations(run_program(prog, ProbeSchedule((1.0,), include_rampdown=False)), obs)
    assert np.max(np.abs(with_rd - without)) > 1e-3
    assert with_rd[0, 0] == pytest.approx(with_rd[0, 1], abs=1e-9)  # symmetric pair

def test_probe_past_total_time_rejected():
    arr = AtomArray.chain([8.0])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.0, 0.05), total_time=1.0)
    with pytest.raises(ConfigError, match="total_time"):
        run_program(prog, ProbeSchedule((0.5, 1.5)))


# ----------------------------------------------------------- observables #

def test_exact_expectations_on_bell_like_state():
    # (|gg> + |rr>)/sqrt(2): <Z_i> = 0, <Z_0 Z_1> = 1
    probs = np.zeros((1, 4))
    probs[0, 0] = probs[0, 3] = 0.5
    rec = EvolutionRecord((1.0,), probs, 2, (0.0,))
    e = exact_expectations(rec, ObservableSpec.all_pairs(2))
    assert np.allclose(e, [[0.0, 0.0, 1.0]])

def test_observable_spec_layouts():
    assert ObservableSpec.all_pairs(4).n_features == 4 + 6
    assert ObservableSpec.chain_neighbors(5).pairs == ((0, 1), (1, 2), (2, 3), (3, 4))
    grid = ObservableSpec.grid_neighbors((2, 3))
    assert len(grid.pairs) == 7  # 4 horizontal + 3 vertical
    assert ObservableSpec.auto(9).pairs == ObservableSpec.all_pairs(9).pairs
    labels = ObservableSpec.all_pairs(3).labels()
    assert labels == ["Z_0", "Z_1", "Z_2", "ZZ_0_1", "ZZ_0_2", "ZZ_1_2"]
    with pytest.raises(ConfigError, match="i < j"):
        ObservableSpec((0,), ((1, 0),))


# -------------------------------------------------------------- sampling #

def _ghz_record(n=3):
    probs = np.zeros((2, 2**n))
    probs[:, 0] = probs[:, -1] = 0.5
    return EvolutionRecord((0.5, 1.0), probs, n, (0.0, 0.0))

def test_sampling_matches_distribution():
    rec = _ghz_record()
    table = sample_bitstrings(rec, 20000, np.random.default_rng(3))
    counts = shot_counts(table, 0)
    assert counts[0] + counts[7] == 20000
    # binomial(20000, 0.5): 4 sigma is ~283
    assert abs(counts[0] - 10000) < 300

def test_estimated_expectations_converge_to_exact():
    arr = AtomArray.chain([8.3, 7.7])
    prog = RydbergProgram(arr, Waveform.trapezoid(TWO_PI, 1.0, 0.05), total_time=1.0)
    rec = run_program(prog, ProbeSchedule.uniform(2, 0.5, snapshot_mode=True))
    obs = ObservableSpec.all_pairs(3)
    exact = exact_expectations(rec, obs)
    rng = np.random.default_rng(11)
    errs = []
    for n_s in (100, 10000):
        est = estimated_expectations(sample_bitstrings(rec, n_s, rng), obs)
        errs.append(np.max(np.abs(est - exact)))
    assert errs[1] < errs[0]
    assert errs[1] < 0.05

def test_shot_table_bitstrings_site_order():
    codes = np.array([[1, 4]], dtype=np.uint32)  # site 0 excited, then site 2
    table = ShotTable(3, (1.0,), codes)
    assert table.bitstrings(0) == ["100", "001"]

def test_sampling_deterministic_under_seed():
    rec = _ghz_record()
    a = sample_bitstrings(rec, 500, np.random.default_rng(42)).codes
    b = sample_bitstrings(rec, 500, np.random.default_rng(42)).codes
    assert np.array_equal(a, b)

def test_state_vector_validation():
    with pytest.raises(ConfigError):
        StateVector(np.zeros(3, dtype=complex), 2)
    g = StateVector.ground(2)
    assert g.norm == 1.0 and g.probabilities()[0] == 1.0
