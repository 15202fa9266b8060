"""Preprocessing and data-to-program encodings."""

import math

import numpy as np
import pytest

from rydres.errors import ConfigError, DataError
from rydres.encoding import (Dataset, EncodingSpec, UnitScaler,
                             build_image_dataset, build_window_dataset,
                             downscale_images, encode_global_pulse,
                             encode_local, encode_position, pca_fit,
                             pca_transform, program_for, regime_report,
                             sliding_windows)
from rydres.model import interaction_matrix

TWO_PI = 2 * math.pi


# ------------------------------------------------------------ preprocessing #

def test_pca_recovers_dominant_direction():
    rng = np.random.default_rng(5)
    t = rng.normal(size=400)
    x = np.stack([t, t], axis=1) + rng.normal(scale=1e-3, size=(400, 2))
    model = pca_fit(x, 1)
    assert np.allclose(np.abs(model.components[0]), [1 / math.sqrt(2)] * 2, atol=1e-3)
    assert model.components[0][0] > 0  # deterministic sign
    proj = pca_transform(model, x)
    assert proj.shape == (400, 1)

def test_pca_components_orthonormal():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(300, 10))
    model = pca_fit(x, 4)
    assert np.allclose(model.components @ model.components.T, np.eye(4), atol=1e-10)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)  # sorted descending

def test_pca_transform_is_projection():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(100, 6))
    model = pca_fit(x, 6)
    recon = pca_transform(model, x) @ model.components + model.mean
    assert np.allclose(recon, x, atol=1e-8)

def test_unit_scaler_clips_with_train_stats():
    sc = UnitScaler.fit(np.array([[0.0, 10.0], [2.0, 30.0]]))
    out = sc.transform(np.array([[1.0, 20.0], [-5.0, 50.0]]))
    assert np.allclose(out, [[0.5, 0.5], [0.0, 1.0]])

def test_sliding_windows_layout():
    feats, targets = sliding_windows([0, 1, 2, 3, 4], 2)
    assert np.array_equal(feats, [[0, 1], [1, 2], [2, 3]])
    assert np.array_equal(targets, [2, 3, 4])
    with pytest.raises(DataError):
        sliding_windows([1, 2], 2)

def test_downscale_block_average_and_norm():
    img = np.arange(16, dtype=float).reshape(1, 4, 4)
    out = downscale_images(img, (2, 2), per_image_norm=False)
    assert np.allclose(out[0], [[2.5, 4.5], [10.5, 12.5]])
    normed = downscale_images(img, (2, 2))
    assert normed.max() == 1.0 and np.allclose(normed[0], out[0] / 12.5)
    with pytest.raises(DataError):
        downscale_images(img, (3, 3))


# ----------------------------------------------------------------- datasets #

def test_dataset_validation():
    feats = np.random.default_rng(0).random((10, 3))
    with pytest.raises(DataError, match="overlap"):
        Dataset(feats, np.zeros(10), "classification", np.array([0, 1]), np.array([1, 2]))
    with pytest.raises(DataError, match="\\[0, 1\\]"):
        Dataset(feats + 5, np.zeros(10), "classification", np.array([0]), np.array([1]))

def test_build_image_dataset_shapes_and_range():
    rng = np.random.default_rng(1)
    images = rng.random((50, 6, 6)) * 255
    labels = rng.integers(0, 2, 50)
    ds = build_image_dataset(images, labels, pca_dim=4, n_train=30, n_test=20)
    assert ds.features.shape == (50, 4)
    assert ds.features[ds.train_idx].min() == 0.0
    assert ds.features[ds.train_idx].max() == 1.0
    assert ds.task == "classification" and ds.targets.dtype == np.int64

def test_build_window_dataset_default_split():
    series = np.sin(np.linspace(0, 20, 300))
    ds = build_window_dataset(series, width=10, n_train=200, n_test=80)
    assert ds.features.shape == (290, 10)
    assert len(ds.train_idx) == 200 and len(ds.test_idx) == 80
    assert ds.train_idx[-1] + 1 == ds.test_idx[0]

def test_build_window_dataset_target_ranges():
    series = np.arange(100, dtype=float)
    ds = build_window_dataset(series, width=5, n_train=0, n_test=0,
                              train_targets=(10, 40), test_targets=(41, 60))
    assert len(ds.train_idx) == 31 and len(ds.test_idx) == 20
    # window with target index 10 contains raw points 5..9
    assert ds.targets[ds.train_idx[0]] > ds.features[ds.train_idx[0]].max()


# ---------------------------------------------------------------- encoders #

def _pos_spec(**kw):
    base = dict(kind="position", n_features=8, lam=3.0, d0_um=10.0)
    base.update(kw)
    return EncodingSpec(**base)

def test_position_gap_formula():
    spec = _pos_spec(round_positions=False)
    arr = encode_position(np.full(8, 1.0), spec)
    gaps = np.diff(arr.positions[:, 0])
    assert np.allclose(gaps, 10 * 4 ** (-1 / 6))
    assert gaps[0] == pytest.approx(7.937005, abs=1e-5)

def test_position_bond_interaction_is_modulated():
    spec = _pos_spec(round_positions=False)
    x = np.linspace(0, 1, 8)
    arr = encode_position(x, spec)
    v = interaction_matrix(arr)
    v0 = 862690 * TWO_PI / 10**6
    bonds = np.array([v[i, i + 1] for i in range(8)])
    assert np.allclose(bonds, v0 * (1 + 3 * x), rtol=1e-12)

def test_position_rounding_snaps_to_grid():
    arr = encode_position(np.full(8, 0.37), _pos_spec())
    assert arr.rounded
    snapped = np.round(arr.positions * 100) / 100
    assert np.allclose(arr.positions, snapped, atol=1e-9)

def test_position_grid_geometry():
    spec = EncodingSpec(kind="position", n_features=4, geometry="grid",
                        grid_shape=(2, 3), lam=4.0, round_positions=False)
    arr = encode_position(np.array([0.2, 0.8, 0.5, 0.1]), spec)
    assert arr.n_qubits == 6
    assert np.allclose(arr.positions[:3, 1], 0.0)
    assert np.allclose(arr.positions[3:, 1], 10.0)  # second row at dy
    assert arr.positions[0, 0] == 0.0 and arr.positions[3, 0] == 0.0

def test_position_min_gap_guard():
    with pytest.raises(ConfigError, match="minimum"):
        _pos_spec(lam=3.0, d0_um=4.5)

def test_local_encoding_sets_pattern_and_detunings():
    spec = EncodingSpec(kind="local", n_features=12, delta_g=4 * TWO_PI,
                        delta_l_max=-8 * TWO_PI)
    x = np.zeros(12)
    x[0], x[5] = 1.0, 0.5
    prog = encode_local(x, spec)
    assert prog.n_qubits == 12
    assert np.allclose(np.diff(prog.array.positions[:, 0]), 10.0)
    d = prog.detuning_at(1.0)
    assert d[0] == pytest.approx((4 - 8) * TWO_PI)
    assert d[5] == pytest.approx((4 - 4) * TWO_PI)
    assert d[1] == pytest.approx(4 * TWO_PI)

def test_pulse_encoding_waveform_segments():
    spec = EncodingSpec(kind="pulse", n_features=10, n_qubits=12, rabi=3 * math.pi,
                        encode_max=12 * TWO_PI, n_probes=10, probe_dt=0.35)
    x = np.linspace(0, 1, 10)
    prog = encode_global_pulse(x, spec)
    wf = prog.global_detuning
    assert wf.times.size == 11  # ten segments, one per feature
    assert wf.values[-1] == wf.values[-2]  # final segment constant
    assert wf.times[-1] == pytest.approx(3.5)
    assert np.allclose(wf.values[:-1], 12 * TWO_PI * x)
    assert prog.rabi.max_abs() == pytest.approx(3 * math.pi)

def test_pulse_irregular_gaps():
    gaps = tuple(8.9 - g for g in np.random.default_rng(2).random(11))
    spec = EncodingSpec(kind="pulse", n_features=10, n_qubits=12,
                        irregular_gaps_um=gaps, n_probes=10, probe_dt=0.35)
    prog = encode_global_pulse(np.full(10, 0.5), spec)
    got = np.diff(prog.array.positions[:, 0])
    assert np.allclose(got, np.round(np.cumsum(gaps), 2) - np.round(np.cumsum((0,) + gaps[:-1]), 2),
                       atol=0.02)
    with pytest.raises(ConfigError, match="gaps"):
        EncodingSpec(kind="pulse", n_features=10, n_qubits=12, irregular_gaps_um=gaps[:5])

def test_encoders_reject_out_of_range_features():
    with pytest.raises(DataError, match="0, 1"):
        encode_position(np.full(8, 1.2), _pos_spec())
    with pytest.raises(DataError, match="features"):
        encode_local(np.zeros(3), EncodingSpec(kind="local", n_features=12))

def test_program_for_builds_valid_hardware_programs():
    rng = np.random.default_rng(3)
    specs = [
        _pos_spec(),
        EncodingSpec(kind="local", n_features=12),
        EncodingSpec(kind="pulse", n_features=10, n_qubits=12, n_probes=10, probe_dt=0.35),
    ]
    for spec in specs:
        prog = program_for(rng.random(spec.n_features), spec)
        assert prog.hardware_ramps
        assert prog.rabi(0.0) == 0.0 and prog.rabi(prog.total_time) == 0.0
        assert prog.total_time == pytest.approx(spec.total_time)
        sched = spec.schedule()
        assert sched.probe_times[-1] == pytest.approx(prog.total_time)


# ------------------------------------------------------------------- regime #

def test_regime_balanced_for_reference_position_config():
    spec = _pos_spec()
    prog = program_for(np.full(8, 0.5), spec)
    rep = regime_report(prog, spec)
    assert rep.in_regime and not rep.degenerate
    assert rep.scales["mixing"] == pytest.approx(TWO_PI)
    assert rep.scales["probe"] == pytest.approx(2 * TWO_PI)
    assert max(abs(r) for r in rep.ratios.values()) <= 0.5

def test_regime_flags_unbalanced_drive():
    spec = _pos_spec(rabi=64 * TWO_PI)
    prog = program_for(np.full(8, 0.5), spec)
    rep = regime_report(prog, spec)
    assert not rep.in_regime and not rep.degenerate

def test_regime_degenerate_when_scale_vanishes():
    spec = EncodingSpec(kind="local", n_features=4)
    prog = encode_local(np.zeros(4), spec)  # zero encoding amplitude
    rep = regime_report(prog, spec)
    assert rep.degenerate and not rep.in_regime

def test_regime_pulse_includes_encode_rate():
    spec = EncodingSpec(kind="pulse", n_features=10, n_qubits=12, rabi=3 * math.pi,
                        n_probes=10, probe_dt=0.35, d0_um=8.5)
    prog = program_for(np.full(10, 0.5), spec)
    rep = regime_report(prog, spec)
    assert "encode_rate" in rep.scales
    assert rep.scales["encode_rate"] == pytest.approx(TWO_PI / 0.35)
