"""Hardware imperfection model: position jitter and local-detuning miscalibration.

Two effects, deliberately simple:

* every shot retraps the atoms, so positions get an independent offset per
  atom and coordinate, uniform on [0, jitter] as specified (a positive bias;
  ``symmetric=True`` recenters to [-jitter/2, +jitter/2] for comparison);
* the site-resolved detuning weights are miscalibrated by a fixed relative
  factor (1 + eta_j), eta uniform on [-rel, rel], drawn once per run because
  the calibration error does not fluctuate shot to shot.

Simulating every shot separately is wasteful, so shots are grouped into at
most ``max_realizations`` geometry realizations and sampled from each
realization's probability table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .model import AtomArray, RydbergProgram, Waveform


@dataclass(frozen=True)
class NoiseSpec:
    """Noise amplitudes: position jitter in um, relative detuning error."""

    position_jitter_um: float = 0.0
    detuning_rel: float = 0.0
    symmetric_positions: bool = False
    max_realizations: int = 20

    def __post_init__(self):
        if self.position_jitter_um < 0:
            raise ConfigError(f"position jitter must be >= 0, got {self.position_jitter_um}")
        if not 0.0 <= self.detuning_rel < 1.0:
            raise ConfigError(f"relative detuning error must lie in [0, 1), got {self.detuning_rel}")
        if self.max_realizations < 1:
            raise ConfigError(f"max_realizations must be >= 1, got {self.max_realizations}")

    @property
    def active(self) -> bool:
        return self.position_jitter_um > 0 or self.detuning_rel > 0


#: amplitudes matching current neutral-atom machines
HARDWARE_NOISE = NoiseSpec(position_jitter_um=0.2, detuning_rel=0.1)


def perturb_positions(array: AtomArray, jitter_um: float, rng: np.random.Generator,
                      symmetric: bool = False) -> AtomArray:
    """Fresh trap offsets for one realization (positions leave the grid)."""
    if jitter_um == 0:
        return array
    offsets = rng.uniform(0.0, jitter_um, size=array.positions.shape)
    if symmetric:
        offsets -= 0.5 * jitter_um
    return AtomArray(array.positions + offsets, rounded=False)


def detuning_factors(n_sites: int, rel: float, rng: np.random.Generator) -> np.ndarray:
    """Per-site factors (1 + eta), eta ~ U[-rel, rel]; drawn once per run."""
    if rel == 0:
        return np.ones(n_sites)
    return 1.0 + rng.uniform(-rel, rel, size=n_sites)


def apply_detuning_factors(program: RydbergProgram, factors: np.ndarray) -> RydbergProgram:
    """Scale the local-detuning weights site by site.

    The scaled weights can exceed 1, which the program forbids, so any
    excess is folded into the waveform amplitude instead.
    """
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (program.n_qubits,):
        raise ConfigError(f"need {program.n_qubits} detuning factors, got {factors.shape}")
    if np.any(factors <= 0):
        raise ConfigError("detuning factors must stay positive")
    pattern = program.local_pattern * factors
    top = pattern.max() if pattern.size else 0.0
    wf = program.local_detuning
    if top > 1.0:
        pattern = pattern / top
        wf = Waveform(wf.times, wf.values * top)
    return replace(program, local_pattern=pattern, local_detuning=wf,
                   hardware_ramps=program.hardware_ramps)


def realization_programs(program: RydbergProgram, spec: NoiseSpec,
                         rng: np.random.Generator, n_realizations: int):
    """Programs for each geometry realization, sharing one calibration draw."""
    base = apply_detuning_factors(
        program, detuning_factors(program.n_qubits, spec.detuning_rel, rng))
    out = []
    for _ in range(n_realizations):
        arr = perturb_positions(base.array, spec.position_jitter_um, rng,
                                symmetric=spec.symmetric_positions)
        out.append(replace(base, array=arr))
    return out


def shots_per_realization(n_shots: int, max_realizations: int = 20) -> np.ndarray:
    """Split a shot budget over min(n_shots, max_realizations) groups."""
    if n_shots < 1:
        raise ConfigError(f"need at least one shot, got {n_shots}")
    r = min(n_shots, max_realizations)
    base, rem = divmod(n_shots, r)
    counts = np.full(r, base, dtype=np.int64)
    counts[:rem] += 1
    return counts
