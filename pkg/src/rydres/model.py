"""Core model of a driven Rydberg atom array.

Everything downstream (simulators, encoders, the CLI) speaks in the types
defined here: atom geometries in micrometers, piecewise-linear drive
waveforms in angular frequency units (rad/us), and a ``RydbergProgram`` that
bundles geometry plus drives for one evolution.  The Hamiltonian implemented
by the simulators is

    H(t) = Omega(t)/2 * sum_j (|g><r| + |r><g|)_j
         + sum_{j<k} V_jk n_j n_k
         - sum_j (Delta_g(t) + alpha_j * Delta_l(t)) n_j

with van der Waals couplings V_jk = c6 / |r_j - r_k|^6 and site weights
alpha_j in [0, 1] for the local detuning line.

Frequencies: quoted "megahertz" control values are ordinary frequencies and
are converted to angular units on entry (1 MHz -> 2*pi rad/us).  All module
internals are angular.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

# ---------------------------------------------------------------- constants #

#: rad/us * um^6; van der Waals coefficient of the clock-to-Rydberg ladder
#: used throughout (862690 MHz um^6 in ordinary-frequency units).
C6_DEFAULT = 862690.0 * 2.0 * math.pi

#: multiply an ordinary-frequency value in MHz by this to get rad/us
MHZ_TO_ANGULAR = 2.0 * math.pi

#: positions on hardware are programmed on a 0.01 um grid
POSITION_GRID_UM = 0.01


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants of the atom array; only c6 for now."""

    c6: float = C6_DEFAULT

    def __post_init__(self):
        if not (self.c6 > 0 and math.isfinite(self.c6)):
            raise ConfigError(f"c6 must be positive and finite, got {self.c6}")


DEFAULT_CONSTANTS = PhysicalConstants()


# ----------------------------------------------------------------- geometry #


def _as_positions(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.ndim != 2 or pos.shape[1] not in (1, 2):
        raise ConfigError(f"positions must be (N,) , (N,1) or (N,2), got shape {pos.shape}")
    if pos.shape[1] == 1:
        pos = np.hstack([pos, np.zeros_like(pos)])
    return pos


@dataclass(frozen=True, eq=False)
class AtomArray:
    """Static atom geometry, positions in micrometers (N x 2).

    ``rounded=True`` asserts positions sit on the hardware 0.01 um grid.
    """

    positions: np.ndarray
    rounded: bool = False

    def __post_init__(self):
        pos = _as_positions(self.positions)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] < 1:
            raise ConfigError("atom array needs at least one atom")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("atom positions must be finite")
        if self.rounded:
            snapped = np.round(pos / POSITION_GRID_UM) * POSITION_GRID_UM
            if not np.allclose(pos, snapped, atol=1e-9, rtol=0.0):
                raise ConfigError("rounded=True but positions are off the 0.01 um grid")
        n = pos.shape[0]
        if n > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            dist[np.diag_indices(n)] = np.inf
            j, k = np.unravel_index(np.argmin(dist), dist.shape)
            if dist[j, k] < 1e-6:
                raise ConfigError(f"atoms {j} and {k} coincide (separation {dist[j, k]:.2e} um)")

    @property
    def n_qubits(self) -> int:
        return int(self.positions.shape[0])

    @staticmethod
    def chain(gaps_um, rounded: bool = False) -> "AtomArray":
        """1D chain from consecutive gaps: positions 0, g0, g0+g1, ..."""
        gaps = np.asarray(gaps_um, dtype=np.float64)
        x = np.concatenate([[0.0], np.cumsum(gaps)])
        if rounded:
            x = np.round(x / POSITION_GRID_UM) * POSITION_GRID_UM
        return AtomArray(np.stack([x, np.zeros_like(x)], axis=1), rounded=rounded)


def interaction_matrix(array: AtomArray, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Pairwise V_jk = c6 / d_jk^6 in rad/us; symmetric, zero diagonal."""
    pos = array.positions
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = (diff**2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    v = constants.c6 / d2**3
    np.fill_diagonal(v, 0.0)
    return v


def blockade_radius(rabi: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Distance at which V equals the Rabi frequency, (c6/Omega)^(1/6) in um."""
    if rabi <= 0:
        raise ConfigError(f"blockade radius needs Omega > 0, got {rabi}")
    return (constants.c6 / rabi) ** (1.0 / 6.0)


def blockade_ratio(rabi: float, spacing_um: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Blockade radius over lattice spacing, dimensionless."""
    if spacing_um <= 0:
        raise ConfigError(f"spacing must be positive, got {spacing_um}")
    return blockade_radius(rabi, constants) / spacing_um


# ---------------------------------------------------------------- waveforms #


@dataclass(frozen=True, eq=False)
class Waveform:
    """Piecewise-linear waveform: breakpoint times (us) and values (rad/us).

    Times start at 0 and increase strictly; evaluation clamps to the first
    and last value outside the breakpoint range (hold semantics).
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        v = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if t.shape != v.shape or t.ndim != 1 or t.size < 1:
            raise ConfigError(f"waveform needs matching 1D times/values, got {t.shape} vs {v.shape}")
        if t[0] != 0.0:
            raise ConfigError(f"waveform must start at t=0, got t[0]={t[0]}")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ConfigError("waveform times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ConfigError("waveform breakpoints must be finite")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @staticmethod
    def constant(value: float) -> "Waveform":
        return Waveform(np.array([0.0]), np.array([float(value)]))

    @staticmethod
    def trapezoid(plateau: float, duration: float, ramp: float) -> "Waveform":
        """0 -> plateau -> 0 with linear ramps of the given length."""
        if duration < 2 * ramp:
            raise ConfigError(f"duration {duration} too short for two ramps of {ramp}")
        if ramp <= 0:
            raise ConfigError(f"ramp must be positive, got {ramp}")
        return Waveform(
            np.array([0.0, ramp, duration - ramp, duration]),
            np.array([0.0, plateau, plateau, 0.0]),
        )

    @staticmethod
    def ramp_up(plateau: float, duration: float, ramp: float) -> "Waveform":
        """0 -> plateau, then hold to the end (no final ramp-down)."""
        if duration <= ramp or ramp <= 0:
            raise ConfigError(f"need 0 < ramp < duration, got ramp={ramp} duration={duration}")
        return Waveform(np.array([0.0, ramp, duration]), np.array([0.0, plateau, plateau]))


ZERO_WAVEFORM = Waveform.constant(0.0)


# ----------------------------------------------------------------- programs #


@dataclass(frozen=True, eq=False)
class RydbergProgram:
    """One evolution: geometry plus drive waveforms over [0, total_time].

    ``local_pattern`` holds the per-site weights alpha_j in [0, 1] that scale
    the local detuning waveform.  ``hardware_ramps=True`` additionally
    enforces that the Rabi drive starts and ends at zero, as on hardware;
    analytic test programs with constant Omega set it False.
    """

    array: AtomArray
    rabi: Waveform
    global_detuning: Waveform = ZERO_WAVEFORM
    local_detuning: Waveform = ZERO_WAVEFORM
    local_pattern: np.ndarray | None = None
    total_time: float = 0.0
    hardware_ramps: bool = True
    constants: PhysicalConstants = field(default=DEFAULT_CONSTANTS)

    def __post_init__(self):
        n = self.array.n_qubits
        if self.local_pattern is None:
            pat = np.zeros(n)
        else:
            pat = np.asarray(self.local_pattern, dtype=np.float64).copy()
        if pat.shape != (n,):
            raise ConfigError(f"local_pattern must have shape ({n},), got {pat.shape}")
        if np.any(pat < 0) or np.any(pat > 1) or not np.all(np.isfinite(pat)):
            raise ConfigError("local_pattern weights must lie in [0, 1]")
        pat.setflags(write=False)
        object.__setattr__(self, "local_pattern", pat)
        if not (self.total_time > 0 and math.isfinite(self.total_time)):
            raise ConfigError(f"total_time must be positive, got {self.total_time}")
        for name, wf in (("rabi", self.rabi), ("global_detuning", self.global_detuning),
                         ("local_detuning", self.local_detuning)):
            if wf.end_time > self.total_time + 1e-12:
                raise ConfigError(f"{name} waveform runs past total_time "
                                  f"({wf.end_time} > {self.total_time})")
        if self.hardware_ramps:
            if self.rabi(0.0) != 0.0 or self.rabi(self.total_time) != 0.0:
                raise ConfigError("hardware programs must ramp the Rabi drive to zero "
                                  "at t=0 and t=total_time")

    @property
    def n_qubits(self) -> int:
        return self.array.n_qubits

    def detuning_at(self, t) -> np.ndarray:
        """Per-site detuning Delta_j(t) = Delta_g(t) + alpha_j Delta_l(t)."""
        return self.global_detuning(t) + self.local_pattern * self.local_detuning(t)

    def truncated(self, t_end: float, rabi: Waveform | None = None) -> "RydbergProgram":
        """Copy with a new end time (and optionally a rebuilt Rabi drive)."""
        def _clip(wf: Waveform) -> Waveform:
            if wf.end_time <= t_end:
                return wf
            keep = wf.times < t_end
            t = np.append(wf.times[keep], t_end)
            v = np.append(wf.values[keep], wf(t_end))
            return Waveform(t, v)

        # derived programs skip the hardware-ramp check: a rebuilt Rabi pulse
        # may legitimately end mid-plateau (no-rampdown probes)
        return replace(
            self,
            rabi=rabi if rabi is not None else _clip(self.rabi),
            global_detuning=_clip(self.global_detuning),
            local_detuning=_clip(self.local_detuning),
            total_time=t_end,
            hardware_ramps=False,
        )


@dataclass(frozen=True)
class ProbeSchedule:
    """When to measure, and how the per-probe Rabi pulse is shaped.

    Default protocol runs one independent evolution per probe time with a
    fresh ramp-up (and, if ``include_rampdown``, a ramp-down finishing at the
    probe time).  ``snapshot_mode`` instead records mid-states of a single
    continuous evolution of the full program.
    """

    probe_times: tuple
    ramp: float = 0.05
    include_rampdown: bool = True
    snapshot_mode: bool = False

    def __post_init__(self):
        times = tuple(float(t) for t in self.probe_times)
        object.__setattr__(self, "probe_times", times)
        if len(times) < 1:
            raise ConfigError("probe schedule needs at least one probe time")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ConfigError(f"probe times must increase strictly: {times}")
        if self.ramp <= 0:
            raise ConfigError(f"ramp must be positive, got {self.ramp}")
        if times[0] < 2 * self.ramp - 1e-12:
            raise ConfigError(f"first probe time {times[0]} cannot fit two ramps of {self.ramp}")

    @property
    def n_probes(self) -> int:
        return len(self.probe_times)

    @staticmethod
    def uniform(n_probes: int, dt: float, **kw) -> "ProbeSchedule":
        """n probes at dt, 2*dt, ..., n*dt."""
        if n_probes < 1 or dt <= 0:
            raise ConfigError(f"need n_probes >= 1 and dt > 0, got {n_probes}, {dt}")
        return ProbeSchedule(tuple((k + 1) * dt for k in range(n_probes)), **kw)


# ------------------------------------------------- diagonal in Ising z-form #


def z_representation(program: RydbergProgram, at_time: float | None = None):
    """Rewrite the diagonal part at time t as an Ising energy in z_j = 1 - 2 n_j.

    Returns ``(fields, couplings, constant)`` with couplings J_jk = V_jk / 4
    (symmetric, zero diagonal), fields

        h_j = -(Delta_j(t) + (1/2) sum_k V_jk) / 2,

    and the constant offset such that for every occupation pattern n

        sum_{j<k} V_jk n_j n_k + sum_j Delta_j(t) n_j
            = sum_{j<k} J_jk z_j z_k + sum_j h_j z_j + constant.

    ``at_time`` defaults to the program mid-time (irrelevant for constant
    detunings).
    """
    t = 0.5 * program.total_time if at_time is None else at_time
    v = interaction_matrix(program.array, program.constants)
    delta = program.detuning_at(t)
    couplings = v / 4.0
    np.fill_diagonal(couplings, 0.0)
    fields = -0.5 * (delta + 0.5 * v.sum(axis=1))
    constant = float(v[np.triu_indices_from(v, k=1)].sum() / 4.0 + delta.sum() / 2.0)
    return fields, couplings, constant


def diagonal_energy(fields: np.ndarray, couplings: np.ndarray, constant: float,
                    occupations: np.ndarray) -> float:
    """Evaluate the z-form energy for a 0/1 occupation pattern (z = 1 - 2n)."""
    z = 1.0 - 2.0 * np.asarray(occupations, dtype=np.float64)
    return float(z @ couplings @ z / 2.0 + fields @ z + constant)


# ------------------------------------------------------------- serialization #

_PROGRAM_SCHEMA = "rydres.program/1"


def _waveform_to_json(wf: Waveform, scale: float) -> dict:
    return {"times": (wf.times).tolist(), "values": (wf.values / scale).tolist()}


def _waveform_from_json(obj, scale: float, name: str) -> Waveform:
    try:
        return Waveform(np.asarray(obj["times"], dtype=float),
                        np.asarray(obj["values"], dtype=float) * scale)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad waveform object for {name!r}: {exc}") from exc


def program_to_json(program: RydbergProgram, frequency_unit: str = "rad_per_us") -> dict:
    """JSON-safe dict with explicit units; frequency_unit 'rad_per_us' or 'MHz'."""
    if frequency_unit not in ("rad_per_us", "MHz"):
        raise ConfigError(f"frequency_unit must be 'rad_per_us' or 'MHz', got {frequency_unit!r}")
    scale = 1.0 if frequency_unit == "rad_per_us" else MHZ_TO_ANGULAR
    return {
        "schema": _PROGRAM_SCHEMA,
        "units": {"frequency": frequency_unit, "position": "um", "time": "us"},
        "positions": program.array.positions.tolist(),
        "rounded": program.array.rounded,
        "rabi": _waveform_to_json(program.rabi, scale),
        "global_detuning": _waveform_to_json(program.global_detuning, scale),
        "local_detuning": _waveform_to_json(program.local_detuning, scale),
        "local_pattern": program.local_pattern.tolist(),
        "total_time": program.total_time,
        "hardware_ramps": program.hardware_ramps,
        "c6": program.constants.c6 / (scale if frequency_unit == "MHz" else 1.0),
    }


def program_from_json(obj: dict) -> RydbergProgram:
    """Inverse of program_to_json; accepts either frequency unit."""
    if not isinstance(obj, dict):
        raise ConfigError(f"program JSON must be an object, got {type(obj).__name__}")
    if obj.get("schema") != _PROGRAM_SCHEMA:
        raise ConfigError(f"unknown program schema {obj.get('schema')!r}")
    unit = obj.get("units", {}).get("frequency")
    if unit not in ("rad_per_us", "MHz"):
        raise ConfigError(f"program JSON frequency unit must be 'rad_per_us' or 'MHz', got {unit!r}")
    scale = 1.0 if unit == "rad_per_us" else MHZ_TO_ANGULAR
    try:
        array = AtomArray(np.asarray(obj["positions"], dtype=float), rounded=bool(obj["rounded"]))
        constants = PhysicalConstants(c6=float(obj.get("c6", C6_DEFAULT / scale)) * scale)
        return RydbergProgram(
            array=array,
            rabi=_waveform_from_json(obj["rabi"], scale, "rabi"),
            global_detuning=_waveform_from_json(obj["global_detuning"], scale, "global_detuning"),
            local_detuning=_waveform_from_json(obj["local_detuning"], scale, "local_detuning"),
            local_pattern=np.asarray(obj["local_pattern"], dtype=float),
            total_time=float(obj["total_time"]),
            hardware_ramps=bool(obj["hardware_ramps"]),
            constants=constants,
        )
    except KeyError as exc:
        raise ConfigError(f"program JSON missing key {exc}") from exc


def save_program(program: RydbergProgram, path, frequency_unit: str = "rad_per_us") -> None:
    with open(path, "w") as fh:
        json.dump(program_to_json(program, frequency_unit), fh, indent=2)


def load_program(path) -> RydbergProgram:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"program file {path} is not valid JSON: {exc}") from exc
    return program_from_json(obj)
