"""Quantum reservoir computing on simulated Rydberg atom arrays.

A state-vector simulator for driven atom arrays (≤14 qubits), a classical
spin-precession twin, feature encodings into array geometry and drive
waveforms, shot sampling with hardware-style noise, from-scratch SVM
learners, kernel-geometry analysis of quantum-vs-classical embeddings, and
an experiment pipeline with uncertainty quantification — all importable
here and scriptable through the ``rydres`` CLI.
"""

from .errors import ConfigError, DataError, NumericalError, RydresError
from .model import (AtomArray, PhysicalConstants, ProbeSchedule,
                    RydbergProgram, Waveform, blockade_radius, blockade_ratio,
                    interaction_matrix)
from .qsim import (EvolutionRecord, ObservableSpec, ShotTable, evolve,
                   exact_expectations, run_program, sample_bitstrings)
from .csim import ClassicalRecord, crc_evolve, crc_expectations, crc_run_program
from .encoding import (Dataset, EncodingSpec, build_image_dataset,
                       build_window_dataset, program_for, regime_report)
from .embeddings import (EmbeddingSet, consistency_rho, embed_classical,
                         embed_exact, embed_shots)
from .svm import accuracy, gaussian_gram, linear_gram, nmse, svc_fit, svr_fit
from .kernelgeo import (DELTA_GRID, delta_sweep, embedding_kernel,
                        geometry_result, synthetic_labels)
from .noise import HARDWARE_NOISE, NoiseSpec
from .config import ExperimentConfig, load_config
from .pipeline import (emit_report, ingest, kernel_advantage_run,
                       run_experiment, simulate_dataset, uncertainty_instances)

__version__ = "1.0.0"

__all__ = [
    "AtomArray", "ClassicalRecord", "ConfigError", "DELTA_GRID", "DataError",
    "Dataset", "EmbeddingSet", "EncodingSpec", "EvolutionRecord",
    "ExperimentConfig", "HARDWARE_NOISE", "NoiseSpec", "NumericalError",
    "ObservableSpec", "PhysicalConstants", "ProbeSchedule", "RydbergProgram",
    "RydresError", "ShotTable", "Waveform", "accuracy", "blockade_radius",
    "blockade_ratio", "build_image_dataset", "build_window_dataset",
    "consistency_rho", "crc_evolve", "crc_expectations", "crc_run_program",
    "delta_sweep", "embed_classical", "embed_exact", "embed_shots",
    "embedding_kernel", "emit_report", "evolve", "exact_expectations",
    "gaussian_gram", "geometry_result", "ingest", "interaction_matrix",
    "kernel_advantage_run", "linear_gram", "load_config", "nmse",
    "program_for", "regime_report", "run_experiment", "run_program",
    "sample_bitstrings", "simulate_dataset", "svc_fit", "svr_fit",
    "synthetic_labels", "uncertainty_instances",
]
