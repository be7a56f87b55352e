"""Ptychographic phase retrieval by proximal algorithms."""

__version__ = "0.1.0"

from .dataset import Dataset, read_dataset, write_dataset
from .engines import EngineConfig, ReconstructionState, init_state, run
from .estimators import GAUSSIAN, POISSON, NoiseModel
from .kernels import BACKEND
from .metrics import fit_ambiguity, rmse
from .model import ScanPositions, forward, project_modulus, project_translation
from .sim import SimulationSpec, simulate

__all__ = [
    "BACKEND", "Dataset", "EngineConfig", "GAUSSIAN", "NoiseModel", "POISSON",
    "ReconstructionState", "ScanPositions", "SimulationSpec", "fit_ambiguity",
    "forward", "init_state", "project_modulus", "project_translation",
    "read_dataset", "rmse", "run", "simulate", "write_dataset",
]
