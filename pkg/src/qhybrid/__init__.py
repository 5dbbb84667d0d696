"""Hybrid quantum-classical image classification toolkit."""

from .bench import BenchResult, RunConfig, run_bench
from .classifier import CNNClassifier, DenseClassifier, TrainConfig, TrainReport, train
from .data import Dataset, GammaCorrector, SplitSpec, generate_synthetic, load_dataset, split
from .encoders import (
    FRQIEncoder,
    NEQREncoder,
    QCNNEncoder,
    encode_images,
    extract_features,
    frqi_decode,
    frqi_encode,
    neqr_decode,
    neqr_encode,
)
from .exceptions import QHybridError, ValidationError
from .noise import NoiseSpec, noisy_encode_images
from .statevector import Gate, QuantumCircuit, StateVector

__version__ = "0.1.0"

__all__ = [
    "BenchResult",
    "RunConfig",
    "run_bench",
    "CNNClassifier",
    "DenseClassifier",
    "TrainConfig",
    "TrainReport",
    "train",
    "Dataset",
    "GammaCorrector",
    "SplitSpec",
    "generate_synthetic",
    "load_dataset",
    "split",
    "FRQIEncoder",
    "NEQREncoder",
    "QCNNEncoder",
    "encode_images",
    "extract_features",
    "frqi_decode",
    "frqi_encode",
    "neqr_decode",
    "neqr_encode",
    "QHybridError",
    "ValidationError",
    "NoiseSpec",
    "noisy_encode_images",
    "Gate",
    "QuantumCircuit",
    "StateVector",
]
