"""Fisher-information-guided federated training of variational quantum classifiers."""
from .qsim import CircuitLayout, StateVector, amplitude_encode
from .seeds import derive_seed
from .vqc import Task

__version__ = "0.1.0"
