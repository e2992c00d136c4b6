"""Mean-field Hawkes systems with 1/sqrt(N) jumps and their diffusion limit."""
from .model import (JumpDistribution, ModelSpec, RateFunction, beta, default_epsilon,
                    is_sharp_regime, k_T, validate)
from .rng import Stream, derive_seed

__all__ = [
    "JumpDistribution", "ModelSpec", "RateFunction", "Stream", "beta", "default_epsilon",
    "derive_seed", "is_sharp_regime", "k_T", "validate",
]
__version__ = "0.1.0"
