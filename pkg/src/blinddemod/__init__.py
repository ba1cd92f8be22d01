"""Recovering two signals from their entrywise product under ReLU generative priors."""
from .gen_net import GeneratorNetwork, forward, sample_network
from .solver import DegenerateIterateError, IteratePair, SolverConfig, run

__all__ = [
    "GeneratorNetwork",
    "forward",
    "sample_network",
    "DegenerateIterateError",
    "IteratePair",
    "SolverConfig",
    "run",
]
