"""Distributed-RIS downlink with probabilistic semantic communication.

Simulates a multi-antenna BS serving single-antenna users through several
reconfigurable intelligent surfaces and maximises the sum semantic-aware rate
by alternating over association, compression ratios, beamforming and power.
"""

from .scenario import NetworkScenario, SolverOptions, load_scenario
from .system import Solution, SystemModel, optimize

__all__ = ["NetworkScenario", "SolverOptions", "Solution", "SystemModel", "load_scenario", "optimize"]
__version__ = "0.1.0"
