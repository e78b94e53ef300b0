"""Simulation of conditional Berry-phase gates on two coupled spin-1/2 nuclei."""

__version__ = "0.1.0"

from .kernel import RFControl, SpinSystem, build_hamiltonian, slice_propagator  # noqa: E402
from .sequence import (  # noqa: E402
    AmplitudeSweep, Delay, HardPulse, PhaseSweep, Sequence,
    adiabaticity_report, build_fig1, build_naive_block, discretize,
)
from .geometry import (  # noqa: E402
    berry_phase_cone, differential_phase, observed_controlled_phase,
    optimize_pi_gate, solid_angle,
)
from .engine import (  # noqa: E402
    SimConfig, dephasing_experiment, jitter_robustness, measure_phases, sweep_nu1,
)
from .parser import format_sequence, parse_sequence  # noqa: E402

__all__ = [
    "RFControl", "SpinSystem", "build_hamiltonian", "slice_propagator",
    "AmplitudeSweep", "Delay", "HardPulse", "PhaseSweep", "Sequence",
    "adiabaticity_report", "build_fig1", "build_naive_block", "discretize",
    "berry_phase_cone", "differential_phase", "observed_controlled_phase",
    "optimize_pi_gate", "solid_angle",
    "SimConfig", "dephasing_experiment", "jitter_robustness", "measure_phases", "sweep_nu1",
    "format_sequence", "parse_sequence",
]
