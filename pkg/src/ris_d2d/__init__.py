from .bcd_driver import BcdOptions, SolutionReport, run_bcd, solve_baseline_no_ris, solve_baseline_random_phase
from .channel_model import ChannelSet, PhaseVector, default_geometry, effective_channels, generate_channels
from .config import ScenarioFile, SystemConfig

__all__ = [
    "BcdOptions",
    "ChannelSet",
    "PhaseVector",
    "ScenarioFile",
    "SolutionReport",
    "SystemConfig",
    "default_geometry",
    "effective_channels",
    "generate_channels",
    "run_bcd",
    "solve_baseline_no_ris",
    "solve_baseline_random_phase",
]
