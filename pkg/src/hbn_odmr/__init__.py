"""Simulation and fitting toolkit for spin-1 optically addressable defects."""

from .errors import *  # noqa: F401,F403
from .fitting import FitResult, FreqFieldData, Peak, PeakModel, contrast_ratio_table, fit_eq2, fit_lorentzians
from .lac import LacResult, MixingCurve, contrast_vs_field, find_lac, overlap_scan, pl_vs_field
from .photodynamics import (
    PopulationState,
    PulsedProtocol,
    PulseSequence,
    RateModel,
    Segment,
    contrast_ratio,
    cw_odmr,
    evolve,
    pulsed_odmr,
    rabi_trace,
    steady_state,
)
from .spectra import LineshapeConfig, Spectrum, cw_spectrum, eq2_frequencies, frequency_vs_field_scan, hyperfine_manifold
from .spin_model import FieldPoint, NucleusSpec, SpinSystem, diagonalize, solve, transition_table

__version__ = "0.1.0"
