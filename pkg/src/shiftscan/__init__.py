"""shiftscan: simulator and signal pipeline for a SIPO shift-register
analog sensor readout, from flip-flop timing up to LSTM tactile estimation."""

__version__ = "0.1.0"

from . import estimation, protocol, readout, scenarios, world  # noqa: F401
