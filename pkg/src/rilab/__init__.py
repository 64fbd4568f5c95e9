"""Numerical laboratory for continuous self-similar radial Euler flows with amplitude blowup."""

__version__ = "0.1.0"

from .params import GasParams, is_relevant, kappa_isentropic, lambda_thresholds  # noqa: E402,F401
