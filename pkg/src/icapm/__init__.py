"""Conditional international CAPM with currency risk.

Multivariate GARCH(1,1)-in-mean estimation by Gaussian quasi-maximum
likelihood, robust Wald tests and risk-premium decomposition.
"""

__version__ = "0.1.0"

from .data_model import (
    Dataset,
    InstrumentPanel,
    RealFXInputs,
    ReturnsPanel,
    align,
    excess_returns,
    load_instruments,
    load_panel,
    real_fx_returns,
)
from .model_spec import ModelSpec, ParameterVector
from .optimizer import EstimationOptions, EstimationResult, estimate

__all__ = [
    "Dataset",
    "EstimationOptions",
    "EstimationResult",
    "InstrumentPanel",
    "ModelSpec",
    "ParameterVector",
    "RealFXInputs",
    "ReturnsPanel",
    "align",
    "estimate",
    "excess_returns",
    "load_instruments",
    "load_panel",
    "real_fx_returns",
]
