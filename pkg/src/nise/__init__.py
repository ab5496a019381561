"""Simultaneous-equation estimation without instruments (NISE), with OLS and TSLS."""

from nise.bootstrap import (
    DifferenceTest,
    ReplicateMatrix,
    bootstrap_estimates,
    difference_test,
    pairs_resample,
    robust_se,
)
from nise.dataset import (
    DesignMatrices,
    ModelSpec,
    PanelData,
    build_design,
    crime_spec,
    load_crime,
    load_panel,
    log_transform,
    prepare_design,
    within_demean,
)
from nise.estimators import Coefficients, fit, nise, ols, se_classical, tsls
from nise.robust_scale import mad, qn, sd

__version__ = "0.1.0"

__all__ = [
    "Coefficients",
    "DesignMatrices",
    "DifferenceTest",
    "ModelSpec",
    "PanelData",
    "ReplicateMatrix",
    "bootstrap_estimates",
    "build_design",
    "crime_spec",
    "difference_test",
    "fit",
    "load_crime",
    "load_panel",
    "log_transform",
    "mad",
    "nise",
    "ols",
    "pairs_resample",
    "prepare_design",
    "qn",
    "robust_se",
    "sd",
    "se_classical",
    "tsls",
    "within_demean",
]
