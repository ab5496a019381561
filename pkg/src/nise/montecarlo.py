"""Two-equation simultaneous system for checking estimator bias and consistency.

Structural form::

    y1 = gamma * y2 + beta * x + u1     (equation of interest)
    y2 = feedback * y1 + strength * z + u2

``x`` and ``z`` are independent standard normals and ``(u1, u2)`` is
bivariate normal with scales ``noise_sd`` and correlation ``error_corr``.
NISE sees ``Y = [y1, y2]`` and ``X = [x]``; TSLS also gets ``Z = [z]``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from nise.dataset import DesignMatrices
from nise.errors import ConfigError, UnstableSystemError
from nise.estimators import fit
from nise.robust_scale import qn

__all__ = [
    "ExperimentCell",
    "SyntheticDGP",
    "experiment",
    "nise_plim",
    "ols_plim",
    "simulate",
    "simulate_with_disturbances",
]

MIN_REPS = 100
TARGET = "y2"


@dataclass(frozen=True)
class SyntheticDGP:
    gamma_true: float = -1.0
    beta_true: float = 1.0
    feedback: float = 0.5
    instrument_strength: float = 1.0
    noise_sd: tuple[float, float] = (1.0, 1.0)
    error_corr: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "noise_sd", tuple(float(s) for s in self.noise_sd))
        if len(self.noise_sd) != 2 or min(self.noise_sd) <= 0:
            raise ConfigError("noise_sd must be two positive scales")
        if not -1.0 < self.error_corr < 1.0:
            raise ConfigError("error_corr must lie strictly inside (-1, 1)")
        if self.instrument_strength == 0:
            raise ConfigError("instrument_strength = 0 leaves the system unidentified")
        radius = abs(self.gamma_true * self.feedback) ** 0.5
        if radius >= 1.0:
            raise UnstableSystemError(
                f"spectral radius {radius:.4g} >= 1: the system has no stable reduced form"
            )

    @property
    def structural(self) -> np.ndarray:
        """``A`` in ``A @ [y1, y2] = [beta x + u1, strength z + u2]``."""
        return np.array([[1.0, -self.gamma_true], [-self.feedback, 1.0]])

    @property
    def disturbance_cov(self) -> np.ndarray:
        s1, s2 = self.noise_sd
        c = self.error_corr * s1 * s2
        return np.array([[s1 * s1, c], [c, s2 * s2]])


def simulate_with_disturbances(
    dgp: SyntheticDGP, n: int, seed: int | Sequence[int]
) -> tuple[DesignMatrices, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    u = rng.multivariate_normal(np.zeros(2), dgp.disturbance_cov, size=n, method="cholesky")
    rhs = np.column_stack([dgp.beta_true * x + u[:, 0], dgp.instrument_strength * z + u[:, 1]])
    Y = np.linalg.solve(dgp.structural, rhs.T).T
    design = DesignMatrices(
        Y=Y, X=x[:, None], Z=z[:, None], y_labels=("y1", "y2"), x_labels=("x",), z_labels=("z",)
    )
    return design, u


def simulate(dgp: SyntheticDGP, n: int, seed: int | Sequence[int]) -> DesignMatrices:
    """Draw ``n`` observations from the reduced form of the system."""
    return simulate_with_disturbances(dgp, n, seed)[0]


def _population_moments(dgp: SyntheticDGP) -> np.ndarray:
    """Second-moment matrix of ``(y1, y2, x, z)``."""
    Ainv = np.linalg.inv(dgp.structural)
    # [y1, y2] = Ainv @ (Bx [x, z] + u)
    Bx = np.array([[dgp.beta_true, 0.0], [0.0, dgp.instrument_strength]])
    load = Ainv @ Bx
    Syy = load @ load.T + Ainv @ dgp.disturbance_cov @ Ainv.T
    Syx = load
    return np.block([[Syy, Syx], [Syx.T, np.eye(2)]])


def ols_plim(dgp: SyntheticDGP) -> float:
    """Probability limit of the OLS coefficient on ``y2`` (y1 regressed on y2, x)."""
    S = _population_moments(dgp)
    r = [1, 2]
    b = np.linalg.solve(S[np.ix_(r, r)], S[r, 0])
    return float(b[0])


def nise_plim(dgp: SyntheticDGP) -> float:
    """Probability limit of the NISE coefficient on ``y2`` (``X = [x]``)."""
    S = _population_moments(dgp)
    Syy, Syx, Sxx = S[:2, :2], S[:2, 2:3], S[2:3, 2:3]
    num = Syx @ np.linalg.solve(Sxx, Syx.T)
    w, v = np.linalg.eig(np.linalg.solve(Syy, num))
    c = np.real(v[:, np.argmax(np.real(w))])
    return float(-c[1] / c[0])


@dataclass(frozen=True)
class ExperimentCell:
    n: int
    estimator: str
    mean_bias: float
    median_bias: float
    rmse: float
    median_abs_error: float
    qn_dispersion: float
    reps: int


def experiment(
    dgp: SyntheticDGP,
    n_grid: Sequence[int],
    reps: int,
    seed: int = 0,
    methods: Sequence[str] = ("ols", "tsls", "nise"),
) -> list[ExperimentCell]:
    """Bias and dispersion of each estimator's ``y2`` coefficient across replications.

    Replication ``r`` at sample size ``n`` uses the stream ``(seed, n, r)`` and
    all estimators share that sample.
    """
    if reps < MIN_REPS:
        raise ConfigError(f"reps must be at least {MIN_REPS}, got {reps}")
    cells = []
    for n in n_grid:
        est = {m: np.empty(reps) for m in methods}
        for r in range(reps):
            design = simulate(dgp, int(n), [int(seed), int(n), r])
            for m in methods:
                est[m][r] = fit(design, m)[TARGET]
        for m in methods:
            err = est[m] - dgp.gamma_true
            cells.append(
                ExperimentCell(
                    n=int(n),
                    estimator=m.upper(),
                    mean_bias=float(err.mean()),
                    median_bias=float(np.median(err)),
                    rmse=float(np.sqrt(np.mean(err**2))),
                    median_abs_error=float(np.median(np.abs(err))),
                    qn_dispersion=qn(est[m]).value,
                    reps=reps,
                )
            )
    return cells
