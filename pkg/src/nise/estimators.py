"""OLS, two-stage least squares and the no-instrument NISE estimator.

All three report coefficients in the same label order: endogenous
regressors first (the non-dependent columns of ``Y``), then the columns
of ``X``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from nise._linalg import deficient_columns, project, qr_solve, require_full_rank
from nise.dataset import DesignMatrices
from nise.errors import (
    ConditioningError,
    ConfigError,
    InsufficientDataError,
    NormalizationError,
)

__all__ = [
    "DOF_CONVENTIONS",
    "METHODS",
    "Coefficients",
    "NiseSolution",
    "dof_absorbed",
    "fit",
    "nise",
    "ols",
    "se_classical",
    "tsls",
]

METHODS = ("ols", "nise", "tsls")
DOF_CONVENTIONS = ("plain", "periods", "within")

NORMALIZATION_ATOL = 1e-12
EIGEN_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class NiseSolution:
    c: np.ndarray
    beta_raw: np.ndarray
    gamma_normalized: np.ndarray
    rho_squared: float
    eigenvalues: np.ndarray
    normalize_index: int


@dataclass(frozen=True)
class Coefficients:
    labels: tuple[str, ...]
    values: np.ndarray
    residuals: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)
    # inverse of the second-stage cross-product, for classical SEs
    bread: np.ndarray | None = field(default=None, repr=False)
    solution: NiseSolution | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.residuals)

    def __getitem__(self, label: str) -> float:
        return float(self.values[self.labels.index(label)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.values.tolist()))


def _labels(prefix: str, k: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{j}" for j in range(k))


def _bread(M: np.ndarray) -> np.ndarray:
    _, R = np.linalg.qr(M)
    Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
    return Rinv @ Rinv.T


def ols(y: np.ndarray, X: np.ndarray, labels: Sequence[str] | None = None) -> Coefficients:
    """Least squares of ``y`` on the columns of ``X`` (no intercept is added)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, K = X.shape
    labels = tuple(labels) if labels is not None else _labels("x", K)
    if K >= n:
        raise InsufficientDataError(f"OLS needs K < n; got K = {K}, n = {n}")
    require_full_rank(X, labels, "OLS regressor matrix")
    b = qr_solve(X, y)
    resid = y - X @ b
    rss = float(resid @ resid)
    return Coefficients(
        labels=labels,
        values=b,
        residuals=resid,
        method="OLS",
        diagnostics={"residual_ss": rss, "sigma2": rss / (n - K), "dof": n - K},
        bread=_bread(X),
    )


def tsls(
    y: np.ndarray,
    X_en: np.ndarray,
    X_ex: np.ndarray,
    Z: np.ndarray | None,
    labels: Sequence[str] | None = None,
) -> Coefficients:
    """Two-stage least squares with instrument set ``[X_ex | Z]``.

    Residuals use the actual endogenous regressors, not their fitted values.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    X_en = np.asarray(X_en, dtype=float).reshape(n, -1)
    X_ex = np.asarray(X_ex, dtype=float).reshape(n, -1)
    Z = np.empty((n, 0)) if Z is None else np.asarray(Z, dtype=float).reshape(n, -1)
    E, F, L = X_en.shape[1], X_ex.shape[1], Z.shape[1]
    labels = tuple(labels) if labels is not None else _labels("x", E + F)

    if E == 0:
        out = ols(y, X_ex, labels)
        return Coefficients(
            labels=out.labels,
            values=out.values,
            residuals=out.residuals,
            method="TSLS",
            diagnostics=out.diagnostics,
            bread=out.bread,
        )
    if L < E:
        raise ConditioningError(
            f"first stage: {L} excluded instruments for {E} endogenous regressors"
        )
    W = np.column_stack([X_ex, Z])
    w_labels = (*labels[E:], *_labels("z", L))
    bad = deficient_columns(W)
    if bad:
        raise ConditioningError(
            "first stage: instrument matrix is rank deficient; dependent columns: "
            + ", ".join(w_labels[j] for j in bad)
        )
    fitted = project(W, X_en)
    M = np.column_stack([fitted, X_ex])
    bad = deficient_columns(M)
    if bad:
        raise ConditioningError(
            "second stage: projected regressors are rank deficient; dependent columns: "
            + ", ".join(labels[j] for j in bad)
        )
    b = qr_solve(M, y)
    resid = y - np.column_stack([X_en, X_ex]) @ b
    rss = float(resid @ resid)
    K = E + F
    return Coefficients(
        labels=labels,
        values=b,
        residuals=resid,
        method="TSLS",
        diagnostics={"residual_ss": rss, "sigma2": rss / (n - K), "dof": n - K},
        bread=_bread(M),
    )


def nise(design: DesignMatrices, normalize_on: str | None = None) -> Coefficients:
    """NISE: least-variance linear combination of ``Y`` unexplained by ``X``.

    The canonical vector ``c`` solves ``(Y'P_X Y) c = rho2 (Y'Y) c`` for the
    largest ``rho2`` with ``c'Y'Yc = 1``; ``beta_raw`` is the OLS fit of
    ``Yc`` on ``X``. The equation is then divided through by the element of
    ``c`` belonging to ``normalize_on`` (the dependent variable by default).

    The generalized problem is reduced to a symmetric one by whitening with
    the triangular factor ``R`` of ``Y = QR`` (the Cholesky factor of ``Y'Y``
    computed without forming ``Y'Y``).
    """
    Y, X = design.Y, design.X
    n, G = Y.shape
    if G < 1:
        raise ConfigError("NISE needs at least one endogenous column")
    norm_label = design.dependent if normalize_on is None else normalize_on
    if norm_label not in design.y_labels:
        raise ConfigError(f"normalization variable {norm_label!r} is not a column of Y")
    k = design.y_labels.index(norm_label)
    require_full_rank(X, design.x_labels, "exogenous block X")

    Qy, R = np.linalg.qr(Y)
    rdiag = np.abs(np.diag(R))
    if rdiag.min() <= 1e-12 * rdiag.max():
        raise ConditioningError("Y'Y is not positive definite (endogenous columns are collinear)")
    if X.shape[1]:
        Qx, _ = np.linalg.qr(X)
        B = Qx.T @ Qy
    else:
        B = np.zeros((0, G))
    # S = R^-T (Y'P_X Y) R^-1, up to the orthogonal sign change between R and chol(Y'Y)
    S = B.T @ B
    evals, evecs = np.linalg.eigh((S + S.T) / 2)
    rho2 = float(np.clip(evals[-1], 0.0, 1.0))
    diagnostics: dict = {"warnings": []}
    if G >= 2:
        gap = evals[-1] - evals[-2]
        if gap <= EIGEN_TIE_RTOL * max(abs(evals[-1]), np.finfo(float).tiny):
            diagnostics["warnings"].append(
                f"top canonical correlations nearly tied (gap {gap:.3e}); "
                "the equation is weakly identified"
            )

    c = sla.solve_triangular(R, evecs[:, -1])
    c = c / np.linalg.norm(Y @ c)
    if abs(c[k]) < NORMALIZATION_ATOL:
        raise NormalizationError(
            f"canonical coefficient on {norm_label!r} is {c[k]:.3e}; cannot normalize on it"
        )
    if c[k] < 0:
        c = -c
    Yc = Y @ c
    beta_raw = qr_solve(X, Yc) if X.shape[1] else np.zeros(0)
    u = Yc - X @ beta_raw
    rss = float(u @ u)

    others = [j for j in range(G) if j != k]
    gamma_norm = c / c[k]
    values = np.concatenate([-gamma_norm[others], beta_raw / c[k]])
    labels = (*(design.y_labels[j] for j in others), *design.x_labels)
    diagnostics.update(
        rho_squared=rho2,
        lagrange_value=1.0 - rho2,
        residual_ss=rss,
        residual_ss_normalized=rss / c[k] ** 2,
        eigenvalues=evals.tolist(),
    )
    return Coefficients(
        labels=labels,
        values=values,
        residuals=u / c[k],
        method="NISE",
        diagnostics=diagnostics,
        solution=NiseSolution(
            c=c,
            beta_raw=beta_raw,
            gamma_normalized=gamma_norm,
            rho_squared=rho2,
            eigenvalues=evals,
            normalize_index=k,
        ),
    )


def fit(design: DesignMatrices, method: str) -> Coefficients:
    """Run ``method`` (ols, tsls or nise) on a design."""
    m = method.lower()
    y, X_en, X_ex = design.Y[:, 0], design.Y[:, 1:], design.X
    labels = (*design.y_labels[1:], *design.x_labels)
    if m == "ols":
        return ols(y, np.column_stack([X_en, X_ex]), labels)
    if m == "tsls":
        if design.L == 0 and X_en.shape[1] > 0:
            raise ConfigError("TSLS requested but no instruments are named")
        return tsls(y, X_en, X_ex, design.Z, labels)
    if m == "nise":
        return nise(design)
    raise ConfigError(f"unknown estimator {method!r}; choose from {', '.join(METHODS)}")


def dof_absorbed(design: DesignMatrices, convention: str) -> int:
    """Degrees of freedom used up by the demeaning, under a named convention.

    ``plain`` ignores them, ``periods`` counts absorbed period effects,
    ``within`` also counts the group means.
    """
    if convention == "plain":
        return 0
    if convention == "periods":
        return design.absorbed_periods
    if convention == "within":
        return design.absorbed_periods + design.absorbed_groups
    raise ConfigError(
        f"unknown dof convention {convention!r}; choose from {', '.join(DOF_CONVENTIONS)}"
    )


def se_classical(coeffs: Coefficients, dof_absorbed: int = 0) -> np.ndarray:
    """Homoskedastic standard errors ``sqrt(s2 * diag((M'M)^-1))``.

    ``s2 = residual_ss / (n - K - dof_absorbed)``; for TSLS ``M`` holds the
    projected regressors.
    """
    if coeffs.bread is None:
        raise ValueError(f"{coeffs.method} has no analytic standard errors; use the bootstrap")
    K = len(coeffs.values)
    dof = coeffs.n - K - dof_absorbed
    if dof <= 0:
        raise InsufficientDataError(f"non-positive residual degrees of freedom ({dof})")
    s2 = float(coeffs.residuals @ coeffs.residuals) / dof
    return np.sqrt(s2 * np.diag(coeffs.bread))
