"""Dispersion estimators used to turn bootstrap replicates into standard errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QN_CONSTANT", "MAD_CONSTANT", "SCALES", "ScaleEstimate", "mad", "qn", "scale", "sd"]

QN_CONSTANT = 2.2219
MAD_CONSTANT = 1.4826
SCALES = ("qn", "mad", "sd")

# Croux & Rousseeuw (1992) small-sample factors for Qn, n = 2..9
_QN_SMALL_N = (0.399, 0.994, 0.512, 0.844, 0.611, 0.857, 0.669, 0.872)


@dataclass(frozen=True)
class ScaleEstimate:
    value: float
    estimator: str
    n: int
    correction_applied: bool = False

    def __float__(self) -> float:
        return self.value


def _vector(x, min_n: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size < min_n:
        raise ValueError(f"{name} needs at least {min_n} observations, got {a.size}")
    return a


def qn_correction(n: int) -> float:
    if n <= 9:
        return _QN_SMALL_N[n - 2]
    return n / (n + 1.4) if n % 2 else n / (n + 3.8)


def qn(x, correction: bool = False) -> ScaleEstimate:
    """Rousseeuw-Croux Qn: ``2.2219`` times the k-th smallest pairwise gap.

    With ``h = n // 2 + 1`` the order statistic is ``k = h (h - 1) / 2`` among
    all ``n (n - 1) / 2`` gaps ``|x_i - x_j|, i < j``.
    """
    a = _vector(x, 2, "qn")
    n = a.size
    h = n // 2 + 1
    k = h * (h - 1) // 2
    i, j = np.triu_indices(n, 1)
    gaps = np.abs(a[i] - a[j])
    value = QN_CONSTANT * float(np.partition(gaps, k - 1)[k - 1])
    if correction:
        value *= qn_correction(n)
    return ScaleEstimate(value, "QN", n, correction)


def mad(x) -> ScaleEstimate:
    """Median absolute deviation from the median, scaled by 1.4826."""
    a = _vector(x, 1, "mad")
    value = MAD_CONSTANT * float(np.median(np.abs(a - np.median(a))))
    return ScaleEstimate(value, "MAD", a.size)


def sd(x) -> ScaleEstimate:
    a = _vector(x, 2, "sd")
    return ScaleEstimate(float(np.std(a, ddof=1)), "SD", a.size)


def scale(x, name: str, correction: bool = False) -> ScaleEstimate:
    key = name.lower()
    if key == "qn":
        return qn(x, correction=correction)
    if key == "mad":
        return mad(x)
    if key == "sd":
        return sd(x)
    raise ValueError(f"unknown scale estimator {name!r}; choose from {', '.join(SCALES)}")
