"""Pairs bootstrap: resample whole observation rows, re-estimate, summarize robustly.

Each draw gets its own random stream keyed by ``(master_seed, draw_index)``,
so the replicates do not depend on how draws are scheduled across workers.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from nise.dataset import DesignMatrices, ModelSpec, PanelData, prepare_design
from nise.errors import ConfigError, DataError, InsufficientDataError, NumericalError
from nise.estimators import Coefficients, fit
from nise.robust_scale import scale as scale_fn

__all__ = [
    "DifferenceTest",
    "ReplicateMatrix",
    "bootstrap_estimates",
    "difference_test",
    "differences",
    "joint_replicates",
    "pairs_resample",
    "robust_se",
]

log = logging.getLogger(__name__)

DEFAULT_B = 1000
FAILURE_WARN_FRACTION = 0.05


def pairs_resample(n: int, draw_index: int, master_seed: int) -> np.ndarray:
    """``n`` row indices drawn uniformly with replacement for one bootstrap draw."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng([int(master_seed), int(draw_index)])
    return rng.integers(0, n, size=n)


@dataclass(frozen=True)
class ReplicateMatrix:
    replicates: np.ndarray
    labels: tuple[str, ...]
    master_seed: int
    B: int
    failures: int
    method: str = ""
    draw_index: np.ndarray | None = field(default=None, repr=False)
    warnings: tuple[str, ...] = ()

    def column(self, label: str) -> np.ndarray:
        return self.replicates[:, self.labels.index(label)]


def _as_design(data: PanelData | DesignMatrices, spec: ModelSpec | None) -> DesignMatrices:
    if isinstance(data, DesignMatrices):
        return data
    if spec is None:
        raise ConfigError("a ModelSpec is required to bootstrap from a PanelData")
    return prepare_design(data, spec)


def _one_draw(
    design: DesignMatrices, methods: Sequence[str], b: int, master_seed: int, redemean: bool
) -> list[np.ndarray] | None:
    idx = pairs_resample(design.n, b, master_seed)
    sample = design.take(idx)
    try:
        if redemean:
            sample = sample.redemeaned()
        out = [fit(sample, m).values for m in methods]
    except (NumericalError, DataError, np.linalg.LinAlgError):
        return None
    if not all(np.all(np.isfinite(v)) for v in out):
        return None
    return out


def joint_replicates(
    data: PanelData | DesignMatrices,
    methods: Sequence[str],
    *,
    spec: ModelSpec | None = None,
    B: int = DEFAULT_B,
    master_seed: int = 0,
    workers: int = 1,
    redemean: bool = False,
) -> dict[str, ReplicateMatrix]:
    """Bootstrap several estimators on the same resampled rows.

    A draw on which any estimator fails is dropped for all of them, so the
    returned matrices stay row-aligned.
    """
    if B < 2:
        raise ConfigError(f"bootstrap needs B >= 2, got {B}")
    design = _as_design(data, spec)
    methods = list(dict.fromkeys(m.lower() for m in methods))
    full = {m: fit(design, m) for m in methods}

    def draw(b: int):
        return _one_draw(design, methods, b, master_seed, redemean)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(draw, range(B)))
    else:
        results = [draw(b) for b in range(B)]

    kept = [b for b, r in enumerate(results) if r is not None]
    failures = B - len(kept)
    if failures == B:
        raise NumericalError(f"all {B} bootstrap draws failed")
    warnings: tuple[str, ...] = ()
    if failures / B > FAILURE_WARN_FRACTION:
        msg = f"{failures} of {B} bootstrap draws failed (rank loss under resampling)"
        log.warning(msg)
        warnings = (msg,)
    out = {}
    for j, m in enumerate(methods):
        reps = np.array([results[b][j] for b in kept])
        out[m] = ReplicateMatrix(
            replicates=reps,
            labels=full[m].labels,
            master_seed=master_seed,
            B=B,
            failures=failures,
            method=full[m].method,
            draw_index=np.array(kept),
            warnings=warnings,
        )
    return out


def bootstrap_estimates(
    data: PanelData | DesignMatrices,
    method: str,
    *,
    spec: ModelSpec | None = None,
    B: int = DEFAULT_B,
    master_seed: int = 0,
    workers: int = 1,
    redemean: bool = False,
) -> ReplicateMatrix:
    """Pairs-bootstrap replicates of one estimator's coefficients."""
    return joint_replicates(
        data, [method], spec=spec, B=B, master_seed=master_seed,
        workers=workers, redemean=redemean,
    )[method.lower()]


def robust_se(reps: ReplicateMatrix, scale: str = "qn", correction: bool = False) -> np.ndarray:
    """Column-wise dispersion of the replicates."""
    if reps.replicates.shape[0] < 2:
        raise InsufficientDataError("fewer than two successful bootstrap replicates")
    return np.array(
        [scale_fn(col, scale, correction).value for col in reps.replicates.T]
    )


@dataclass(frozen=True)
class DifferenceTest:
    label: str
    point_diff: float
    robust_se: float
    estimators: tuple[str, str]
    scale: str = "qn"

    @property
    def ratio(self) -> float:
        return self.point_diff / self.robust_se if self.robust_se > 0 else float("inf")


def differences(
    fit_a: Coefficients,
    fit_b: Coefficients,
    reps_a: ReplicateMatrix,
    reps_b: ReplicateMatrix,
    labels: Sequence[str],
    scale: str = "qn",
    correction: bool = False,
) -> list[DifferenceTest]:
    """Estimator A minus estimator B per label, from row-aligned replicates."""
    if reps_a.draw_index is not None and reps_b.draw_index is not None:
        if not np.array_equal(reps_a.draw_index, reps_b.draw_index):
            raise ValueError("replicates were not generated on shared draws")
    tests = []
    for label in labels:
        if label not in fit_a.labels or label not in fit_b.labels:
            raise ConfigError(f"{label!r} is not a coefficient of both estimators")
        diff = reps_a.column(label) - reps_b.column(label)
        tests.append(
            DifferenceTest(
                label=label,
                point_diff=fit_a[label] - fit_b[label],
                robust_se=scale_fn(diff, scale, correction).value,
                estimators=(fit_a.method, fit_b.method),
                scale=scale,
            )
        )
    return tests


def difference_test(
    data: PanelData | DesignMatrices,
    estimator_a: str,
    estimator_b: str,
    labels: Sequence[str],
    *,
    spec: ModelSpec | None = None,
    B: int = DEFAULT_B,
    master_seed: int = 0,
    scale: str = "qn",
    workers: int = 1,
    redemean: bool = False,
) -> list[DifferenceTest]:
    """Bootstrap test of A - B with both estimators run on the same resamples."""
    design = _as_design(data, spec)
    reps = joint_replicates(
        design, [estimator_a, estimator_b], B=B, master_seed=master_seed,
        workers=workers, redemean=redemean,
    )
    a, b = estimator_a.lower(), estimator_b.lower()
    return differences(fit(design, a), fit(design, b), reps[a], reps[b], labels, scale)
