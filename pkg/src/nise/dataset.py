"""Panel ingestion, transforms and design-matrix assembly.

The replication pipeline is log first, county demeaning second, then
(optionally) period effects, and finally the ``Y | X | Z`` blocks of the
structural equation ``Y gamma = X beta + u``.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import TextIO

import numpy as np

from nise._linalg import deficient_columns
from nise.errors import (
    ConditioningError,
    DomainError,
    InsufficientDataError,
    IntegrityError,
    ParseError,
    SchemaError,
    SpecError,
)

__all__ = [
    "CRIME_SCHEMA",
    "PERIOD_EFFECTS",
    "DesignMatrices",
    "ModelSpec",
    "PanelData",
    "absorb_effects",
    "build_design",
    "crime_spec",
    "dump_panel",
    "load_crime",
    "load_panel",
    "log_transform",
    "prepare_design",
    "transform_panel",
    "within_demean",
]

PERIOD_EFFECTS = ("none", "dummies", "absorb")

# Ecdat "Crime" headers; identical to the Cornwell-Trumbull distribution.
CRIME_SCHEMA: dict[str, str] = {
    "county": "county",
    "year": "year",
    "crime_rate": "crmrte",
    "prob_arrest": "prbarr",
    "prob_conviction": "prbconv",
    "prob_prison": "prbpris",
    "police_pc": "polpc",
    "wage_mfg": "wmfg",
    "mix": "mix",
    "tax_pc": "taxpc",
}

_SWEEP_TOL = 1e-14
_SWEEP_MAXITER = 10_000


def _level_order(keys: np.ndarray) -> list[str]:
    levels = list(dict.fromkeys(keys.tolist()))
    try:
        return sorted(levels, key=float)
    except ValueError:
        return sorted(levels)


@dataclass(frozen=True)
class PanelData:
    """Long-format panel: one row per (group, period)."""

    groups: np.ndarray
    periods: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        n = len(self.groups)
        if len(self.periods) != n:
            raise IntegrityError("groups and periods differ in length")
        for name, col in self.columns.items():
            if len(col) != n:
                raise IntegrityError(f"column {name!r} has {len(col)} rows, expected {n}")
        seen: dict[tuple[str, str], int] = {}
        for i, key in enumerate(zip(self.groups.tolist(), self.periods.tolist())):
            if key in seen:
                raise IntegrityError(
                    f"duplicate (group, period) {key} at rows {seen[key]} and {i}"
                )
            seen[key] = i

    @property
    def n(self) -> int:
        return len(self.groups)

    @property
    def n_groups(self) -> int:
        return len(set(self.groups.tolist()))

    @property
    def n_periods(self) -> int:
        return len(set(self.periods.tolist()))

    @property
    def balanced(self) -> bool:
        return self.n == self.n_groups * self.n_periods

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"column {name!r} not in panel") from None

    def with_columns(self, updates: Mapping[str, np.ndarray]) -> PanelData:
        cols = dict(self.columns)
        cols.update(updates)
        return replace(self, columns=cols)


def load_panel(
    source: TextIO | str | Path,
    schema: Mapping[str, str],
    *,
    group: str = "county",
    period: str = "year",
    delimiter: str = ",",
) -> PanelData:
    """Read delimited text with a header row into a :class:`PanelData`.

    ``schema`` maps logical names to physical headers. The ``group`` and
    ``period`` logical names become the panel keys; every other mapped
    column is parsed as a real. Numbers stored as quoted text are accepted.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return load_panel(fh, schema, group=group, period=period, delimiter=delimiter)

    for key in (group, period):
        if key not in schema:
            raise SchemaError(f"schema does not map the key column {key!r}")
    reader = csv.reader(source, delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("input has no header row") from None
    index = {h: j for j, h in enumerate(header)}
    for logical, physical in schema.items():
        if physical not in index:
            raise SchemaError(f"column {physical!r} (for {logical!r}) missing from input")

    numeric = [k for k in schema if k not in (group, period)]
    values: dict[str, list[float]] = {k: [] for k in numeric}
    gkeys: list[str] = []
    pkeys: list[str] = []
    for row_idx, row in enumerate(reader):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {row_idx}: expected {len(header)} fields, got {len(row)}")
        gkeys.append(row[index[schema[group]]].strip())
        pkeys.append(row[index[schema[period]]].strip())
        for k in numeric:
            cell = row[index[schema[k]]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"row {row_idx}: non-numeric value {cell!r} in column {schema[k]!r}"
                ) from None
            if math.isnan(v):
                raise ParseError(f"row {row_idx}: missing value in column {schema[k]!r}")
            values[k].append(v)
    return PanelData(
        groups=np.array(gkeys, dtype=str),
        periods=np.array(pkeys, dtype=str),
        columns={k: np.array(v, dtype=float) for k, v in values.items()},
    )


def load_crime() -> PanelData:
    """The bundled North Carolina county panel (90 counties, 1981-87)."""
    text = resources.files("nise").joinpath("data/crime.csv").read_text()
    return load_panel(io.StringIO(text), CRIME_SCHEMA)


def dump_panel(panel: PanelData, stream: TextIO, delimiter: str = ",") -> None:
    """Write the panel as delimited text; floats use ``repr`` so output is exact."""
    writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
    names = list(panel.columns)
    writer.writerow(["group", "period", *names])
    for i in range(panel.n):
        writer.writerow(
            [panel.groups[i], panel.periods[i], *(repr(float(panel.columns[c][i])) for c in names)]
        )


def log_transform(panel: PanelData, vars: Iterable[str]) -> PanelData:
    updates = {}
    for name in vars:
        col = panel.column(name)
        bad = np.flatnonzero(~(col > 0))
        if bad.size:
            i = int(bad[0])
            raise DomainError(
                f"cannot log column {name!r}: row {i} has non-positive value {col[i]!r}"
            )
        updates[name] = np.log(col)
    return panel.with_columns(updates)


def _codes(keys: np.ndarray) -> np.ndarray:
    _, codes = np.unique(keys, return_inverse=True)
    return codes.ravel()


def _demean(values: np.ndarray, codes: np.ndarray) -> np.ndarray:
    counts = np.bincount(codes).astype(float)
    if values.ndim == 1:
        means = np.bincount(codes, weights=values) / counts
        return values - means[codes]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        means = np.bincount(codes, weights=values[:, j]) / counts
        out[:, j] = values[:, j] - means[codes]
    return out


def _sweep(values: np.ndarray, key_sets: Sequence[np.ndarray]) -> np.ndarray:
    """Alternating projections onto the complement of every set of dummies.

    A single pass is exact for one key or for a balanced two-way layout.
    """
    code_sets = [_codes(k) for k in key_sets]
    out = values
    for code in code_sets:
        out = _demean(out, code)
    if len(code_sets) < 2:
        return out
    scale = max(float(np.max(np.abs(values))), 1.0)
    for _ in range(_SWEEP_MAXITER):
        prev = out
        for code in code_sets:
            out = _demean(out, code)
        if np.max(np.abs(out - prev)) <= _SWEEP_TOL * scale:
            return out
    raise ConditioningError("fixed-effect sweep did not converge")


def within_demean(panel: PanelData, vars: Iterable[str], group_key: str = "group") -> PanelData:
    """Replace each column by its deviation from the mean of its group.

    ``group_key`` is ``"group"`` (county means) or ``"period"`` (period means).
    """
    keys = {"group": panel.groups, "period": panel.periods}.get(group_key)
    if keys is None:
        raise ValueError(f"group_key must be 'group' or 'period', got {group_key!r}")
    return panel.with_columns({v: _demean(panel.column(v), _codes(keys)) for v in vars})


def absorb_effects(
    panel: PanelData, vars: Iterable[str], *, groups: bool = True, periods: bool = True
) -> PanelData:
    """Partial group and/or period effects out of ``vars`` (two-way within transform)."""
    key_sets = [k for k, on in ((panel.groups, groups), (panel.periods, periods)) if on]
    if not key_sets:
        return panel
    return panel.with_columns({v: _sweep(panel.column(v), key_sets) for v in vars})


@dataclass(frozen=True)
class ModelSpec:
    """Variable roles for one structural equation.

    ``period_effects`` is ``"none"``, ``"dummies"`` (period dummies appended to
    the exogenous block, transformed like the data) or ``"absorb"`` (period
    means partialled out of every model column, like a second fixed effect).
    """

    dependent: str
    endogenous: tuple[str, ...] = ()
    exogenous: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    log_transform: bool = True
    within_demean: bool = True
    period_effects: str = "none"

    def __post_init__(self) -> None:
        for name in ("endogenous", "exogenous", "instruments"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.period_effects not in PERIOD_EFFECTS:
            raise SpecError(
                f"period_effects must be one of {PERIOD_EFFECTS}, got {self.period_effects!r}"
            )
        regressors = self.endogenous + self.exogenous
        if self.dependent in regressors:
            raise SpecError(f"dependent variable {self.dependent!r} is also listed as a regressor")
        names = self.columns
        dupes = sorted({c for c in names if names.count(c) > 1})
        if dupes:
            raise SpecError(f"columns named in more than one role: {', '.join(dupes)}")

    @property
    def columns(self) -> list[str]:
        return [self.dependent, *self.endogenous, *self.exogenous, *self.instruments]

    @property
    def period_dummies(self) -> bool:
        return self.period_effects == "dummies"

    def check_panel(self, panel: PanelData) -> None:
        missing = [c for c in self.columns if c not in panel.columns]
        if missing:
            raise SchemaError(f"panel lacks model columns: {', '.join(missing)}")


def crime_spec(period_effects: str = "absorb", instruments: bool = True) -> ModelSpec:
    """The crime-deterrence equation: arrests and police treated as endogenous."""
    return ModelSpec(
        dependent="crime_rate",
        endogenous=("prob_arrest", "police_pc"),
        exogenous=("prob_conviction", "prob_prison", "wage_mfg"),
        instruments=("mix", "tax_pc") if instruments else (),
        period_effects=period_effects,
    )


@dataclass(frozen=True)
class DesignMatrices:
    """Blocks of ``Y gamma = X beta + u``; row ``i`` is the same observation in each.

    ``Y[:, 0]`` is the dependent variable. ``raw`` optionally holds the same
    blocks before demeaning, so resampled rows can be re-demeaned.
    """

    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray | None
    y_labels: tuple[str, ...]
    x_labels: tuple[str, ...]
    z_labels: tuple[str, ...] = ()
    groups: np.ndarray | None = None
    periods: np.ndarray | None = None
    absorbed_groups: int = 0
    absorbed_periods: int = 0
    demean_groups: bool = False
    demean_periods: bool = False
    raw: DesignMatrices | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def G(self) -> int:
        return self.Y.shape[1]

    @property
    def H(self) -> int:
        return self.X.shape[1]

    @property
    def L(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]

    @property
    def dependent(self) -> str:
        return self.y_labels[0]

    @property
    def absorbed(self) -> int:
        return self.absorbed_groups + self.absorbed_periods

    def take(self, idx: np.ndarray) -> DesignMatrices:
        """Rows ``idx`` of every block (pairs-bootstrap resampling)."""
        return replace(
            self,
            Y=self.Y[idx],
            X=self.X[idx],
            Z=None if self.Z is None else self.Z[idx],
            groups=None if self.groups is None else self.groups[idx],
            periods=None if self.periods is None else self.periods[idx],
            raw=None if self.raw is None else self.raw.take(idx),
        )

    def redemeaned(self) -> DesignMatrices:
        """Recompute the within transformation from ``raw`` on the current rows."""
        if self.raw is None:
            raise ValueError("design carries no untransformed blocks")
        keys = [k for k, on in ((self.groups, self.demean_groups),
                                (self.periods, self.demean_periods)) if on]
        if not keys:
            return replace(self, Y=self.raw.Y, X=self.raw.X, Z=self.raw.Z)
        return replace(
            self,
            Y=_sweep(self.raw.Y, keys),
            X=_sweep(self.raw.X, keys),
            Z=None if self.raw.Z is None else _sweep(self.raw.Z, keys),
        )


def _period_dummy_columns(panel: PanelData) -> dict[str, np.ndarray]:
    levels = _level_order(panel.periods)
    return {f"period_{lv}": (panel.periods == lv).astype(float) for lv in levels[1:]}


def build_design(panel: PanelData, spec: ModelSpec) -> DesignMatrices:
    """Assemble ``Y = [dependent | endogenous]``, ``X = [exogenous | dummies]``, ``Z``.

    Transforms must already have been applied. Period dummies (when
    ``spec.period_dummies``) are generated here and group-demeaned if the
    spec demeans.
    """
    spec.check_panel(panel)
    y_labels = (spec.dependent, *spec.endogenous)
    Y = np.column_stack([panel.column(c) for c in y_labels])
    x_cols = {c: panel.column(c) for c in spec.exogenous}
    if spec.period_dummies:
        dummies = _period_dummy_columns(panel)
        if spec.within_demean:
            codes = _codes(panel.groups)
            dummies = {k: _demean(v, codes) for k, v in dummies.items()}
        x_cols.update(dummies)
    x_labels = tuple(x_cols)
    X = np.column_stack(list(x_cols.values())) if x_cols else np.empty((panel.n, 0))
    Z = None
    if spec.instruments:
        Z = np.column_stack([panel.column(c) for c in spec.instruments])

    n, G, H = panel.n, Y.shape[1], X.shape[1]
    if n <= G + H:
        raise InsufficientDataError(f"n = {n} observations but G + H = {G + H} columns")
    bad = deficient_columns(X)
    if bad:
        names = ", ".join(x_labels[j] for j in bad)
        raise ConditioningError(f"exogenous block X is rank deficient; offending columns: {names}")

    absorbed_groups = panel.n_groups if spec.within_demean else 0
    absorbed_periods = 0
    if spec.period_effects == "absorb":
        absorbed_periods = panel.n_periods - (1 if spec.within_demean else 0)
    return DesignMatrices(
        Y=Y,
        X=X,
        Z=Z,
        y_labels=y_labels,
        x_labels=x_labels,
        z_labels=tuple(spec.instruments),
        groups=panel.groups,
        periods=panel.periods,
        absorbed_groups=absorbed_groups,
        absorbed_periods=absorbed_periods,
        demean_groups=spec.within_demean,
        demean_periods=spec.period_effects == "absorb",
    )


def transform_panel(panel: PanelData, spec: ModelSpec) -> PanelData:
    """Apply the ModelSpec transforms in order: log, then group/period demeaning."""
    spec.check_panel(panel)
    cols = spec.columns
    if spec.log_transform:
        panel = log_transform(panel, cols)
    return absorb_effects(
        panel, cols, groups=spec.within_demean, periods=spec.period_effects == "absorb"
    )


def prepare_design(panel: PanelData, spec: ModelSpec) -> DesignMatrices:
    """Full pipeline from raw panel to design; keeps the logged blocks in ``raw``."""
    spec.check_panel(panel)
    logged = log_transform(panel, spec.columns) if spec.log_transform else panel
    raw_spec = replace(spec, within_demean=False)
    raw_spec = replace(raw_spec, period_effects="dummies" if spec.period_dummies else "none")
    raw = build_design(logged, raw_spec)
    design = build_design(transform_panel(panel, spec), spec)
    return replace(design, raw=raw)
