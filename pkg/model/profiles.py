import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator

from data.design_gen import ALL_METHODS, Method
from data.errors import ArgumentError, ContractError
from data.testbed import SizeClass

logger = logging.getLogger(__name__)

DIMENSIONS = {"problem": "problem_id", "size_class": "size_class", "metric": "metric"}

# seuil de résolution par défaut: un chiffre décimal gagné sur ȳ
DEFAULT_SOLVE_THRESHOLD = -1.0

BOUNDARY_RULE = "milieu entre le 97.5e percentile de la meilleure taille et le 2.5e de la suivante (approximatif)"


class CurveKind(str, Enum):
    ecdf = "ecdf"
    performance_profile = "performance_profile"
    data_profile = "data_profile"


@dataclass(frozen=True)
class ProfileCurve:
    method: Optional[str]
    xs: np.ndarray = field(repr=False)
    ps: np.ndarray = field(repr=False)
    n_points: int
    kind: CurveKind = CurveKind.ecdf
    counts: Optional[np.ndarray] = field(default=None, repr=False)
    scheme: Optional[str] = None

    def _index(self, x):
        return np.searchsorted(self.xs, np.asarray(x, dtype=float), side="right") - 1

    def evaluate(self, x):
        """Valeur de la fonction en escalier (continue à droite) en x."""
        idx = self._index(x)
        ps = np.concatenate(([0.0], self.ps))
        return ps[idx + 1]

    def count_at(self, x):
        if self.counts is None:
            raise ContractError("Comptes disponibles uniquement pour une ECDF")
        idx = self._index(x)
        counts = np.concatenate(([0], self.counts))
        return counts[idx + 1]


class CollapseSpec(BaseModel):
    collapse_over: List[str] = []
    fixed: Dict[str, str] = {}
    boundaries: Optional[List[float]] = None

    @field_validator("collapse_over")
    @classmethod
    def known_dimensions(cls, value):
        unknown = set(value) - set(DIMENSIONS)
        if unknown:
            raise ValueError(f"Dimensions inconnues: {sorted(unknown)}")
        return sorted(set(value))

    @model_validator(mode="after")
    def fixed_is_complement(self):
        unknown = set(self.fixed) - set(DIMENSIONS)
        if unknown:
            raise ValueError(f"Dimensions fixées inconnues: {sorted(unknown)}")
        overlap = set(self.fixed) & set(self.collapse_over)
        if overlap:
            raise ValueError(f"Dimensions à la fois fixées et regroupées: {sorted(overlap)}")
        return self

    def title(self):
        parts = [f"{name}={value}" for name, value in sorted(self.fixed.items())]
        if self.collapse_over:
            parts.append("regroupé sur " + ", ".join(self.collapse_over))
        return " | ".join(parts) if parts else "toutes cellules"


def scores_frame(records):
    """Accepte un DataFrame de scores ou une liste de StandardizedScore."""
    if isinstance(records, pd.DataFrame):
        return records
    rows = []
    for record in records:
        row = asdict(record)
        row["score"] = row.pop("value")
        row["scheme"] = getattr(record.scheme, "value", record.scheme)
        row["metric"] = getattr(record.metric, "value", record.metric)
        rows.append(row)
    return pd.DataFrame(rows)


def ecdf(scores, method=None, scheme=None):
    values = np.asarray(scores, dtype=float).ravel()
    if values.size == 0:
        raise ArgumentError("ECDF d'un échantillon vide")
    if not np.all(np.isfinite(values)):
        raise ArgumentError("ECDF: valeurs non finies")

    xs, multiplicity = np.unique(values, return_counts=True)
    counts = np.cumsum(multiplicity)
    return ProfileCurve(method, xs, counts / values.size, int(values.size), CurveKind.ecdf, counts, scheme)


def select(frame, spec):
    """Filtre les scores selon la spécification de regroupement."""
    frame = scores_frame(frame)
    if frame.empty:
        return frame

    schemes = frame["scheme"].unique()
    if len(schemes) > 1:
        raise ContractError(f"Schémas de standardisation mélangés: {sorted(schemes)}")

    for name, value in spec.fixed.items():
        frame = frame[frame[DIMENSIONS[name]].astype(str) == str(value)]

    for name, column in DIMENSIONS.items():
        if name in spec.collapse_over or name in spec.fixed:
            continue
        levels = frame[column].unique()
        if len(levels) > 1:
            raise ContractError(
                f"Dimension '{name}' ni fixée ni regroupée: {len(levels)} niveaux présents"
            )
    return frame


def collapse(records, spec, methods=None):
    frame = select(records, spec)
    methods = [Method.parse(m).value for m in (methods or ALL_METHODS)]
    scheme = frame["scheme"].iloc[0] if len(frame) else None

    curves = []
    for method in methods:
        scores = frame.loc[frame["method"] == method, "score"]
        if scores.empty:
            logger.warning("Aucun score pour la méthode %s, courbe omise", method)
            continue
        curves.append(ecdf(scores.to_numpy(), method, scheme))
    return curves


def performance_table(store, metric):
    """Table groupes × méthodes des valeurs brutes; NaN pour les échecs."""
    frame = store[store["metric"] == metric]
    frame = frame.assign(value=frame["value"].where(frame["status"] == "ok"))
    return frame.pivot_table(
        index=["problem_id", "size_class", "replicate"],
        columns="method",
        values="value",
        aggfunc="first",
        dropna=False,
    )


def performance_ratios(table):
    values = table.to_numpy(dtype=float)
    finite = values[~np.isnan(values)]
    if np.any(finite <= 0):
        raise ArgumentError("Profils de performance: valeurs non positives")

    keep = ~np.all(np.isnan(values), axis=1)
    values = values[keep]
    best = np.nanmin(values, axis=1, keepdims=True)
    ratios = values / best
    # cellule en échec: jamais résolue
    ratios[np.isnan(ratios)] = np.inf
    return pd.DataFrame(ratios, columns=table.columns, index=table.index[keep])


def performance_profile(table, tau_grid=None):
    ratios = performance_ratios(table)
    if ratios.empty:
        raise ArgumentError("Profils de performance: aucun groupe")

    if tau_grid is None:
        finite = ratios.to_numpy()[np.isfinite(ratios.to_numpy())]
        tau_grid = np.union1d(finite, [1.0])
    tau_grid = np.sort(np.asarray(tau_grid, dtype=float))

    n_groups = len(ratios)
    curves = []
    for method in ratios.columns:
        r = np.sort(ratios[method].to_numpy())
        counts = np.searchsorted(r, tau_grid, side="right")
        curves.append(
            ProfileCurve(str(method), tau_grid, counts / n_groups, n_groups, CurveKind.performance_profile)
        )
    return curves


def _budget_values(frame, budget):
    if budget == "multiplier":
        return frame["size_class"].map(lambda s: SizeClass.parse(s).multiplier).astype(float)
    if budget == "n":
        dims = frame["problem_id"].str.rsplit("-", n=1).str[-1].astype(int)
        mult = frame["size_class"].map(lambda s: SizeClass.parse(s).multiplier)
        return (mult * dims).astype(float)
    if budget == "wall_time":
        return frame["wall_time"].astype(float)
    raise ArgumentError(f"Axe de budget inconnu: {budget}")


def data_profile(records, threshold=DEFAULT_SOLVE_THRESHOLD, budget="multiplier", budgets=None, methods=None):
    """Proportion des couples (problème, réplique) résolus à budget <= b."""
    frame = scores_frame(records).copy()
    frame["budget"] = _budget_values(frame, budget)

    grid = np.unique(frame["budget"].dropna()) if budgets is None else np.asarray(budgets, dtype=float)
    if grid.size == 0:
        raise ArgumentError("Grille de budgets vide")
    grid = np.sort(grid)

    pairs = frame[["problem_id", "replicate"]].drop_duplicates()
    n_pairs = len(pairs)
    methods = methods or sorted(frame["method"].unique())

    curves = []
    for method in methods:
        solved = frame[(frame["method"] == method) & (frame["score"] <= threshold)]
        first = solved.groupby(["problem_id", "replicate"])["budget"].min().to_numpy()
        first = np.sort(first[~np.isnan(first)])
        counts = np.searchsorted(first, grid, side="right")
        curves.append(ProfileCurve(method, grid, counts / n_pairs, n_pairs, CurveKind.data_profile))
    return curves


def size_boundaries(records, spec, lower=2.5, upper=97.5):
    if "size_class" not in spec.collapse_over:
        raise ContractError("Les frontières exigent un regroupement sur les tailles")

    frame = select(records, spec)
    if frame.empty:
        return []
    sizes = sorted(frame["size_class"].unique(), key=lambda s: SizeClass.parse(s).multiplier)
    if len(sizes) < 2:
        return []

    boundaries = []
    for left, right in zip(sizes, sizes[1:]):
        a = frame.loc[frame["size_class"] == left, "score"].to_numpy()
        b = frame.loc[frame["size_class"] == right, "score"].to_numpy()
        better, worse = (a, b) if np.median(a) <= np.median(b) else (b, a)

        high = np.percentile(better, upper)
        low = np.percentile(worse, lower)
        if high > low:
            logger.warning("Tailles %s et %s se chevauchent: frontière approximative", left, right)
        boundaries.append(float((high + low) / 2.0))
    return boundaries


def curves_frame(curves):
    rows = []
    for curve in curves:
        kind = getattr(curve.kind, "value", curve.kind)
        for x, p in zip(curve.xs, curve.ps):
            rows.append({"method": curve.method, "kind": kind, "x": float(x), "p": float(p)})
    return pd.DataFrame(rows, columns=["method", "kind", "x", "p"])


def write_curves(curves, path, spec=None, scheme=None, boundaries=None, diagnostics=None):
    """Écrit <path>.csv et <path>.json (métadonnées pour le rapport)."""
    curves_frame(curves).to_csv(f"{path}.csv", index=False)

    bundle = {
        "spec": spec.model_dump() if spec is not None else None,
        "scheme": getattr(scheme, "value", scheme),
        "counts": {curve.method: curve.n_points for curve in curves},
        "boundaries": boundaries or [],
        "boundary_rule": BOUNDARY_RULE,
        "diagnostics": diagnostics or {},
        "curves": [
            {
                "method": curve.method,
                "kind": getattr(curve.kind, "value", curve.kind),
                "x": [float(x) for x in curve.xs],
                "p": [float(p) for p in curve.ps],
            }
            for curve in curves
        ],
    }
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(bundle, f, indent=2)
    return f"{path}.csv", f"{path}.json"
