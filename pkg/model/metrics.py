import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.metrics import max_error, mean_squared_error

from data.errors import ArgumentError, ContractError, DegenerateError

logger = logging.getLogger(__name__)

EPSILON = 1e-300
# rapport au prédicteur trivial au-delà duquel le GP est jugé très mauvais
POOR_FIT_RATIO = 0.5

GROUP_KEYS = ["problem_id", "size_class", "replicate"]
CELL_KEYS = ["problem_id", "method", "size_class", "replicate"]


class Metric(str, Enum):
    rmse = "rmse"
    ame = "ame"


class Scheme(str, Enum):
    log10_trivial_ratio = "log10_trivial_ratio"
    relative_to_best = "relative_to_best"

    @classmethod
    def parse(cls, value):
        aliases = {"trivial": cls.log10_trivial_ratio, "best": cls.relative_to_best}
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ArgumentError(f"Schéma de standardisation inconnu: {value}")


class Status(str, Enum):
    ok = "ok"
    fit_failed = "fit_failed"
    degenerate = "degenerate"


@dataclass(frozen=True)
class EvaluationRecord:
    problem_id: str
    method: str
    size_class: str
    replicate_id: int
    rmse: float
    ame: float
    rmse_trivial: float
    ame_trivial: float
    status: Status = Status.ok
    wall_time: Optional[float] = None

    def rows(self):
        """Une ligne par métrique, au format du magasin de résultats."""
        for metric, value, trivial in (
            (Metric.rmse, self.rmse, self.rmse_trivial),
            (Metric.ame, self.ame, self.ame_trivial),
        ):
            yield {
                "problem_id": self.problem_id,
                "method": self.method,
                "size_class": self.size_class,
                "replicate": self.replicate_id,
                "metric": metric.value,
                "value": value if self.status is Status.ok else None,
                "trivial_value": trivial,
                "status": self.status.value,
                "wall_time": self.wall_time,
            }


@dataclass(frozen=True)
class StandardizedScore:
    value: float
    scheme: Scheme
    metric: Optional[Metric] = None
    problem_id: Optional[str] = None
    method: Optional[str] = None
    size_class: Optional[str] = None
    replicate: Optional[int] = None


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.ndim != 1 or truth.shape != pred.shape:
        raise ArgumentError(f"Longueurs incompatibles: {truth.shape} et {pred.shape}")
    if truth.size == 0:
        raise ArgumentError("Vecteurs vides")
    return truth, pred


def rmse(truth, pred):
    truth, pred = _check_pair(truth, pred)
    return float(np.sqrt(mean_squared_error(truth, pred)))


def ame(truth, pred):
    truth, pred = _check_pair(truth, pred)
    return float(max_error(truth, pred))


def standardize_trivial(metric_value, trivial_value, base=10.0, metric=None, **keys):
    if not trivial_value > 0:
        raise DegenerateError(f"Valeur du prédicteur trivial non positive: {trivial_value}")
    if metric_value < 0:
        raise ArgumentError(f"Métrique négative: {metric_value}")

    ratio = max(metric_value, EPSILON) / trivial_value
    value = math.log10(ratio) if base == 10.0 else math.log(ratio, base)
    return StandardizedScore(value, Scheme.log10_trivial_ratio, metric, **keys)


def standardize_best(group, metric=None, **keys):
    """Erreur relative au meilleur: F_p = (f_p - f*) / f*.

    group est une liste de couples (méthode, valeur).
    """
    if not group:
        raise ArgumentError("Groupe vide")
    values = [value for _, value in group]
    if any(value < 0 for value in values):
        raise ArgumentError("Valeurs négatives dans le groupe")

    best = min(values)
    if best == 0:
        raise DegenerateError("Meilleure valeur nulle: groupe dégénéré")

    return [
        StandardizedScore((value - best) / best, Scheme.relative_to_best, metric, method=method, **keys)
        for method, value in group
    ]


def standardize(store, scheme, metric, base=10.0):
    """Standardise les lignes d'un magasin de résultats.

    Retourne (scores, diagnostics). Les cellules en échec ou dégénérées
    sont exclues et comptées.
    """
    scheme = Scheme.parse(scheme)
    metric = Metric(metric)

    frame = store[store["metric"] == metric.value]
    diagnostics = {
        "fit_failed": int((frame["status"] == Status.fit_failed.value).sum()),
        "degenerate_cells": int((frame["status"] == Status.degenerate.value).sum()),
        "degenerate_groups": 0,
    }
    frame = frame[frame["status"] == Status.ok.value].copy()
    frame = frame[frame["value"].notna()]

    if scheme is Scheme.log10_trivial_ratio:
        bad = ~(frame["trivial_value"] > 0)
        diagnostics["degenerate_cells"] += int(bad.sum())
        frame = frame[~bad].copy()
        ratio = np.maximum(frame["value"].to_numpy(dtype=float), EPSILON) / frame[
            "trivial_value"
        ].to_numpy(dtype=float)
        frame["score"] = np.log10(ratio) if base == 10.0 else np.log(ratio) / np.log(base)
    else:
        best = frame.groupby(GROUP_KEYS, sort=False)["value"].transform("min")
        degenerate = best == 0
        if degenerate.any():
            n_groups = frame[degenerate].groupby(GROUP_KEYS, sort=False).ngroups
            diagnostics["degenerate_groups"] = int(n_groups)
            logger.warning("%d groupes dégénérés (f* = 0) exclus", n_groups)
        frame = frame[~degenerate].copy()
        best = best[~degenerate]
        frame["score"] = (frame["value"] - best) / best

    frame["scheme"] = scheme.value
    columns = CELL_KEYS + ["metric", "scheme", "score"]
    return frame[columns].reset_index(drop=True), diagnostics


def win_fractions(scores, methods=None):
    """Fraction des groupes où chaque méthode atteint la meilleure valeur.

    Chaque ex aequo compte comme une victoire.
    """
    if scores.empty:
        raise ArgumentError("Aucun score")
    schemes = scores["scheme"].unique()
    if len(schemes) != 1 or schemes[0] != Scheme.relative_to_best.value:
        raise ContractError(f"Victoires calculées sur relative_to_best uniquement: {schemes}")

    n_groups = scores.groupby(GROUP_KEYS + ["metric"], sort=False).ngroups
    wins = scores[scores["score"] == 0].groupby("method")["score"].size()
    methods = methods if methods is not None else sorted(scores["method"].unique())
    return pd.Series({m: wins.get(m, 0) / n_groups for m in methods}, name="win_fraction")
