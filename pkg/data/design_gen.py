import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy import linalg, stats
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from data.errors import ArgumentError, DomainError, UnsupportedDimensionError

logger = logging.getLogger(__name__)

SOBOL_MAX_DIM = getattr(qmc.Sobol, "MAXDIM", 21201)


class Method(str, Enum):
    M1_LHS = "M1"
    M2_MaximinLHS = "M2"
    M3_ZeroCorrLHS = "M3"
    M4_CosMaximin = "M4"
    M5_CosZeroCorr = "M5"
    M6_Sobol = "M6"
    M7_SRS = "M7"

    @property
    def label(self):
        return METHOD_LABELS[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for method in cls:
            if text in (method.value, method.name):
                return method
        raise ArgumentError(f"Méthode inconnue: {value}")


METHOD_LABELS = {
    Method.M1_LHS: "LHS aléatoire",
    Method.M2_MaximinLHS: "LHS maximin",
    Method.M3_ZeroCorrLHS: "LHS corrélation nulle",
    Method.M4_CosMaximin: "LHS maximin cosinus",
    Method.M5_CosZeroCorr: "LHS corr. nulle cosinus",
    Method.M6_Sobol: "Sobol",
    Method.M7_SRS: "Échantillon aléatoire simple",
}

ALL_METHODS = list(Method)

# Transformée cosinus: méthode source -> méthode transformée
COSINE_TAGS = {
    Method.M2_MaximinLHS: Method.M4_CosMaximin,
    Method.M3_ZeroCorrLHS: Method.M5_CosZeroCorr,
}


@dataclass(frozen=True)
class Design:
    points: np.ndarray = field(repr=False)
    method: Method
    seed: Optional[int]
    replicate_id: int = 0

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2:
            raise ArgumentError(f"Un plan doit être une matrice n×d, reçu {points.shape}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def to_frame(self):
        return pd.DataFrame(self.points, columns=[f"x{k + 1}" for k in range(self.d)])

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def _check_size(n, d, min_n=1, min_d=1):
    if not isinstance(n, (int, np.integer)) or n < min_n:
        raise ArgumentError(f"n doit être un entier >= {min_n}, reçu {n}")
    if not isinstance(d, (int, np.integer)) or d < min_d:
        raise ArgumentError(f"d doit être un entier >= {min_d}, reçu {d}")


# tailles minimales (n, d) par méthode; M1, M6, M7: (1, 1)
MIN_SIZES = {
    Method.M2_MaximinLHS: (2, 1),
    Method.M3_ZeroCorrLHS: (3, 2),
    Method.M4_CosMaximin: (2, 1),
    Method.M5_CosZeroCorr: (3, 2),
}


def check_design_size(method, n, d):
    """Lève ArgumentError si la méthode ne peut pas produire un plan n×d."""
    min_n, min_d = MIN_SIZES.get(Method.parse(method), (1, 1))
    _check_size(n, d, min_n=min_n, min_d=min_d)


def min_distance(points):
    """Plus petite distance euclidienne entre deux points du plan.

    Les carrés des écarts sont triés avant sommation: le résultat ne dépend
    pas de l'ordre des colonnes.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return np.inf
    i, j = np.triu_indices(len(points), k=1)
    squares = np.sort((points[i] - points[j]) ** 2, axis=1)
    return float(np.sqrt(squares.sum(axis=1).min()))


def max_abs_correlation(points):
    corr = np.corrcoef(points, rowvar=False)
    off_diagonal = corr[~np.eye(corr.shape[0], dtype=bool)]
    return float(np.max(np.abs(off_diagonal)))


def _lhs_points(n, d, rng):
    strata = rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T
    return (strata + rng.random((n, d))) / n


def lhs_random(n, d, seed):
    _check_size(n, d)
    rng = np.random.default_rng(seed)
    return Design(_lhs_points(n, d, rng), Method.M1_LHS, seed)


def lhs_maximin(n, d, seed, budget=1000):
    """LHS maximin par échanges au sein d'une colonne.

    On part de lhs_random(n, d, seed) et on accepte un échange de deux
    valeurs d'une même colonne si la distance minimale ne diminue pas.
    """
    _check_size(n, d, min_n=2)
    if budget < 0:
        raise ArgumentError(f"Le budget doit être positif, reçu {budget}")

    x = np.array(lhs_random(n, d, seed).points)
    rng = np.random.default_rng([seed, 1])

    dist = cdist(x, x)
    np.fill_diagonal(dist, np.inf)
    current = dist.min()

    for _ in range(budget):
        col = rng.integers(d)
        i, j = rng.choice(n, size=2, replace=False)
        x[[i, j], col] = x[[j, i], col]

        rows = cdist(x[[i, j]], x)
        trial = dist.copy()
        trial[[i, j], :] = rows
        trial[:, [i, j]] = rows.T
        trial[[i, j], [i, j]] = np.inf

        candidate = trial.min()
        if candidate >= current:
            dist, current = trial, candidate
        else:
            x[[i, j], col] = x[[j, i], col]

    logger.debug("Maximin n=%d d=%d seed=%s: distance minimale %.6g", n, d, seed, current)
    return Design(x, Method.M2_MaximinLHS, seed)


def _iman_conover_step(x):
    n = x.shape[0]
    scores = stats.norm.ppf(stats.rankdata(x, axis=0) / (n + 1))
    empirical = np.corrcoef(scores, rowvar=False)
    try:
        lower = np.linalg.cholesky(empirical)
    except np.linalg.LinAlgError:
        return None

    decorrelated = linalg.solve_triangular(lower, scores.T, lower=True).T

    result = np.empty_like(x)
    for k in range(x.shape[1]):
        ranks = stats.rankdata(decorrelated[:, k], method="ordinal").astype(int) - 1
        result[:, k] = np.sort(x[:, k])[ranks]
    return result


def lhs_zero_corr(n, d, seed, iterations=3):
    """LHS à corrélation nulle par réarrangement des rangs (Iman-Conover).

    La cible est l'identité. Chaque passe ne fait que permuter les valeurs
    de chaque colonne; on garde le plan dont la corrélation absolue maximale
    est la plus faible, le plan de départ compris.
    """
    _check_size(n, d, min_n=3, min_d=2)

    best = np.array(lhs_random(n, d, seed).points)
    best_corr = max_abs_correlation(best)

    current = best
    for _ in range(iterations):
        current = _iman_conover_step(current)
        if current is None:
            logger.debug("Corrélation des scores non définie positive (n=%d, d=%d)", n, d)
            break
        corr = max_abs_correlation(current)
        if corr < best_corr:
            best, best_corr = current, corr

    return Design(best, Method.M3_ZeroCorrLHS, seed)


def cosine_transform(design):
    x = design.points
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("Les coordonnées doivent être dans [0, 1]")

    y = np.clip((1.0 - np.cos(np.pi * x)) / 2.0, 0.0, 1.0)
    method = COSINE_TAGS.get(design.method, design.method)
    return replace(design, points=y, method=method)


def sobol(n, d, skip=0):
    _check_size(n, d)
    if d > SOBOL_MAX_DIM:
        raise UnsupportedDimensionError(
            f"Sobol: d={d} dépasse la table de nombres directeurs ({SOBOL_MAX_DIM})"
        )

    sampler = qmc.Sobol(d=d, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    with warnings.catch_warnings():
        # n non puissance de 2: avertissement d'équilibre attendu
        warnings.simplefilter("ignore", UserWarning)
        points = sampler.random(n)
    return Design(points, Method.M6_Sobol, None)


def srs(n, d, seed):
    _check_size(n, d)
    rng = np.random.default_rng(seed)
    return Design(rng.random((n, d)), Method.M7_SRS, seed)


def permute_columns(design, replicate_id, seed):
    if replicate_id < 0:
        raise ArgumentError(f"replicate_id doit être positif, reçu {replicate_id}")
    rng = np.random.default_rng([seed, replicate_id])
    order = rng.permutation(design.d)
    return replace(design, points=design.points[:, order], replicate_id=replicate_id)


def build_design(method, n, d, seed, maximin_budget=1000):
    method = Method.parse(method)
    check_design_size(method, n, d)

    if method is Method.M1_LHS:
        return lhs_random(n, d, seed)
    if method is Method.M2_MaximinLHS:
        return lhs_maximin(n, d, seed, maximin_budget)
    if method is Method.M3_ZeroCorrLHS:
        return lhs_zero_corr(n, d, seed)
    if method is Method.M4_CosMaximin:
        return cosine_transform(lhs_maximin(n, d, seed, maximin_budget))
    if method is Method.M5_CosZeroCorr:
        return cosine_transform(lhs_zero_corr(n, d, seed))
    if method is Method.M6_Sobol:
        return sobol(n, d)
    return srs(n, d, seed)
