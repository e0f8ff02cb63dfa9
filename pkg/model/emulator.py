import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, field_validator
from scipy import linalg
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from sklearn.gaussian_process.kernels import RBF

from data.errors import ArgumentError, GPFitError

logger = logging.getLogger(__name__)


class GPSettings(BaseModel):
    n_starts: int = 8
    max_evals: int = 200
    nugget: float = 1e-8
    nugget_cap: float = 1e-4
    # bornes des longueurs de corrélation, en log10
    log_bounds: Tuple[float, float] = (-2.0, 1.0)
    seed: int = 0

    @field_validator("n_starts", "max_evals")
    @classmethod
    def positive(cls, value):
        if value < 1:
            raise ValueError("doit être >= 1")
        return value

    @field_validator("nugget", "nugget_cap")
    @classmethod
    def positive_nugget(cls, value):
        if not value > 0:
            raise ValueError("le nugget doit être strictement positif")
        return value

    @field_validator("log_bounds")
    @classmethod
    def ordered_bounds(cls, value):
        if not value[0] < value[1]:
            raise ValueError(f"Bornes non ordonnées: {value}")
        return value


@dataclass(frozen=True)
class GPModel:
    train_points: np.ndarray = field(repr=False)
    train_values: np.ndarray = field(repr=False)
    corr_lengths: np.ndarray
    process_variance: float
    mean: float
    nugget: float
    factorization: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    log_likelihood: float = np.nan

    def summary(self):
        return {
            "corr_lengths": [float(v) for v in self.corr_lengths],
            "process_variance": float(self.process_variance),
            "mean": float(self.mean),
            "nugget": float(self.nugget),
            "log_likelihood": float(self.log_likelihood),
            "n_train": int(self.train_points.shape[0]),
        }


@dataclass(frozen=True)
class TrivialModel:
    mean: float


def correlation(corr_lengths, points, other=None, eval_gradient=False):
    kernel = RBF(length_scale=np.asarray(corr_lengths, dtype=float))
    if eval_gradient:
        return kernel(points, eval_gradient=True)
    return kernel(points, other)


def _check_training(points, values):
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if points.ndim != 2:
        raise ArgumentError(f"Les points doivent former une matrice n×d, reçu {points.shape}")
    if values.ndim != 1 or values.shape[0] != points.shape[0]:
        raise ArgumentError("Nombre de réponses différent du nombre de points")
    if not np.all(np.isfinite(values)):
        raise ArgumentError("Réponses non finies")
    # ordre canonique des lignes: l'ajustement ne dépend pas de l'ordre du plan
    order = np.lexsort((values,) + tuple(points.T[::-1]))
    return points[order], values[order]


def _profile(corr_lengths, points, values, nugget, eval_gradient=False):
    """Estimations profilées (moyenne, variance) et facteur de Cholesky.

    Retourne None si la matrice de corrélation n'est pas définie positive.
    """
    n = points.shape[0]
    if eval_gradient:
        R, dR = correlation(corr_lengths, points, eval_gradient=True)
    else:
        R, dR = correlation(corr_lengths, points), None
    R[np.diag_indices(n)] += nugget

    try:
        factor = linalg.cho_factor(R, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None

    ones = np.ones(n)
    r_inv_y = linalg.cho_solve(factor, values, check_finite=False)
    r_inv_one = linalg.cho_solve(factor, ones, check_finite=False)
    mean = (ones @ r_inv_y) / (ones @ r_inv_one)
    residual = values - mean
    weights = linalg.cho_solve(factor, residual, check_finite=False)
    variance = max((residual @ weights) / n, np.finfo(float).tiny)
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))

    return {
        "factor": factor,
        "mean": mean,
        "variance": variance,
        "weights": weights,
        "log_det": log_det,
        "dR": dR,
    }


def neg_log_likelihood(corr_lengths, points, values, nugget):
    """Log-vraisemblance profilée négative (moyenne constante, variance profilée).

    Vaut +inf quand la corrélation n'est pas définie positive.
    """
    corr_lengths = np.asarray(corr_lengths, dtype=float)
    if np.any(corr_lengths <= 0):
        raise ArgumentError("Les longueurs de corrélation doivent être > 0")
    points, values = _check_training(points, values)

    profile = _profile(corr_lengths, points, values, nugget)
    if profile is None:
        return np.inf
    n = points.shape[0]
    return float(0.5 * n * np.log(profile["variance"]) + 0.5 * profile["log_det"])


def neg_log_likelihood_gradient(corr_lengths, points, values, nugget):
    """Gradient par rapport au logarithme népérien des longueurs de corrélation."""
    corr_lengths = np.asarray(corr_lengths, dtype=float)
    points, values = _check_training(points, values)

    profile = _profile(corr_lengths, points, values, nugget, eval_gradient=True)
    if profile is None:
        return np.full(corr_lengths.shape[0], np.nan)

    n = points.shape[0]
    r_inv = linalg.cho_solve(profile["factor"], np.eye(n), check_finite=False)
    weights = profile["weights"]
    dR = profile["dR"]

    gradient = np.empty(dR.shape[2])
    for k in range(dR.shape[2]):
        trace = np.sum(r_inv * dR[:, :, k])
        quad = weights @ dR[:, :, k] @ weights
        gradient[k] = 0.5 * trace - 0.5 * quad / profile["variance"]

    return gradient


def multistart_points(settings, d):
    rng = np.random.default_rng(settings.seed)
    low, high = settings.log_bounds
    return rng.uniform(low, high, size=(settings.n_starts, d))


def _search(points, values, nugget, settings):
    d = points.shape[1]
    bounds = [settings.log_bounds] * d

    def objective(log_lengths):
        return neg_log_likelihood(10.0**log_lengths, points, values, nugget)

    best_x, best_f = None, np.inf
    for start in multistart_points(settings, d):
        start_f = objective(start)
        if start_f < best_f:
            best_x, best_f = start, start_f

        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": settings.max_evals, "xatol": 1e-4, "fatol": 1e-8},
        )
        if result.fun < best_f:
            best_x, best_f = np.asarray(result.x), float(result.fun)

    return best_x, best_f


def nugget_ladder(settings):
    nugget = settings.nugget
    while nugget <= settings.nugget_cap * (1 + 1e-9):
        yield nugget
        nugget *= 10.0


def fit_gp(points, values, settings: Optional[GPSettings] = None, cell=None):
    settings = settings or GPSettings()
    points, values = _check_training(points, values)
    if points.shape[0] < 2:
        raise ArgumentError("Au moins deux points d'apprentissage sont requis")

    for nugget in nugget_ladder(settings):
        log_lengths, best_f = _search(points, values, nugget, settings)
        if log_lengths is None or not np.isfinite(best_f):
            logger.warning("Factorisation impossible au nugget %.0e, escalade (%s)", nugget, cell)
            continue

        corr_lengths = 10.0**log_lengths
        profile = _profile(corr_lengths, points, values, nugget)
        if profile is None:
            logger.warning("Factorisation impossible au nugget %.0e, escalade (%s)", nugget, cell)
            continue

        logger.debug("GP ajusté %s: longueurs=%s nugget=%.0e", cell, corr_lengths, nugget)
        return GPModel(
            train_points=points,
            train_values=values,
            corr_lengths=corr_lengths,
            process_variance=float(profile["variance"]),
            mean=float(profile["mean"]),
            nugget=nugget,
            factorization=profile["factor"][0],
            weights=profile["weights"],
            log_likelihood=-best_f,
        )

    raise GPFitError(
        f"Matrice de corrélation non définie positive jusqu'au nugget {settings.nugget_cap:.0e}",
        cell=cell,
    )


def fit_trivial(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ArgumentError("Aucune réponse pour le prédicteur trivial")
    return TrivialModel(mean=float(np.mean(values)))


def predict(model, points):
    points = np.asarray(points, dtype=float)
    if isinstance(model, TrivialModel):
        return np.full(len(points), model.mean)

    d = model.train_points.shape[1]
    if points.ndim != 2 or points.shape[1] != d:
        if points.size == 0:
            return np.empty(0)
        raise ArgumentError(f"Dimension incompatible: attendu d={d}, reçu {points.shape}")
    if points.shape[0] == 0:
        return np.empty(0)

    cross = correlation(model.corr_lengths, points, model.train_points)
    # le nugget appartient à la covariance en distance nulle: les données sont restituées
    cross[cdist(points, model.train_points) == 0.0] += model.nugget
    return model.mean + cross @ model.weights
