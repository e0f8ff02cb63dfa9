import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from pydantic import BaseModel, field_validator

from data.errors import ArgumentError, ConfigError

logger = logging.getLogger(__name__)


# Familles de fonctions tests, définies sur [0,1]^d pour tout d.
# Chaque variante ne change qu'une fréquence ou un décalage.


def additive(x, omega, shift):
    d = x.shape[1]
    weights = 1.0 / np.arange(1, d + 1)
    return (np.sin(omega * x + shift) * weights).sum(axis=1)


def interaction(x, width, centre):
    return np.prod(1.0 / (1.0 + (width * (x - centre)) ** 2), axis=1)


def oscillatory(x, omega, phase):
    d = x.shape[1]
    return np.cos(2.0 * np.pi * phase + omega * x.sum(axis=1) / np.sqrt(d))


def ridge(x, centre, width):
    d = x.shape[1]
    t = x.mean(axis=1)
    return 0.1 * t + np.exp(-((t - centre) ** 2) / (2.0 * width**2)) / np.sqrt(d)


def constant(x, level):
    return np.full(x.shape[0], float(level))


FAMILIES = {
    "additive": (
        additive,
        {"A": {"omega": 3.5, "shift": 0.0}, "B": {"omega": 4.0, "shift": 0.5}},
    ),
    "interaction": (
        interaction,
        {"A": {"width": 3.0, "centre": 0.5}, "B": {"width": 4.0, "centre": 0.3}},
    ),
    "oscillatory": (
        oscillatory,
        {"A": {"omega": 6.0, "phase": 0.0}, "B": {"omega": 8.0, "phase": 0.25}},
    ),
    "ridge": (
        ridge,
        {"A": {"centre": 0.5, "width": 0.15}, "B": {"centre": 0.7, "width": 0.05}},
    ),
    "constant": (
        constant,
        {"A": {"level": 1.0}, "B": {"level": -2.5}},
    ),
}

DEFAULT_FAMILIES = ["additive", "interaction", "oscillatory", "ridge"]


class RegistryConfig(BaseModel):
    families: List[str] = DEFAULT_FAMILIES
    variants: List[str] = ["A", "B"]
    dimensions: List[int] = [2, 4, 8]
    holdout_size: int = 1000

    @field_validator("families")
    @classmethod
    def known_families(cls, value):
        unknown = [name for name in value if name not in FAMILIES]
        if unknown:
            raise ValueError(f"Familles inconnues: {unknown}")
        if not value:
            raise ValueError("Au moins une famille est requise")
        return value

    @field_validator("variants")
    @classmethod
    def known_variants(cls, value):
        if not value or any(v not in ("A", "B") for v in value):
            raise ValueError(f"Variantes attendues parmi A, B: {value}")
        return value

    @field_validator("dimensions")
    @classmethod
    def positive_dimensions(cls, value):
        if not value or any(d < 1 for d in value):
            raise ValueError(f"Dimensions strictement positives requises: {value}")
        return value

    @field_validator("holdout_size")
    @classmethod
    def positive_holdout(cls, value):
        if value < 1:
            raise ValueError("holdout_size doit être >= 1")
        return value


@dataclass(frozen=True)
class SizeClass:
    multiplier: int

    def __post_init__(self):
        if self.multiplier < 1:
            raise ArgumentError(f"Multiplicateur invalide: {self.multiplier}")

    @property
    def label(self):
        return f"{self.multiplier}d"

    def resolve(self, dimension):
        n = self.multiplier * dimension
        if n < 2:
            raise ArgumentError(f"Taille {self.label} trop petite pour d={dimension}")
        return n

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        if text.endswith("d"):
            text = text[:-1]
        try:
            return cls(int(text))
        except ValueError:
            raise ArgumentError(f"Classe de taille invalide: {value}")


@dataclass(frozen=True)
class Problem:
    family: str
    variant: str
    dimension: int
    holdout_points: np.ndarray = field(repr=False)
    holdout_values: np.ndarray = field(repr=False)

    @property
    def id(self):
        return f"{self.family}-{self.variant}-{self.dimension}"

    @property
    def checksum(self):
        return hashlib.sha256(np.ascontiguousarray(self.holdout_values).tobytes()).hexdigest()


def _family_function(family):
    try:
        return FAMILIES[family]
    except KeyError:
        raise ConfigError(f"Famille inconnue: {family}")


def _evaluate(family, variant, points):
    function, variants = _family_function(family)
    return function(points, **variants[variant])


def evaluate(problem, points):
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != problem.dimension:
        raise ArgumentError(
            f"Dimension incompatible pour {problem.id}: attendu d={problem.dimension}, "
            f"reçu {points.shape}"
        )
    if points.shape[0] == 0:
        return np.empty(0)
    return _evaluate(problem.family, problem.variant, points)


def _holdout_seed(master_seed, problem_id):
    digest = hashlib.blake2b(
        f"{master_seed}|holdout|{problem_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def build_registry(config, master_seed):
    if isinstance(config, dict):
        try:
            config = RegistryConfig(**config)
        except ValueError as e:
            raise ConfigError(str(e))

    registry = []
    for family in config.families:
        _family_function(family)
        for variant in config.variants:
            for dimension in config.dimensions:
                problem_id = f"{family}-{variant}-{dimension}"
                rng = np.random.default_rng(_holdout_seed(master_seed, problem_id))
                points = rng.random((config.holdout_size, dimension))
                points.setflags(write=False)
                values = _evaluate(family, variant, points)
                values.setflags(write=False)
                registry.append(Problem(family, variant, dimension, points, values))

    logger.info("Registre construit: %d problèmes", len(registry))
    return registry


def registry_manifest(registry):
    return [
        {
            "id": problem.id,
            "family": problem.family,
            "variant": problem.variant,
            "dimension": problem.dimension,
            "holdout_size": int(problem.holdout_points.shape[0]),
            "holdout_sha256": problem.checksum,
        }
        for problem in registry
    ]


def write_registry_manifest(registry, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(registry_manifest(registry), f, indent=2)
    return path
