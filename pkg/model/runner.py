import hashlib
import json
import logging
import time
from pathlib import Path
from typing import List

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, field_validator, model_validator
from threadpoolctl import threadpool_limits

from data.design_gen import ALL_METHODS, Method, build_design, check_design_size, permute_columns
from data.errors import ArgumentError, ConfigError, ConfigMismatchError, GPFitError
from data.store import ResultsStore
from data.testbed import (
    RegistryConfig,
    SizeClass,
    build_registry,
    evaluate,
    registry_manifest,
    write_registry_manifest,
)
from model.emulator import GPSettings, fit_gp, fit_trivial, predict
from model.metrics import EvaluationRecord, Status, ame, rmse

logger = logging.getLogger(__name__)

# Les plans cosinus partagent la graine de leur plan source
BASE_METHOD = {
    Method.M4_CosMaximin: Method.M2_MaximinLHS,
    Method.M5_CosZeroCorr: Method.M3_ZeroCorrLHS,
}

# champs qui déterminent le contenu d'une cellule
HASHED_FIELDS = ["registry", "master_seed", "maximin_budget", "gp", "record_wall_time"]
# réglages d'exécution, absents du manifeste
RUNTIME_FIELDS = {"out", "parallel", "batch_size", "debug_models"}


class StudyConfig(BaseModel):
    registry: RegistryConfig = Field(default_factory=RegistryConfig)
    methods: List[str] = [m.value for m in ALL_METHODS]
    multipliers: List[int] = [5, 10, 15]
    replicates: int = 50
    master_seed: int = 0
    maximin_budget: int = 1000
    gp: GPSettings = Field(default_factory=GPSettings)
    record_wall_time: bool = False
    debug_models: bool = False
    out: str = "results"
    parallel: int = 1
    batch_size: int = 16

    @field_validator("methods")
    @classmethod
    def known_methods(cls, value):
        if not value:
            raise ValueError("Au moins une méthode est requise")
        methods = [Method.parse(m).value for m in value]
        order = [m.value for m in ALL_METHODS]
        return sorted(set(methods), key=order.index)

    @field_validator("multipliers")
    @classmethod
    def positive_multipliers(cls, value):
        if not value or any(m < 1 for m in value):
            raise ValueError(f"Multiplicateurs strictement positifs requis: {value}")
        return sorted(set(value))

    @field_validator("replicates", "parallel", "batch_size")
    @classmethod
    def at_least_one(cls, value):
        if value < 1:
            raise ValueError("doit être >= 1")
        return value

    @field_validator("master_seed")
    @classmethod
    def unsigned_seed(cls, value):
        if not 0 <= value < 2**64:
            raise ValueError("master_seed doit tenir sur 64 bits non signés")
        return value

    @field_validator("maximin_budget")
    @classmethod
    def non_negative_budget(cls, value):
        if value < 0:
            raise ValueError("maximin_budget doit être >= 0")
        return value

    @model_validator(mode="after")
    def feasible_designs(self):
        # chaque (méthode, d, taille) de la grille doit produire un plan
        for method in self.methods:
            for dimension in self.registry.dimensions:
                for size in self.size_classes:
                    try:
                        check_design_size(method, size.resolve(dimension), dimension)
                    except ArgumentError as e:
                        raise ValueError(f"Plan {method} impossible en {size.label}, d={dimension}: {e}")
        return self

    @property
    def size_classes(self):
        return [SizeClass(m) for m in self.multipliers]


def hashed_config(config):
    dump = config.model_dump(mode="json")
    return {name: dump[name] for name in HASHED_FIELDS}


def config_hash(config):
    payload = json.dumps(hashed_config(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def derive_cell_seed(master_seed, problem_id, method, size_class, replicate):
    method = getattr(method, "value", method)
    size_class = getattr(size_class, "label", size_class)
    payload = f"{master_seed}|{problem_id}|{method}|{size_class}|{replicate}"
    digest = hashlib.blake2b(payload.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def base_design(config, problem, method, size):
    method = Method.parse(method)
    seed = derive_cell_seed(
        config.master_seed, problem.id, BASE_METHOD.get(method, method), size, "base"
    )
    n = size.resolve(problem.dimension)
    return build_design(method, n, problem.dimension, seed, config.maximin_budget)


def _write_model_summary(config, cell, model):
    directory = Path(config.out) / "models"
    directory.mkdir(parents=True, exist_ok=True)
    name = "_".join(str(part) for part in cell) + ".json"
    with open(directory / name, "w", encoding="utf-8") as f:
        json.dump(model.summary(), f, indent=2)


def evaluate_cell(config, problem, base, method, size, replicate):
    cell = (problem.id, method, size.label, replicate)
    seed = derive_cell_seed(config.master_seed, *cell)
    start = time.perf_counter()

    design = permute_columns(base, replicate, seed)
    values = evaluate(problem, design.points)
    truth = problem.holdout_values

    trivial = np.full(truth.shape[0], fit_trivial(values).mean)
    rmse_trivial, ame_trivial = rmse(truth, trivial), ame(truth, trivial)

    status, rmse_gp, ame_gp = Status.ok, None, None
    if not rmse_trivial > 0:
        logger.warning("Réponses de test constantes pour %s: cellule dégénérée", problem.id)
        status = Status.degenerate
    else:
        try:
            settings = config.gp.model_copy(update={"seed": seed})
            model = fit_gp(design.points, values, settings, cell=cell)
            pred = predict(model, problem.holdout_points)
            rmse_gp, ame_gp = rmse(truth, pred), ame(truth, pred)
            if config.debug_models:
                _write_model_summary(config, cell, model)
        except (GPFitError, ArgumentError, np.linalg.LinAlgError) as e:
            logger.warning("Échec de l'ajustement pour %s: %s", cell, e)
            status = Status.fit_failed

    wall_time = time.perf_counter() - start if config.record_wall_time else None
    return EvaluationRecord(
        problem.id, method, size.label, replicate, rmse_gp, ame_gp,
        rmse_trivial, ame_trivial, status, wall_time,
    )


def run_task(config, problem, method, size, replicates):
    """Un plan de base par (problème, méthode, taille), puis ses répliques."""
    with threadpool_limits(limits=1):
        base = base_design(config, problem, method, size)
        rows = []
        for replicate in replicates:
            record = evaluate_cell(config, problem, base, method, size, replicate)
            rows.extend(record.rows())
        return rows


def run_cell(config, problem, method, size, replicate):
    """Calcule une cellule isolément (même résultat que dans l'étude complète)."""
    size = SizeClass.parse(size)
    with threadpool_limits(limits=1):
        base = base_design(config, problem, method, size)
        return evaluate_cell(config, problem, base, method, size, replicate)


def _tasks(config, registry, completed):
    tasks = []
    for problem in registry:
        for method in config.methods:
            for size in config.size_classes:
                missing = [
                    r
                    for r in range(config.replicates)
                    if (problem.id, method, size.label, r) not in completed
                ]
                if missing:
                    tasks.append((problem, method, size, missing))
    return tasks


def _manifest(config, registry, store):
    status_counts = (
        store.frame[store.frame["metric"] == "rmse"]["status"].value_counts().to_dict()
        if len(store.frame)
        else {}
    )
    return {
        "config_hash": config_hash(config),
        "config": config.model_dump(mode="json", exclude=RUNTIME_FIELDS),
        "registry": registry_manifest(registry),
        "counts": {
            "cells": int(sum(status_counts.values())),
            **{str(k): int(v) for k, v in status_counts.items()},
        },
    }


def run_study(config, resume=False):
    store = ResultsStore.create(config.out)
    if not resume and store.results_path.exists():
        logger.info("Nouvelle étude: suppression de %s", store.results_path)
        store.results_path.unlink()
    if resume:
        store = ResultsStore.load(config.out)

    registry = build_registry(config.registry, config.master_seed)
    write_registry_manifest(registry, store.directory / "registry.json")
    store.write_manifest(_manifest(config, registry, store))

    tasks = _tasks(config, registry, store.completed_cells())
    n_cells = sum(len(task[3]) for task in tasks)
    logger.info("%d tâches, %d cellules à calculer (parallélisme %d)", len(tasks), n_cells, config.parallel)

    batches = [tasks[i : i + config.batch_size] for i in range(0, len(tasks), config.batch_size)]
    with Parallel(n_jobs=config.parallel) as parallel:
        for index, batch in enumerate(batches, start=1):
            results = parallel(delayed(run_task)(config, *task) for task in batch)
            store.append([row for rows in results for row in rows])
            logger.info("Lot %d/%d terminé", index, len(batches))

    store.finalize(
        [problem.id for problem in registry],
        config.methods,
        [size.label for size in config.size_classes],
        config.replicates,
    )
    store.write_manifest(_manifest(config, registry, store))
    return store


def resume(store_path, config):
    store = ResultsStore.load(store_path)
    manifest = store.read_manifest()
    if manifest is None:
        raise ConfigError(f"Aucun manifeste dans {store_path}")

    expected = config_hash(config)
    if manifest.get("config_hash") != expected:
        previous = {name: manifest.get("config", {}).get(name) for name in HASHED_FIELDS}
        current = hashed_config(config)
        diff = {
            name: {"store": previous[name], "config": current[name]}
            for name in HASHED_FIELDS
            if previous[name] != current[name]
        }
        raise ConfigMismatchError(
            "Configuration différente de celle du magasin: " + ", ".join(sorted(diff)),
            diff=diff,
        )

    config = config.model_copy(update={"out": str(store_path)})
    return run_study(config, resume=True)


def fit_failed_count(store):
    frame = store.frame
    return int(((frame["metric"] == "rmse") & (frame["status"] == Status.fit_failed.value)).sum())
