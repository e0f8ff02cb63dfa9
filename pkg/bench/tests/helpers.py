import numpy as np
import pandas as pd

from data.store import COLUMNS

METHODS = ["M1", "M2", "M3", "M4", "M5", "M6", "M7"]


def synthetic_store(problems=("additive-A-2",), methods=METHODS, sizes=("5d",), replicates=3, seed=0):
    """Magasin de résultats synthétique: valeurs aléatoires, prédicteur trivial à 1."""
    rng = np.random.default_rng(seed)
    rows = []
    for problem in problems:
        for method in methods:
            for size in sizes:
                for replicate in range(replicates):
                    value = float(rng.uniform(0.01, 1.0))
                    for metric, factor in (("rmse", 1.0), ("ame", 2.5)):
                        rows.append(
                            {
                                "problem_id": problem,
                                "method": method,
                                "size_class": size,
                                "replicate": replicate,
                                "metric": metric,
                                "value": value * factor,
                                "trivial_value": factor,
                                "status": "ok",
                                "wall_time": np.nan,
                            }
                        )
    return pd.DataFrame(rows, columns=COLUMNS)


def rows_for(problem, method, size, replicate, rmse, trivial=1.0, status="ok"):
    return [
        {
            "problem_id": problem,
            "method": method,
            "size_class": size,
            "replicate": replicate,
            "metric": metric,
            "value": rmse if metric == "rmse" else (None if rmse is None else 2 * rmse),
            "trivial_value": trivial if metric == "rmse" else 2 * trivial,
            "status": status,
            "wall_time": np.nan,
        }
        for metric in ("rmse", "ame")
    ]


def store_from(rows):
    return pd.DataFrame(rows, columns=COLUMNS)
