import json
import logging
import os
from pathlib import Path

import pandas as pd

from data.errors import ConfigError

logger = logging.getLogger(__name__)

COLUMNS = [
    "problem_id",
    "method",
    "size_class",
    "replicate",
    "metric",
    "value",
    "trivial_value",
    "status",
    "wall_time",
]
KEY = ["problem_id", "method", "size_class", "replicate", "metric"]
STATUSES = {"ok", "fit_failed", "degenerate"}
METRICS = ["rmse", "ame"]

DTYPES = {
    "problem_id": str,
    "method": str,
    "size_class": str,
    "metric": str,
    "status": str,
    "value": float,
    "trivial_value": float,
    "wall_time": float,
}


def code_version():
    """Identifiant du commit en conteneur, "0.0.0" en local."""
    commit_id = os.environ.get("GIT_COMMIT_HASH")
    if commit_id:
        return commit_id
    if os.path.exists("/app/git_commit_id.txt"):
        with open("/app/git_commit_id.txt", "r") as f:
            return f.read().strip()
    return "0.0.0"


def _count_rows(path):
    with open(path, "r", encoding="utf-8") as f:
        return sum(1 for line in f if line.strip()) - 1


def read_results(path):
    frame = pd.read_csv(path, dtype=DTYPES, float_precision="round_trip", on_bad_lines="skip")
    missing = set(COLUMNS) - set(frame.columns)
    if missing:
        raise ConfigError(f"Colonnes manquantes dans {path}: {sorted(missing)}")

    # une ligne tronquée par une interruption n'a pas de statut valide
    valid = frame["status"].isin(STATUSES) & frame["replicate"].notna()
    dropped = (_count_rows(path) - len(frame)) + int((~valid).sum())
    if dropped:
        logger.warning("%d lignes mal formées ignorées dans %s", dropped, path)

    frame = frame[valid].astype({"replicate": int})
    return frame[COLUMNS].drop_duplicates(subset=KEY, keep="first").reset_index(drop=True)


class ResultsStore:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.results_path = self.directory / "results.csv"
        self.manifest_path = self.directory / "manifest.json"
        self.frame = pd.DataFrame(columns=COLUMNS)

    @classmethod
    def create(cls, directory):
        store = cls(directory)
        try:
            store.directory.mkdir(parents=True, exist_ok=True)
            marker = store.directory / ".write_test"
            marker.write_text("")
            marker.unlink()
        except OSError as e:
            raise ConfigError(f"Répertoire de sortie non inscriptible: {directory} ({e})")
        return store

    @classmethod
    def load(cls, directory):
        store = cls(directory)
        if store.results_path.exists():
            store.repair_tail()
            if store.results_path.stat().st_size > 0:
                store.frame = read_results(store.results_path)
        return store

    def repair_tail(self):
        """Tronque une dernière ligne incomplète laissée par une interruption."""
        with open(self.results_path, "rb+") as f:
            content = f.read()
            if not content or content.endswith(b"\n"):
                return 0
            keep = content.rfind(b"\n") + 1
            f.truncate(keep)
        logger.warning("Ligne incomplète supprimée en fin de %s", self.results_path)
        return len(content) - keep

    def __len__(self):
        return len(self.frame)

    def completed_cells(self):
        counts = self.frame.groupby(KEY[:-1]).size()
        return set(counts[counts == len(METRICS)].index)

    def append(self, rows):
        """Ajoute des lignes au CSV (mode ajout, jamais de réécriture)."""
        batch = pd.DataFrame(rows, columns=COLUMNS)
        if batch.empty:
            return 0
        header = not self.results_path.exists() or self.results_path.stat().st_size == 0
        batch.to_csv(self.results_path, mode="a", header=header, index=False)
        self.frame = pd.concat([self.frame, batch], ignore_index=True) if len(self.frame) else batch
        return len(batch)

    def finalize(self, problems, methods, sizes, replicates):
        """Réécrit le magasin dans l'ordre canonique, restreint à la grille."""
        frame = read_results(self.results_path) if self.results_path.exists() else self.frame
        order = {
            "problem_id": list(problems),
            "method": list(methods),
            "size_class": list(sizes),
            "metric": METRICS,
        }
        for column, categories in order.items():
            frame = frame[frame[column].isin(categories)]
        frame = frame[frame["replicate"] < replicates]

        sort_keys = frame.assign(
            **{c: pd.Categorical(frame[c], categories=cats, ordered=True) for c, cats in order.items()}
        ).sort_values(KEY, kind="mergesort")
        frame = frame.loc[sort_keys.index].reset_index(drop=True)

        tmp_path = self.results_path.with_suffix(".csv.tmp")
        frame.to_csv(tmp_path, index=False)
        os.replace(tmp_path, self.results_path)
        self.frame = frame
        logger.info("Magasin finalisé: %d lignes dans %s", len(frame), self.results_path)
        return frame

    def write_manifest(self, manifest):
        manifest = dict(manifest)
        manifest.setdefault("code_version", code_version())
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

    def read_manifest(self):
        if not self.manifest_path.exists():
            return None
        with open(self.manifest_path, "r", encoding="utf-8") as f:
            return json.load(f)
