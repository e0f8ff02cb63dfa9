import logging
import math

import numpy as np
import pandas as pd

from data.design_gen import ALL_METHODS
from data.errors import ArgumentError
from data.testbed import SizeClass
from model.metrics import POOR_FIT_RATIO, Scheme, standardize, win_fractions

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "method",
    "n_cells",
    "n_ok",
    "median",
    "mean",
    "win_fraction",
    "poor_fit_fraction",
]


def summarize(store, scheme="trivial", metric="rmse"):
    """Tableau par méthode: médiane et moyenne du score, fraction de victoires,
    fraction au-dessus du seuil de mauvais ajustement (rapport trivial > 0.5).
    """
    frame = getattr(store, "frame", store)
    if frame is None or len(frame) == 0:
        raise ArgumentError("Magasin de résultats vide")
    scheme = Scheme.parse(scheme)

    scores, diagnostics = standardize(frame, scheme, metric)
    best, best_diagnostics = standardize(frame, Scheme.relative_to_best, metric)
    trivial, _ = standardize(frame, Scheme.log10_trivial_ratio, metric)
    diagnostics["degenerate_groups"] = best_diagnostics["degenerate_groups"]

    attempted = frame[frame["metric"] == metric]
    methods = [m.value for m in ALL_METHODS if m.value in set(attempted["method"])]
    wins = win_fractions(best, methods) if not best.empty else pd.Series(0.0, index=methods)
    threshold = math.log10(POOR_FIT_RATIO)

    rows = []
    for method in methods:
        mine = scores.loc[scores["method"] == method, "score"]
        ratios = trivial.loc[trivial["method"] == method, "score"]
        rows.append(
            {
                "method": method,
                "n_cells": int((attempted["method"] == method).sum()),
                "n_ok": int(len(mine)),
                "median": float(mine.median()) if len(mine) else np.nan,
                "mean": float(mine.mean()) if len(mine) else np.nan,
                "win_fraction": float(wins.get(method, 0.0)),
                "poor_fit_fraction": float((ratios > threshold).mean()) if len(ratios) else np.nan,
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS), diagnostics


def method_gap_by_size(scores, method="M4", reference="M2"):
    """Écart des médianes (méthode - référence) pour chaque taille."""
    gaps = {}
    for size, frame in scores.groupby("size_class"):
        a = frame.loc[frame["method"] == method, "score"]
        b = frame.loc[frame["method"] == reference, "score"]
        if len(a) and len(b):
            gaps[size] = float(a.median() - b.median())
    order = sorted(gaps, key=lambda s: SizeClass.parse(s).multiplier)
    return pd.Series([gaps[s] for s in order], index=order, name=f"{method}-{reference}")


def gap_trend_diagnostic(gaps, tolerance=0.05):
    """Vérifie que l'écart ne décroît pas avec la taille (une inversion <= tolérance admise)."""
    drops = [float(b - a) for a, b in zip(gaps.iloc[:-1], gaps.iloc[1:]) if b < a]
    consistent = len(drops) == 0 or (len(drops) == 1 and -drops[0] <= tolerance)
    if not consistent:
        logger.warning(
            "Diagnostic de dépendance au banc d'essai: écarts %s non croissants avec la taille",
            ", ".join(f"{s}={v:.3f}" for s, v in gaps.items()),
        )
    return consistent


def format_summary(table, diagnostics, gaps=None):
    lines = [table.to_string(index=False, float_format=lambda v: f"{v:.4f}")]
    lines.append("")
    lines.append(
        "Cellules en échec: {fit_failed} | cellules dégénérées: {degenerate_cells} | "
        "groupes dégénérés: {degenerate_groups}".format(**diagnostics)
    )
    lines.append("Ex aequo: chaque méthode ex aequo compte comme une victoire.")
    if gaps is not None and len(gaps):
        lines.append(
            f"Écart médian {gaps.name} par taille: "
            + ", ".join(f"{size}={value:.4f}" for size, value in gaps.items())
        )
    return "\n".join(lines)


def write_summary(table, diagnostics, path, gaps=None):
    table.to_csv(f"{path}.csv", index=False)
    with open(f"{path}.txt", "w", encoding="utf-8") as f:
        f.write(format_summary(table, diagnostics, gaps) + "\n")
    return f"{path}.csv", f"{path}.txt"
