import os
import sys
import argparse
import logging
from pathlib import Path

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bench.config import load_config
from data.design_gen import Method, build_design, permute_columns
from data.errors import BenchError, ConfigError
from data.store import ResultsStore, read_results
from data.testbed import SizeClass
from model.metrics import Scheme, standardize
from model.profiles import (
    CollapseSpec,
    collapse,
    data_profile,
    performance_profile,
    performance_table,
    size_boundaries,
    write_curves,
)
from model.runner import fit_failed_count, resume, run_study
from report.summary import format_summary, gap_trend_diagnostic, method_gap_by_size, summarize, write_summary
from report.svg import Panel, PlotSpec, render_document

logger = logging.getLogger("bench")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_FIT_FAILED = 2


def load_store(path):
    """Accepte le répertoire d'une étude ou directement son results.csv."""
    path = Path(path)
    if path.is_dir():
        store = ResultsStore.load(path)
    elif path.exists():
        store = ResultsStore(path.parent)
        store.frame = read_results(path)
    else:
        raise ConfigError(f"Magasin introuvable: {path}")
    if len(store) == 0:
        raise ConfigError(f"Magasin vide: {path}")
    return store


def score_label(scheme, metric, base=10.0):
    name = metric.upper()
    if Scheme.parse(scheme) is Scheme.relative_to_best:
        return f"({name} - {name}*) / {name}*"
    log = "log10" if base == 10.0 else f"log base {base:g}"
    return f"{log}({name} / {name} trivial)"


def _sizes(frame):
    return sorted(frame["size_class"].unique(), key=lambda s: SizeClass.parse(s).multiplier)


def _stem(out):
    out = Path(out)
    return str(out.with_suffix("")) if out.suffix == ".svg" else str(out)


def collapse_spec(collapse, problem=None, size=None):
    if collapse == "none":
        if problem is None or size is None:
            raise ConfigError("--collapse none exige --problem et --size")
        return CollapseSpec(fixed={"problem": problem, "size_class": size})
    if collapse == "sizes":
        if problem is None:
            raise ConfigError("--collapse sizes exige --problem")
        return CollapseSpec(collapse_over=["size_class"], fixed={"problem": problem})
    if size is not None:
        return CollapseSpec(collapse_over=["problem"], fixed={"size_class": size})
    return CollapseSpec(collapse_over=["problem", "size_class"])


def cmd_run(args):
    config = load_config(args.config, master_seed=args.seed, out=args.out, parallel=args.parallel)
    manifest = Path(config.out) / "manifest.json"
    if args.resume and manifest.exists():
        store = resume(config.out, config)
    else:
        store = run_study(config)

    failed = fit_failed_count(store)
    print(f"{len(store)} lignes écrites dans {store.results_path}")
    if failed:
        logger.warning("%d cellules en échec d'ajustement", failed)
        return EXIT_FIT_FAILED
    return EXIT_OK


def cmd_profile(args):
    store = load_store(args.store)
    stem = _stem(args.out)
    spec = None
    boundaries = []

    if args.kind == "performance":
        curves = performance_profile(performance_table(store.frame, args.metric))
        diagnostics = {}
        xlabel = f"rapport de performance ({args.metric.upper()} / meilleur)"
        title = "profil de performance"
    else:
        scores, diagnostics = standardize(store.frame, args.scheme, args.metric, base=args.base)
        spec = collapse_spec(args.collapse, args.problem, args.size)
        xlabel = score_label(args.scheme, args.metric, args.base)
        title = spec.title()
        if args.kind == "data":
            curves = data_profile(scores, threshold=args.threshold, budget=args.budget)
            xlabel = f"budget ({args.budget})"
            title = f"profil de données, seuil {args.threshold:g}"
        else:
            curves = collapse(scores, spec)
            if args.boundaries:
                boundaries = size_boundaries(scores, spec)

    if not curves:
        raise ConfigError("Aucune courbe: vérifier --problem / --size")

    panel = Panel("ecdf", curves, title, xlabel, "proportion", boundaries)
    render_document([panel], PlotSpec(boundaries=args.boundaries, out=args.out))
    write_curves(curves, stem, spec, Scheme.parse(args.scheme), boundaries, diagnostics)
    print(f"Profil écrit: {args.out} ({len(curves)} courbes, {len(boundaries)} frontières)")
    return EXIT_OK


def boxplot_groups(frame, scheme, metric, problem, size, base=10.0):
    if scheme == "raw":
        rows = frame[
            (frame["metric"] == metric)
            & (frame["status"] == "ok")
            & (frame["problem_id"] == problem)
            & (frame["size_class"] == size)
        ]
        values = rows.rename(columns={"value": "score"})
    else:
        scores, _ = standardize(frame, scheme, metric, base=base)
        values = scores[(scores["problem_id"] == problem) & (scores["size_class"] == size)]
    return {method: group["score"].to_numpy() for method, group in values.groupby("method", sort=False)}


def cmd_boxplot(args):
    store = load_store(args.store)
    frame = store.frame[store.frame["problem_id"] == args.problem]
    if frame.empty:
        raise ConfigError(f"Problème absent du magasin: {args.problem}")

    sizes = [args.size] if args.size else _sizes(frame)
    ylabel = args.metric.upper() if args.scheme == "raw" else score_label(args.scheme, args.metric)
    panels = []
    for size in sizes:
        groups = boxplot_groups(frame, args.scheme, args.metric, args.problem, size)
        if groups:
            panels.append(Panel("boxplot", groups, f"problem={args.problem} | size_class={size}", None, ylabel))
    if not panels:
        raise ConfigError("Aucune valeur à tracer")

    render_document(panels, PlotSpec(rows=1, cols=len(panels), out=args.out))
    print(f"Boîtes à moustaches écrites: {args.out}")
    return EXIT_OK


def cmd_summary(args):
    store = load_store(args.store)
    table, diagnostics = summarize(store.frame, args.scheme, args.metric)

    gaps = None
    methods = set(store.frame["method"])
    if {"M2", "M4"} <= methods:
        scores, _ = standardize(store.frame, "trivial", args.metric)
        gaps = method_gap_by_size(scores, "M4", "M2")
        if len(gaps) > 1:
            gap_trend_diagnostic(gaps)

    print(format_summary(table, diagnostics, gaps))
    if args.out:
        write_summary(table, diagnostics, args.out, gaps)
    return EXIT_OK


def problem_figure(frame, problem, out=None):
    """Boîtes à moustaches en haut, ECDF par taille en bas."""
    frame = frame[frame["problem_id"] == problem]
    if frame.empty:
        raise ConfigError(f"Problème absent du magasin: {problem}")
    scores, _ = standardize(frame, "trivial", "rmse")
    sizes = _sizes(scores)
    label = score_label("trivial", "rmse")

    top, bottom = [], []
    for size in sizes:
        subset = scores[scores["size_class"] == size]
        groups = {m: g["score"].to_numpy() for m, g in subset.groupby("method", sort=False)}
        spec = CollapseSpec(fixed={"problem": problem, "size_class": size})
        top.append(Panel("boxplot", groups, spec.title(), None, label))
        bottom.append(Panel("ecdf", collapse(subset, spec), spec.title(), label, "proportion"))

    spec = PlotSpec(rows=2, cols=len(sizes), title=f"Boîtes et ECDF: {problem}", out=out)
    return render_document(top + bottom, spec)


def overview_figure(frame, size, out=None):
    """Trois panneaux regroupés sur les problèmes pour une taille donnée."""
    spec = CollapseSpec(collapse_over=["problem"], fixed={"size_class": size})
    panels = []
    for scheme, metric in (("trivial", "rmse"), ("trivial", "ame"), ("best", "rmse")):
        scores, _ = standardize(frame, scheme, metric)
        curves = collapse(scores, spec)
        if not curves:
            raise ConfigError(f"Aucun score pour la taille {size}")
        panels.append(Panel("ecdf", curves, f"{metric.upper()} | {spec.title()}", score_label(scheme, metric), "proportion"))
    return render_document(panels, PlotSpec(rows=1, cols=3, title=f"ECDF sur tous les problèmes, {size}", out=out))


def cmd_figure(args):
    store = load_store(args.store)
    if args.overview:
        if not args.size:
            raise ConfigError("--overview exige --size")
        overview_figure(store.frame, args.size, args.out)
    elif args.problem:
        problem_figure(store.frame, args.problem, args.out)
    else:
        raise ConfigError("--problem ou --overview requis")
    print(f"Figure écrite: {args.out}")
    return EXIT_OK


def cmd_design(args):
    design = build_design(Method.parse(args.method), args.n, args.d, args.seed, args.maximin_budget)
    if args.replicate:
        design = permute_columns(design, args.replicate, args.seed)
    design.to_csv(args.out)
    print(f"Plan {getattr(design.method, 'value', design.method)} ({design.n}×{design.d}) écrit dans {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description="Banc d'essai de plans d'expériences par profils ECDF")
    parser.add_argument("-v", "--verbose", action="store_true", help="journalisation DEBUG")
    # -v accepté aussi après la sous-commande, sans écraser la valeur globale
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="journalisation DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="lancer (ou reprendre) une étude")
    run.add_argument("--config", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--parallel", type=int, default=None)
    run.add_argument("--resume", action="store_true", help="compléter un magasin existant")
    run.set_defaults(func=cmd_run)

    profile = sub.add_parser("profile", parents=[common], help="ECDF et profils en SVG")
    profile.add_argument("--store", required=True)
    profile.add_argument("--scheme", choices=["trivial", "best"], default="trivial")
    profile.add_argument("--metric", choices=["rmse", "ame"], default="rmse")
    profile.add_argument("--collapse", choices=["none", "sizes", "all"], default="all")
    profile.add_argument("--boundaries", action="store_true")
    profile.add_argument("--problem", default=None)
    profile.add_argument("--size", default=None)
    profile.add_argument("--kind", choices=["ecdf", "performance", "data"], default="ecdf")
    profile.add_argument("--threshold", type=float, default=-1.0, help="seuil de résolution (profil de données)")
    profile.add_argument("--budget", choices=["multiplier", "n", "wall_time"], default="multiplier")
    profile.add_argument("--base", type=float, default=10.0, help="base du logarithme")
    profile.add_argument("--out", required=True)
    profile.set_defaults(func=cmd_profile)

    boxplot = sub.add_parser("boxplot", parents=[common], help="boîtes à moustaches pour un problème")
    boxplot.add_argument("--store", required=True)
    boxplot.add_argument("--problem", required=True)
    boxplot.add_argument("--scheme", choices=["raw", "trivial"], default="raw")
    boxplot.add_argument("--metric", choices=["rmse", "ame"], default="rmse")
    boxplot.add_argument("--size", default=None)
    boxplot.add_argument("--out", required=True)
    boxplot.set_defaults(func=cmd_boxplot)

    summary = sub.add_parser("summary", parents=[common], help="tableau récapitulatif par méthode")
    summary.add_argument("--store", required=True)
    summary.add_argument("--scheme", choices=["trivial", "best"], default="trivial")
    summary.add_argument("--metric", choices=["rmse", "ame"], default="rmse")
    summary.add_argument("--out", default=None, help="préfixe des fichiers .csv et .txt")
    summary.set_defaults(func=cmd_summary)

    figure = sub.add_parser("figure", parents=[common], help="figures composées")
    figure.add_argument("--store", required=True)
    figure.add_argument("--problem", default=None)
    figure.add_argument("--overview", action="store_true")
    figure.add_argument("--size", default=None)
    figure.add_argument("--out", required=True)
    figure.set_defaults(func=cmd_figure)

    design = sub.add_parser("design", parents=[common], help="écrire un plan d'expériences en CSV")
    design.add_argument("--method", required=True)
    design.add_argument("--n", type=int, required=True)
    design.add_argument("--d", type=int, required=True)
    design.add_argument("--seed", type=int, default=0)
    design.add_argument("--replicate", type=int, default=0)
    design.add_argument("--maximin-budget", type=int, default=1000)
    design.add_argument("--out", required=True)
    design.set_defaults(func=cmd_design)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (BenchError, OSError) as e:
        logger.error("%s", e)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
