"""Command-line entry point.

Every subcommand works on one output directory (``--out``). Configuration
comes from ``--config`` (or ``--manifest``), then ``--set section.key=value``
and the per-field ``--section.key value`` flags, then ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import pipeline
from .config import SECTIONS, RunConfig, override, parse_config
from .embedding import load_embeddings, pca_project, save_embeddings, write_projection
from .errors import LatentUnexpError, ValidationError
from .evaluation import METRIC_COLUMNS, REPORT_HEADERS, read_reports, write_reports
from .synthetic import generate_synthetic

_logger = logging.getLogger("latent_unexp")


def _field_flags(parser):
    group = parser.add_argument_group("configuration fields")
    defaults = RunConfig()
    for name in SECTIONS:
        section = getattr(defaults, name)
        for f in fields(section):
            group.add_argument(
                f"--{name}.{f.name}", dest=f"cfg__{name}__{f.name}", metavar="V",
                default=argparse.SUPPRESS, help=f"(default: {getattr(section, f.name)!r})",
            )


def _common(field_flags):
    parent = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    parent.add_argument("--config", default=S, help="key = value configuration file")
    parent.add_argument("--manifest", default=S, help="take the configuration from a run manifest")
    parent.add_argument("--seed", type=int, default=S, help="root seed (run.seed)")
    parent.add_argument("--out", default=S, help="output directory (default: out)")
    parent.add_argument("--set", action="append", default=S, metavar="KEY=VALUE",
                        help="override one configuration field; repeatable")
    parent.add_argument("-v", "--verbose", action="count", default=S)
    if field_flags:
        _field_flags(parent)
    return parent


def build_parser():
    common = _common(field_flags=True)
    parser = argparse.ArgumentParser(
        prog="latent-unexp", parents=[_common(field_flags=False)],
        description="Latent-closure unexpectedness recommender: pipeline stages and experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, **kw):
        return sub.add_parser(name, parents=[common], help=help_, description=help_, **kw)

    add("ingest", "validate and filter a ratings CSV into <out>/interactions.csv")
    add("synth", "write a synthetic world (ratings, item embeddings, clusters) into <out>")
    p = add("embed", "train or load item embeddings into <out>/embeddings.luem")
    p.add_argument("--text", metavar="PATH", help="also write the item embeddings in text format")
    add("closures", "build user closures into <out>/closures.lucl")
    add("train", "train the rating estimator and the primitive bias model")
    for name, help_ in (("recommend", "write top-N recommendations"),
                        ("evaluate", "recommend and evaluate, writing <out>/report.csv"),
                        ("run", "full pipeline from scratch (use --reuse to keep persisted artifacts)"),
                        ("sweep", "alpha sweep over eval.sweep_grid into <out>/sweep.csv")):
        p = add(name, help_)
        p.add_argument("--reuse", action=argparse.BooleanOptionalAction, default=name != "run",
                       help="reuse persisted embeddings, closures and models")
    p = add("project", "PCA projection of an embedding file to CSV")
    p.add_argument("--embeddings", help="embedding file (default: <out>/embeddings.luem)")
    p.add_argument("--dims", type=int, default=2)
    p = add("ttest", "Welch t-test per metric between two report CSVs")
    p.add_argument("reports", nargs=2, metavar="REPORT_CSV")
    p = add("experiment", "alpha=0 vs alpha>0 over estimators x closures x seeded reruns")
    p.add_argument("--estimators", default="mf,nmf,knn")
    p.add_argument("--closures", default="sphere,box,hull")
    p.add_argument("--runs", type=int, help="number of reruns (default: eval.significance_runs)")
    return parser


def load_config(args):
    if getattr(args, "manifest", None):
        cfg = pipeline.config_from_manifest(args.manifest)
    elif getattr(args, "config", None):
        cfg = parse_config(args.config)
    else:
        cfg = RunConfig()
    values = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for dest, v in vars(args).items():
        if dest.startswith("cfg__"):
            _, section, key = dest.split("__", 2)
            values[f"{section}.{key}"] = v
    if getattr(args, "seed", None) is not None:
        values["run.seed"] = args.seed
    return override(cfg, values) if values else cfg


def _print_report(report):
    for header, name in zip(REPORT_HEADERS, METRIC_COLUMNS):
        print(f"{header:>6}  {getattr(report, name):.6f}")


def cmd_ingest(cfg, out, args):
    pre = pipeline.run_stages(cfg, out, "ingest", reuse=False)
    log = pre.log
    print(f"{len(log)} interactions, {log.user_count} users, {log.item_count} items -> {pre.paths['interactions']}")


def cmd_synth(cfg, out, args):
    log, table, truth = generate_synthetic(pipeline.synthetic_spec(cfg))
    out.mkdir(parents=True, exist_ok=True)
    from .dataset import write_ratings

    write_ratings(log, out / "ratings.csv")
    save_embeddings(table, out / "item_embeddings.txt")
    with open(out / "item_clusters.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "cluster"])
        for i, c in enumerate(truth.item_clusters.tolist()):
            w.writerow([f"i{i}", c])
    print(f"{len(log)} ratings, {table.dim}-d item embeddings -> {out}")


def cmd_embed(cfg, out, args):
    pre = pipeline.run_stages(cfg, out, "embed", reuse=False)
    if args.text:
        save_embeddings(load_embeddings(pre.paths["embeddings"], "item"), args.text, binary=False)
    print(f"{int(pre.items.mask.sum())} item embeddings of dim {pre.items.dim} -> {pre.paths['embeddings']}")


def cmd_closures(cfg, out, args):
    pre = pipeline.run_stages(cfg, out, "closures", reuse=True)
    cold = sum(p.cold for p in pre.profiles.values())
    print(f"{len(pre.profiles)} profiles ({cold} cold) -> {pre.paths['closures']}")


def cmd_train(cfg, out, args):
    pre = pipeline.run_stages(cfg, out, "train", reuse=True)
    print(f"{cfg.estimator.kind} model -> {pre.paths['model']}; primitive model -> {pre.paths['pm_model']}")


def cmd_recommend(cfg, out, args):
    res = pipeline.run_pipeline(cfg, out, reuse=args.reuse, evaluate_results=False)
    print(f"top-{cfg.recommender.top_n} lists for {len(res.recs)} users -> {res.paths['recommendations']}")


def cmd_evaluate(cfg, out, args):
    res = pipeline.run_pipeline(cfg, out, reuse=args.reuse)
    _print_report(res.report)
    print(f"report -> {res.paths['report']}")


def cmd_sweep(cfg, out, args):
    table, path = pipeline.run_sweep(cfg, out, reuse=args.reuse)
    print(f"{len(table.rows)} alpha values -> {path}")


def cmd_project(cfg, out, args):
    src = Path(args.embeddings) if args.embeddings else out / "embeddings.luem"
    if not src.exists():
        raise ValidationError(f"embedding file not found: {src}")
    proj = pca_project(load_embeddings(src), args.dims)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "projection.csv"
    write_projection(proj, path)
    ratio = ", ".join(f"{r:.3f}" for r in proj.explained_variance_ratio)
    print(f"{len(proj.ids)} points, explained variance ratio [{ratio}] -> {path}")


def cmd_ttest(cfg, out, args):
    a, b = (read_reports(p) for p in args.reports)
    results = pipeline.significance(a, b)
    print(f"{'metric':>6}  {'mean A':>10}  {'mean B':>10}  {'t':>9}  {'p':>9}")
    for header, name in zip(REPORT_HEADERS, METRIC_COLUMNS):
        t, p = results[name]
        ma = sum(getattr(r, name) for r in a) / len(a)
        mb = sum(getattr(r, name) for r in b) / len(b)
        print(f"{header:>6}  {ma:10.6f}  {mb:10.6f}  {t:9.4f}  {p:9.3g}")


def cmd_experiment(cfg, out, args):
    runs = args.runs or cfg.eval.significance_runs
    estimators = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
    closures = tuple(s.strip() for s in args.closures.split(",") if s.strip())
    alpha = cfg.recommender.alpha
    if alpha == 0:
        raise ValidationError("experiment compares alpha = 0 against recommender.alpha, which must be > 0")
    results = pipeline.robustness_matrix(cfg, estimators, closures, (0.0, alpha), range(runs))
    out.mkdir(parents=True, exist_ok=True)
    write_reports([r for per in results.values() for rs in per.values() for r in rs], out / "experiment.csv")
    with open(out / "significance.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "closure", "metric", "mean_base", "mean_alpha", "t", "p"])
        for (e, c), per in results.items():
            sig = pipeline.significance(per[alpha], per[0.0])
            for name in METRIC_COLUMNS:
                base = sum(getattr(r, name) for r in per[0.0]) / runs
                new = sum(getattr(r, name) for r in per[alpha]) / runs
                w.writerow([e, c, name, repr(base), repr(new), repr(sig[name][0]), repr(sig[name][1])])
            u0 = sum(r.unexp for r in per[0.0]) / runs
            u1 = sum(r.unexp for r in per[alpha]) / runs
            print(f"{e:>4} {c:>6}: Unexp {u0:.4f} -> {u1:.4f} (p={sig['unexp'][1]:.2g})")
    print(f"reports -> {out / 'experiment.csv'}; tests -> {out / 'significance.csv'}")


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "embed": cmd_embed, "closures": cmd_closures,
    "train": cmd_train, "recommend": cmd_recommend, "evaluate": cmd_evaluate, "run": cmd_evaluate,
    "sweep": cmd_sweep, "project": cmd_project, "ttest": cmd_ttest, "experiment": cmd_experiment,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    verbosity = getattr(args, "verbose", 0) or 0
    logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = Path(getattr(args, "out", None) or "out")
        COMMANDS[args.command](cfg, out, args)
    except LatentUnexpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
