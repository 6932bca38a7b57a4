"""Command line interface: ``survboost {fit,cv,simulate,compare}``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numeric or degeneracy error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, engine, metrics, report, simlab, study
from .km import UnboundedWeightError
from .learners import BaseLearnerSpec, LearnerKind
from .losses import LossKind
from .survdata import DataValidationError, load_delimited, standardize

log = logging.getLogger("survboost")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

ERRORS = {
    "normal": simlab.Normal(),
    "extreme-value": simlab.ExtremeValue(),
    "contaminated": simlab.ContaminatedNormal(),
    "t3": simlab.StudentT(3),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="survboost", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"survboost {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def boosting_flags(sp, losses_many=False):
        if losses_many:
            sp.add_argument("--loss", action="append", choices=[k.value for k in LossKind],
                            help="repeat to compare several losses")
        else:
            sp.add_argument("--loss", choices=[k.value for k in LossKind], default="gehan")
        sp.add_argument("--learner", choices=[k.value for k in LearnerKind], default="linear")
        sp.add_argument("--tree-depth", type=int, default=2)
        sp.add_argument("--nu", type=float, default=0.1)
        sp.add_argument("--mstop-max", type=_positive_int, default=1000)
        sp.add_argument("--grid-step", type=_positive_int, default=10)
        sp.add_argument("--folds", type=int, default=5)
        sp.add_argument("--stratify", action="store_true",
                        help="balance events across CV folds")
        sp.add_argument("--weight-cap", type=float, default=None,
                        help="cap IPCW weights (departs from the plain estimator)")
        sp.add_argument("--seed", type=_nonneg_int, default=0)
        sp.add_argument("--threads", type=_positive_int, default=1)
        sp.add_argument("--out-dir", type=Path, required=True)

    def data_flags(sp):
        sp.add_argument("--input", type=Path, required=True)
        sp.add_argument("--time-col", default="time")
        sp.add_argument("--status-col", default="status")

    fit = sub.add_parser("fit", help="fit one ensemble")
    data_flags(fit)
    boosting_flags(fit)
    fit.add_argument("--mstop", type=_nonneg_int, default=None,
                     help="iterations; tuned by CV when omitted")

    cv = sub.add_parser("cv", help="cross-validate m_stop")
    data_flags(cv)
    boosting_flags(cv)

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--scenario", required=True,
                     help=f"preset ({', '.join(simlab.PRESETS)}) or key=value scenario file")
    sim.add_argument("--replicates", type=_positive_int, default=None)
    sim.add_argument("--error", choices=sorted(ERRORS), default=None,
                     help="error law for presets fig3/fig5 (default normal)")
    sim.add_argument("--n", type=_positive_int, default=None, help="sample size for presets")
    boosting_flags(sim, losses_many=True)

    cmp_ = sub.add_parser("compare", help="compare losses on one dataset")
    data_flags(cmp_)
    boosting_flags(cmp_, losses_many=True)
    return p


def _config(args, loss: str) -> engine.BoostConfig:
    try:
        learner = BaseLearnerSpec(LearnerKind(args.learner), args.tree_depth)
        return engine.BoostConfig(
            loss=LossKind(loss), learner=learner, nu=args.nu, m_max=args.mstop_max,
            cv_folds=args.folds, cv_grid_step=args.grid_step, seed=args.seed,
            stratify=args.stratify, weight_cap=args.weight_cap,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _manifest(args, extra=None) -> str:
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    doc = {
        "tool": "survboost",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "flags": flags,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _load(args):
    delimiter = "\t" if args.input.suffix.lower() in (".tsv", ".tab") else ","
    raw = load_delimited(args.input, args.time_col, args.status_col, delimiter)
    return standardize(raw)


def _check_cv_rows(data, config):
    if data.n < 2 * config.cv_folds and config.cv_folds != data.n:
        raise UsageError(f"{data.n} rows are too few for {config.cv_folds}-fold CV")


def _coef_text(ens) -> str:
    beta = study.reported_coefficients(ens)
    table = report.coefficient_table(ens.column_names, {ens.loss.value: beta})
    return table.render()


def _tree_summary(ens) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "features", "leaves"])
    for m, u in enumerate(ens.updates, start=1):
        feats = ";".join(ens.column_names[j] for j in sorted(u.features()))
        w.writerow([m, feats, len(u.leaves())])
    return buf.getvalue()


def _scores_text(f) -> str:
    return "row,score\n" + "".join(f"{i},{v:.10g}\n" for i, v in enumerate(f))


def cmd_fit(args) -> int:
    config = _config(args, args.loss)
    data, std = _load(args)
    extra = {}
    if args.mstop is None:
        _check_cv_rows(data, config)
        ens, curve = engine.fit_cv(data, config, std, threads=args.threads)
        extra["chosen_mstop"] = curve.chosen_mstop
    else:
        ens = engine.boost(data, config, args.mstop, std)
    out = args.out_dir
    _write(out / "ensemble.json", engine.dumps_ensemble(ens))
    if ens.is_linear:
        _write(out / "coefficients.csv", _coef_text(ens))
    else:
        _write(out / "tree_summary.csv", _tree_summary(ens))
        _write(out / "scores.csv", _scores_text(engine.predict(ens, data.covariates, standardized=True)))
    _write(out / "manifest.json", _manifest(args, extra))
    print(f"m_stop={ens.m_stop}")
    return EXIT_OK


def format_cv_curve(curve: engine.CvCurve, config: engine.BoostConfig) -> str:
    lines = [
        f"# loss={config.loss.value} learner={config.learner.label} folds={config.cv_folds} "
        f"nu={config.nu!r} seed={config.seed} chosen_mstop={curve.chosen_mstop}",
    ]
    lines += [f"# warning: {w}" for w in curve.warnings]
    lines.append("m,mean_heldout_loss")
    lines += [f"{m},{v:.12g}" for m, v in zip(curve.grid, curve.mean_heldout_loss)]
    return "\n".join(lines) + "\n"


def cmd_cv(args) -> int:
    config = _config(args, args.loss)
    data, _ = _load(args)
    _check_cv_rows(data, config)
    curve = engine.cross_validate_mstop(data, config, threads=args.threads)
    _write(args.out_dir / "cv_curve.csv", format_cv_curve(curve, config))
    _write(args.out_dir / "manifest.json", _manifest(args, {"chosen_mstop": curve.chosen_mstop}))
    print(curve.chosen_mstop)
    return EXIT_OK


def _study(args) -> simlab.Study:
    reps = args.replicates
    if args.scenario in simlab.PRESETS:
        law = ERRORS[args.error] if args.error else None
        st = simlab.preset(args.scenario, replicates=reps or 100, seed=args.seed, error=law, n=args.n)
    else:
        path = Path(args.scenario)
        if not path.is_file():
            raise UsageError(f"unknown scenario '{args.scenario}': not a preset or a file")
        st = simlab.load_scenario(path)
        if reps:
            st.points = [simlab.ScenarioPoint(p.parameter, p.value,
                                              dataclasses.replace(p.scenario, replicates=reps))
                         for p in st.points]
    if args.loss:
        st.losses = tuple(dict.fromkeys(args.loss))
    known = {k.value for k in LossKind}
    bad = [l for l in st.losses if l not in known]
    if bad or not st.losses:
        raise simlab.ScenarioError(f"unknown or missing losses: {', '.join(bad) or '(none)'}")
    return st


METRIC_NAMES = ("mme", "mean_mse", "mean_correct", "mean_incorrect", "mean_fsr")


def cmd_simulate(args) -> int:
    st = _study(args)
    base = _config(args, st.losses[0])
    summary = ["parameter,value,loss,replicates,mme,mean_mse,mean_correct,mean_incorrect,mean_fsr"]
    plot = ["parameter,value,loss,metric,estimate"]
    for point in st.points:
        results = study.run_point(point.scenario, st.losses, base, threads=args.threads)
        for loss in st.losses:
            scores = [f.score for f in results[loss]]
            tag = f"{point.parameter}={point.value:g}_{loss}"
            _write(args.out_dir / f"report_{tag}.csv", metrics.format_report(scores))
            agg = metrics.aggregate(scores)
            vals = [getattr(agg, k) for k in METRIC_NAMES]
            summary.append(f"{point.parameter},{point.value:g},{loss},{agg.replicates},"
                           + ",".join(f"{v:.10g}" for v in vals))
            plot += [f"{point.parameter},{point.value:g},{loss},{k},{v:.10g}"
                     for k, v in zip(METRIC_NAMES, vals)]
    _write(args.out_dir / "summary.csv", "\n".join(summary) + "\n")
    _write(args.out_dir / "plot.csv", "\n".join(plot) + "\n")
    scen_docs = {f"{p.parameter}={p.value:g}": simlab.scenario_to_text(p.scenario, st.losses)
                 for p in st.points}
    _write(args.out_dir / "manifest.json", _manifest(args, {"study": st.name, "scenarios": scen_docs}))
    print((args.out_dir / "summary.csv").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    losses = tuple(dict.fromkeys(args.loss or ()))
    if len(losses) < 2:
        raise UsageError("compare needs at least two --loss values")
    configs = {loss: _config(args, loss) for loss in losses}
    if args.learner != LearnerKind.LINEAR.value:
        raise UsageError("compare needs the linear learner")
    data, std = _load(args)
    coefs, extra = {}, {}
    for loss, config in configs.items():
        _check_cv_rows(data, config)
        ens, curve = engine.fit_cv(data, config, std, threads=args.threads)
        extra[f"chosen_mstop_{loss}"] = curve.chosen_mstop
        coefs[loss] = study.reported_coefficients(ens)
        _write(args.out_dir / f"ensemble_{loss}.json", engine.dumps_ensemble(ens))
    table = report.coefficient_table(data.column_names, coefs)
    diffs = report.set_differences({l: report.active_set(data.column_names, c) for l, c in coefs.items()})
    _write(args.out_dir / "coefficients.csv", table.render())
    _write(args.out_dir / "set_differences.csv", diffs.render())
    _write(args.out_dir / "manifest.json", _manifest(args, extra))
    print(diffs.render(), end="")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "simulate": cmd_simulate, "compare": cmd_compare}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, simlab.ScenarioError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UnboundedWeightError, engine.NumericalError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
