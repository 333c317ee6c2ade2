"""
Command-line interface.

Every modeling command reads a YAML/JSON run config, loads the CSV panel,
drops rows with missing modeling values, runs one pipeline step and writes
its results plus a ``<command>.manifest.json`` into the output directory.

Exit codes: 0 success, 1 user error (bad config, data or specification),
2 numerical failure (non-convergence, non-positive-definite information).
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from copulaprobit import copulas
from copulaprobit.config import ConfigError, RunConfig, load_config
from copulaprobit.datasim import DgpSpec, generate, truth_json
from copulaprobit.effects import SimulationError, ate, copula_sensitivity
from copulaprobit.estimator import fit, fit_baseline, instrument_strength_test
from copulaprobit.evaluation import (
    baseline_on_split,
    compare_models,
    fit_on_split,
    make_group_split,
    make_split,
    select_copula,
)
from copulaprobit.joint import SpecificationError
from copulaprobit.panel import (
    CsvFormatError,
    NonNumericColumnError,
    difference_within_group,
    load_csv,
    peace_years,
    sha256_file,
    write_csv,
)
from copulaprobit.splines import DegenerateInputError, MissingColumnError
from copulaprobit.svg import bar_chart, line_chart

log = logging.getLogger("copulaprobit")

EXIT_OK = 0
EXIT_USER = 1
EXIT_NUMERIC = 2


class NumericalFailure(RuntimeError):
    """A step finished but its numerical result is not usable."""


# ----------------------------------------------------------------------
# helpers


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("copulaprobit", "numpy", "scipy", "pandas", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class Run:
    """Collects inputs and outputs of one command and writes its manifest."""

    def __init__(self, command: str, out_dir: Path, cfg: RunConfig | None = None, extra=None):
        self.command = command
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.extra = extra or {}
        self.inputs = []
        self.outputs = []
        self.rows = None
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def add_input(self, path: Path) -> None:
        self.inputs.append({"path": str(path), "sha256": sha256_file(path)})

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append({"path": name, "sha256": sha256_file(path)})
        return path

    def record_output(self, path: Path) -> None:
        self.outputs.append({"path": str(path), "sha256": sha256_file(path)})

    def manifest(self) -> dict:
        m = {"manifest_version": 1, "command": self.command}
        if self.cfg is not None:
            m["config"] = self.cfg.to_dict()
            if "resolved_copula" in self.extra:
                # pin the copula so the manifest re-runs without selection.json
                m["config"]["copula"] = self.extra["resolved_copula"]
            m["config_base_dir"] = str(Path(self.cfg.base_dir).resolve())
            m["seeds"] = {"split_seed": self.cfg.split_seed, "seed": self.cfg.seed,
                          "simulate_seed": self.cfg.simulate.seed}
        m.update(self.extra)
        m["inputs"] = self.inputs
        m["outputs"] = self.outputs
        if self.rows is not None:
            m["rows"] = self.rows
        m["versions"] = _versions()
        m["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return m

    def finish(self, name: str | None = None) -> None:
        path = self.out_dir / (name or f"{self.command}.manifest.json")
        path.write_text(dumps(self.manifest()), encoding="utf-8", newline="\n")


def _load(cfg: RunConfig, run: Run, extra_columns=()):
    """Read the panel, apply listwise deletion and return a DataFrame."""
    path = cfg.data_path
    if not path.exists():
        raise FileNotFoundError(f"data file {str(path)!r} not found")
    table = load_csv(path)
    run.add_input(path)
    cols = cfg.modeling_columns()
    for c in [*cols, *extra_columns]:
        if c not in table.data:
            raise ConfigError(f"column {c!r} is not in the CSV header ({', '.join(table.columns)})")
    kept = table.listwise([*cols])
    if kept.n_rows == 0:
        raise ConfigError("no rows remain after dropping rows with missing modeling values")
    run.rows = {"input": table.n_rows, "dropped": kept.dropped, "retained": kept.n_rows}
    if kept.dropped:
        log.info("dropped %d of %d rows with missing modeling values", kept.dropped, table.n_rows)
    frame = kept.to_frame([*cols, *extra_columns])
    return frame


def _split(cfg: RunConfig, frame):
    if cfg.split_by == "group":
        return make_group_split(frame[cfg.group_column].to_numpy(), cfg.split_seed, cfg.split_fraction)
    return make_split(len(frame), cfg.split_seed, cfg.split_fraction)


def _split_columns(cfg: RunConfig):
    return [cfg.group_column] if cfg.split_by == "group" and cfg.group_column not in cfg.modeling_columns() else []


def _resolve_copula(cfg: RunConfig, override: str | None, out_dir: Path):
    code = override or cfg.copula
    if code == "selected":
        sel = out_dir / "selection.json"
        if not sel.exists():
            raise ConfigError("copula 'selected' needs a previous select-copula run (selection.json missing)")
        winner = json.loads(sel.read_text())["winner"]
        if winner is None:
            raise NumericalFailure("the previous copula selection has no converged winner")
        code = winner
    return cfg.copula_spec(code)


def _out_dir(cfg: RunConfig, args) -> Path:
    return Path(args.output) if getattr(args, "output", None) else cfg.output_dir


# ----------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    s = cfg.simulate
    cop = cfg.copula_spec(s.copula)
    if s.theta is not None:
        cop = copulas.CopulaSpec.from_natural(cop.family, s.theta, cop.rotation, cop.df)
    dgp = DgpSpec(
        n_rows=s.n_rows, beta1_true=tuple(s.beta1_true), beta2_true=tuple(s.beta2_true),
        gamma_true=s.gamma_true, copula_true=cop, instrument_strength=s.instrument_strength,
        confounder_strength=s.confounder_strength, seed=s.seed, n_confounders=s.n_confounders,
        n_instruments=s.n_instruments, peace_effect=s.peace_effect,
    )
    frame, truth = generate(dgp)
    run = Run("simulate", _out_dir(cfg, args), cfg)
    data_path = cfg.data_path
    data_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data_path, frame)
    run.record_output(data_path)
    run.write("truth.json", truth_json(truth) + "\n")
    run.finish()
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    run = Run("fit", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run)
    cop = _resolve_copula(cfg, args.copula, run.out_dir)
    run.extra["resolved_copula"] = cop.code
    res = fit(frame, cfg.model_spec(cop))
    run.write("fit.json", dumps(res.to_dict()))
    run.finish()
    if not res.converged:
        raise NumericalFailure(f"the joint fit did not converge ({res.message}); results written to fit.json")
    if not res.info_positive_definite:
        raise NumericalFailure("the observed information is not positive definite; results written to fit.json")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    run = Run("baseline", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run)
    res = fit_baseline(frame, cfg.model_spec())
    run.write("baseline.json", dumps(res.to_dict()))
    run.finish()
    if not res.converged:
        raise NumericalFailure(f"the baseline fit did not converge ({res.message})")
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = load_config(args.config)
    run = Run("select-copula", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run, _split_columns(cfg))
    split = _split(cfg, frame)
    report = select_copula(frame, cfg.model_spec(), cfg.copula_list(), split, cfg.mode)
    run.write("selection.csv", report.to_csv())
    run.write("selection.json", report.to_json() + "\n")
    bad = {r.code for r in report.records if not r.converged}
    run.write("selection.svg", bar_chart(
        [r.code for r in report.records], [r.auc for r in report.records],
        "Out-of-sample PR-AUC by copula", "PR-AUC", flagged=bad,
    ))
    run.finish()
    if report.winner is None:
        raise NumericalFailure("no copula fit converged")
    return EXIT_OK


def cmd_ate(args) -> int:
    cfg = load_config(args.config)
    run = Run("ate", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run)
    cop = _resolve_copula(cfg, args.copula, run.out_dir)
    run.extra["resolved_copula"] = cop.code
    res = fit(frame, cfg.model_spec(cop))
    if not res.converged:
        raise NumericalFailure(f"the joint fit did not converge ({res.message})")
    out = ate(res, frame, n_sims=cfg.n_sims, alpha=cfg.alpha, rng_seed=cfg.seed, treated_only=cfg.treated_only)
    body = {"copula": res.copula.code, "gamma": res.gamma, "gamma_se": res.gamma_se, **out.to_dict()}
    run.write("ate.json", dumps(body))
    run.finish()
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = load_config(args.config)
    run = Run("sensitivity", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run)
    report = copula_sensitivity(frame, cfg.model_spec(), cfg.copula_list(), cfg.n_sims, cfg.seed, cfg.alpha)
    run.write("sensitivity.csv", report.to_csv())
    run.write("sensitivity.json", report.to_json() + "\n")
    rows = report.rows()
    bad = {r["code"] for r in rows if not r["converged"]}
    crit = 1.959963984540054
    run.write("sensitivity_z.svg", bar_chart(
        [r["code"] for r in rows], [r["gamma_z"] for r in rows],
        "z statistic of the treatment coefficient by copula", "z", reference_lines=(-crit, crit), flagged=bad,
    ))
    run.write("sensitivity_ate.svg", bar_chart(
        [r["code"] for r in rows], [r["ate"] for r in rows], "Average treatment effect by copula", "ATE",
        lower=[r["ate_lower"] for r in rows], upper=[r["ate_upper"] for r in rows], flagged=bad,
    ))
    run.finish()
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    run = Run("compare", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run, _split_columns(cfg))
    split = _split(cfg, frame)
    cop = _resolve_copula(cfg, args.copula, run.out_dir)
    run.extra["resolved_copula"] = cop.code
    spec = cfg.model_spec(cop)
    joint = fit_on_split(frame, spec, split)
    base = baseline_on_split(frame, spec, split)
    for name, f in (("joint", joint), ("baseline", base)):
        if not f.converged:
            raise NumericalFailure(f"the {name} fit did not converge ({f.message})")
    rep = compare_models(base, joint, frame, split, cfg.mode)
    run.write("compare.json", dumps({"copula": joint.copula.code, **rep.to_dict()}))
    lines = ["model,sample,threshold,precision,recall"]
    for (model, sample), curve in rep.curves.items():
        for t, (r, p) in zip(curve.thresholds, curve.points):
            lines.append(f"{model},{sample},{float(t)!r},{float(p)!r},{float(r)!r}")
    run.write("pr_curves.csv", "\n".join(lines) + "\n")
    for sample in ("in_sample", "out_of_sample"):
        series = {f"{m} (AUC {rep.curves[(m, sample)].auc:.3f})": rep.curves[(m, sample)].points
                  for m in ("baseline", "joint")}
        run.write(f"pr_{sample}.svg", line_chart(series, f"Precision-recall, {sample.replace('_', ' ')}",
                                                 "recall", "precision"))
    run.finish()
    return EXIT_OK


def cmd_iv_test(args) -> int:
    cfg = load_config(args.config)
    run = Run("iv-test", _out_dir(cfg, args), cfg)
    frame = _load(cfg, run)
    res = instrument_strength_test(frame, cfg.model_spec())
    run.write("iv_test.json", dumps({
        "instruments": list(cfg.instruments), "statistic": res.statistic, "df": res.df,
        "p_value": res.p_value, "loglik_full": res.loglik_full, "loglik_restricted": res.loglik_restricted,
    }))
    run.finish()
    return EXIT_OK


def _transform(args, command: str, func, **kwargs) -> int:
    src = Path(args.input)
    if not src.exists():
        raise FileNotFoundError(f"input file {str(src)!r} not found")
    table = load_csv(src)
    needed = [args.group, args.time, *kwargs.pop("_numeric")]
    for c in needed:
        if c not in table.data:
            raise ConfigError(f"column {c!r} is not in the CSV header")
    table.require_numeric([c for c in needed if c != args.group])
    frame = table.to_frame()
    result = func(frame, group=args.group, time=args.time, **kwargs)
    dst = Path(args.output)
    dst.parent.mkdir(parents=True, exist_ok=True)
    write_csv(dst, result)
    run = Run(command, dst.parent, extra={"arguments": {k: v for k, v in vars(args).items() if k != "handler"}})
    run.add_input(src)
    run.record_output(dst)
    run.finish(f"{dst.name}.manifest.json")
    return EXIT_OK


def cmd_diff(args) -> int:
    return _transform(args, "diff", difference_within_group, column=args.column, name=args.name,
                      _numeric=[args.column])


def cmd_peace_years(args) -> int:
    return _transform(args, "peace-years", peace_years, event=args.event, name=args.name,
                      _numeric=[args.event])


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="copulaprobit",
        description="Copula-coupled recursive bivariate probit models for an endogenous binary treatment.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def modeling(name, handler, help_text, copula=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML/JSON run config or a previous run manifest")
        sp.add_argument("--output", help="output directory (overrides the config)")
        if copula:
            sp.add_argument("--copula", help="copula code, or 'selected' (overrides the config)")
        sp.set_defaults(handler=handler)
        return sp

    modeling("simulate", cmd_simulate, "draw a synthetic panel with known truth")
    modeling("fit", cmd_fit, "fit the joint model with one copula", copula=True)
    modeling("baseline", cmd_baseline, "fit the exogenous single-equation logit")
    modeling("select-copula", cmd_select, "rank copulas by out-of-sample PR-AUC")
    modeling("ate", cmd_ate, "average treatment effect with a simulated credible interval", copula=True)
    modeling("sensitivity", cmd_sensitivity, "refit under every listed copula")
    modeling("compare", cmd_compare, "PR curves of the baseline and joint models", copula=True)
    modeling("iv-test", cmd_iv_test, "likelihood-ratio test of the instruments")

    d = sub.add_parser("diff", help="add a within-group first difference of a column")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--column", required=True)
    d.add_argument("--group", required=True)
    d.add_argument("--time", required=True)
    d.add_argument("--name", help="new column name (default d_<column>)")
    d.set_defaults(handler=cmd_diff)

    py = sub.add_parser("peace-years", help="add a years-since-last-event counter")
    py.add_argument("--input", required=True)
    py.add_argument("--output", required=True)
    py.add_argument("--event", required=True)
    py.add_argument("--group", required=True)
    py.add_argument("--time", required=True)
    py.add_argument("--name", default="peace_years")
    py.set_defaults(handler=cmd_peace_years)
    return p


_USER_ERRORS = (ConfigError, CsvFormatError, NonNumericColumnError, SpecificationError, MissingColumnError,
                DegenerateInputError, FileNotFoundError, copulas.InvalidParameterError)
_NUMERIC_ERRORS = (NumericalFailure, SimulationError, FloatingPointError, np.linalg.LinAlgError)


def _report(exc: BaseException, code: int) -> int:
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    sys.stderr.write(json.dumps({"status": "error", "exit_code": code, "error": type(exc).__name__,
                                 "message": msg}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except _NUMERIC_ERRORS as exc:
        return _report(exc, EXIT_NUMERIC)
    except _USER_ERRORS as exc:
        return _report(exc, EXIT_USER)
    except (ValueError, KeyError, TypeError) as exc:
        return _report(exc, EXIT_USER)


if __name__ == "__main__":
    sys.exit(main())
