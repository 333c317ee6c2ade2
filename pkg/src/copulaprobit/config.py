"""Run configuration read from a YAML or JSON file."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from copulaprobit.copulas import ALL_CODES, CopulaSpec, all_specs
from copulaprobit.joint import ModelSpec
from copulaprobit.splines import SmoothTerm

_SPLINE = re.compile(r"^\s*spline\(\s*([^,()\s]+)\s*(?:,\s*(\d+)\s*)?\)\s*$")


class ConfigError(ValueError):
    pass


@dataclass
class SimulateConfig:
    n_rows: int = 5000
    gamma_true: float = 0.0
    copula: str = "N"
    theta: float | None = None
    instrument_strength: float = 1.0
    confounder_strength: float = 0.5
    beta1_true: list = field(default_factory=list)
    beta2_true: list = field(default_factory=list)
    n_confounders: int = 2
    n_instruments: int = 2
    peace_effect: float | None = None
    seed: int = 0


@dataclass
class RunConfig:
    """Everything a command needs; see the README for the file format.

    ``eq1`` and ``eq2`` list column names and ``spline(column, k)``
    declarations. ``copula`` is a single code for ``fit``/``ate`` (or
    ``"selected"`` to take the winner of a previous ``select-copula`` run);
    ``copulas`` is the list for ``select-copula``/``sensitivity`` (``"all"``
    for the 19-spec catalog).
    """

    data: str = ""
    treatment: str = ""
    outcome: str = ""
    eq1: list = field(default_factory=list)
    eq2: list = field(default_factory=list)
    instruments: list = field(default_factory=list)
    copula: str = "N"
    copulas: object = "all"
    t_df: int = 3
    split_seed: int = 0
    split_fraction: float = 0.70
    split_by: str = "rows"
    group_column: str = ""
    n_sims: int = 250
    alpha: float = 0.05
    seed: int = 0
    mode: str = "conditional"
    output: str = "out"
    treated_only: bool = False
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    base_dir: str = "."

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a mapping")
        raw = dict(raw)
        split = raw.pop("split", None) or {}
        if not isinstance(split, dict):
            raise ConfigError("'split' must be a mapping with seed/fraction/by/group_column")
        for key in ("seed", "fraction", "by", "group_column"):
            if key in split:
                raw[f"split_{key}" if key != "group_column" else key] = split.pop(key)
        if split:
            raise ConfigError(f"unknown split keys {sorted(split)}")
        sim = raw.pop("simulate", None) or {}
        known = {f for f in cls.__dataclass_fields__ if f not in ("simulate", "base_dir")}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys {unknown}")
        sim_known = set(SimulateConfig.__dataclass_fields__)
        bad_sim = sorted(set(sim) - sim_known)
        if bad_sim:
            raise ConfigError(f"unknown simulate keys {bad_sim}")
        cfg = cls(**raw, simulate=SimulateConfig(**sim), base_dir=str(base_dir))
        cfg.validate_basic()
        return cfg

    def validate_basic(self) -> None:
        if self.split_by not in ("rows", "group"):
            raise ConfigError("split.by must be 'rows' or 'group'")
        if self.split_by == "group" and not self.group_column:
            raise ConfigError("split.by = group needs split.group_column")
        if not 0.0 < float(self.split_fraction) < 1.0:
            raise ConfigError("split.fraction must lie strictly between 0 and 1")
        if self.mode not in ("conditional", "marginal"):
            raise ConfigError("mode must be 'conditional' or 'marginal'")
        if int(self.n_sims) < 2:
            raise ConfigError("n_sims must be at least 2")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["split"] = {"seed": d.pop("split_seed"), "fraction": d.pop("split_fraction"),
                      "by": d.pop("split_by"), "group_column": d.pop("group_column")}
        return d

    # ------------------------------------------------------------------
    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def data_path(self) -> Path:
        if not self.data:
            raise ConfigError("'data' (path of the CSV panel) is required")
        return self.resolve(self.data)

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.output)

    def require_roles(self) -> None:
        for key in ("treatment", "outcome"):
            if not getattr(self, key):
                raise ConfigError(f"'{key}' column is required")

    def model_spec(self, copula: CopulaSpec | None = None) -> ModelSpec:
        self.require_roles()
        cols1, sm1 = parse_terms(self.eq1)
        cols2, sm2 = parse_terms(self.eq2)
        try:
            return ModelSpec(self.treatment, self.outcome, cols1, cols2, list(self.instruments), sm1, sm2,
                             copula or self._template_copula())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _template_copula(self) -> CopulaSpec:
        # "selected" is resolved by the CLI; templates for sweeps and the
        # baseline only need some valid placeholder
        return self.copula_spec("N" if self.copula == "selected" else self.copula)

    def copula_spec(self, code: str) -> CopulaSpec:
        if code not in ALL_CODES:
            raise ConfigError(f"unknown copula code {code!r}; choose from {', '.join(ALL_CODES)}")
        return CopulaSpec.from_code(code, 0.0, self.t_df)

    def copula_list(self) -> list[CopulaSpec]:
        if self.copulas == "all":
            return all_specs(self.t_df)
        codes = [self.copulas] if isinstance(self.copulas, str) else list(self.copulas)
        if not codes:
            raise ConfigError("'copulas' must not be empty")
        return [self.copula_spec(c) for c in codes]

    def modeling_columns(self) -> list[str]:
        cols1, sm1 = parse_terms(self.eq1)
        cols2, sm2 = parse_terms(self.eq2)
        out = [self.treatment, self.outcome, *cols1, *cols2, *(t.column for t in (*sm1, *sm2))]
        return list(dict.fromkeys(c for c in out if c))


def parse_terms(items) -> tuple[list[str], list[SmoothTerm]]:
    """Split an equation list into plain columns and ``spline(col, k)`` terms."""
    cols, smooths = [], []
    for item in items or []:
        if not isinstance(item, str) or not item.strip():
            raise ConfigError(f"equation entries must be column names, got {item!r}")
        m = _SPLINE.match(item)
        if m:
            k = int(m.group(2)) if m.group(2) else 10
            if k < 3:
                raise ConfigError(f"spline basis dimension must be at least 3 in {item!r}")
            smooths.append(SmoothTerm(m.group(1), k))
        elif "(" in item:
            raise ConfigError(f"cannot parse term {item!r}; use a column name or spline(column, k)")
        else:
            cols.append(item.strip())
    return cols, smooths


def load_config(path) -> RunConfig:
    """Read a YAML or JSON config, or the config recorded in a run manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file {str(path)!r} not found") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if isinstance(raw, dict) and "manifest_version" in raw:
        base = raw.get("config_base_dir", str(path.parent))
        return RunConfig.from_dict(raw["config"], base)
    return RunConfig.from_dict(raw or {}, path.parent)
