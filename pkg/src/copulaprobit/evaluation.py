"""Precision-recall curves, train/test splits and copula selection by PR-AUC."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import special

from copulaprobit.copulas import CopulaSpec
from copulaprobit.estimator import FitOptions, FitResult, fit, fit_baseline, sample_fingerprint
from copulaprobit.joint import JointModel, ModelSpec, build_equation


@dataclass
class PrCurve:
    """Precision-recall points, one per distinct score threshold.

    ``points`` holds ``(recall, precision)`` pairs in order of decreasing
    threshold. The area is the step integral
    ``sum_k (recall_k - recall_{k-1}) * precision_k`` with ``recall_0 = 0``.
    """

    points: list
    thresholds: list
    auc: float
    n_positives: int
    n_total: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t, (r, p) in zip(self.thresholds, self.points):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(r))])
        return buf.getvalue()


def step_auc(points) -> float:
    prev = 0.0
    area = 0.0
    for r, p in points:
        area += (r - prev) * p
        prev = r
    return area


def pr_curve(scores, labels) -> PrCurve:
    """Precision-recall curve of ``scores`` against binary ``labels``.

    Tied scores form one threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary 0/1")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("pr_curve needs at least one positive label")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    seen = np.arange(1, len(s) + 1)
    # last index of each run of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    recall = tp[ends] / n_pos
    precision = tp[ends] / seen[ends]
    points = [(float(r), float(p)) for r, p in zip(recall, precision)]
    return PrCurve(points, [float(t) for t in s[ends]], step_auc(points), n_pos, len(s))


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train_fraction: float
    train_indices: np.ndarray
    test_indices: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.train_indices) + len(self.test_indices)

    @property
    def train_id(self) -> str:
        return sample_fingerprint(self.n_rows, self.train_indices)


def _check_fraction(fraction):
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"train fraction must lie strictly between 0 and 1, got {fraction}")


def make_split(n_rows: int, seed: int, fraction: float = 0.70) -> SplitPlan:
    """Random row split: the first ceil(fraction * n) permuted rows train."""
    if n_rows < 2:
        raise ValueError("need at least two rows to split")
    _check_fraction(fraction)
    perm = np.random.default_rng(seed).permutation(n_rows)
    n_train = min(max(math.ceil(fraction * n_rows), 1), n_rows - 1)
    return SplitPlan(seed, fraction, np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def make_group_split(groups, seed: int, fraction: float = 0.70) -> SplitPlan:
    """Split whole groups (e.g. every year of a dyad) into train or test."""
    _check_fraction(fraction)
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    if len(uniq) < 2:
        raise ValueError("need at least two groups to split")
    perm = np.random.default_rng(seed).permutation(len(uniq))
    n_train = min(max(math.ceil(fraction * len(uniq)), 1), len(uniq) - 1)
    train_groups = uniq[perm[:n_train]]
    mask = np.isin(groups, train_groups)
    return SplitPlan(seed, fraction, np.flatnonzero(mask), np.flatnonzero(~mask))


def _rows(data, idx):
    return data.iloc[idx].reset_index(drop=True) if isinstance(data, pd.DataFrame) else \
        {k: np.asarray(v)[idx] for k, v in data.items()}


def fit_on_split(data, spec: ModelSpec, split: SplitPlan, options: FitOptions | None = None) -> FitResult:
    train = _rows(data, split.train_indices)
    return fit(train, spec.unfitted(), options, sample_id=split.train_id)


def baseline_on_split(data, outcome_spec, split: SplitPlan, options: FitOptions | None = None) -> FitResult:
    train = _rows(data, split.train_indices)
    return fit_baseline(train, outcome_spec, options, sample_id=split.train_id)


def predict_joint(fit_result: FitResult, data, mode: str = "conditional") -> np.ndarray:
    return JointModel(fit_result.spec, data).predict(fit_result.params, mode)


def predict_single(fit_result: FitResult, data) -> np.ndarray:
    spec = fit_result.spec
    y = np.asarray(data[spec.outcome], dtype=float)
    x, *_ = build_equation(data, spec.predictors, spec.smooths, len(y), "eq")
    eta = x @ fit_result.params
    return special.expit(eta) if spec.link == "logit" else special.ndtr(eta)


def predict(fit_result: FitResult, data, mode: str = "conditional") -> np.ndarray:
    if fit_result.kind == "joint":
        return predict_joint(fit_result, data, mode)
    return predict_single(fit_result, data)


@dataclass
class SelectionRecord:
    code: str
    auc: float | None
    converged: bool
    info_positive_definite: bool
    error: str = ""
    rank: int = 0


@dataclass
class SelectionReport:
    records: list = field(default_factory=list)

    @property
    def winner(self) -> str | None:
        ok = [r for r in self.records if r.auc is not None and r.converged]
        return ok[0].code if ok else None

    COLUMNS = ("rank", "code", "auc", "converged", "info_positive_definite", "error")

    def rows(self) -> list[dict]:
        return [{k: getattr(r, k) for k in self.COLUMNS} for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"winner": self.winner, "records": self.rows()}, indent=2)


def select_copula(data, spec_template: ModelSpec, copula_list: Sequence[CopulaSpec], split: SplitPlan,
                  mode: str = "conditional", options: FitOptions | None = None) -> SelectionReport:
    """Rank copulas by out-of-sample PR-AUC of outcome predictions.

    Every copula is trained on the same training rows and scored on the same
    test rows. Fits that fail or do not converge are ranked last.
    """
    copula_list = list(copula_list)
    if not copula_list:
        raise ValueError("copula_list must not be empty")
    test = _rows(data, split.test_indices)
    y_test = np.asarray(test[spec_template.outcome], dtype=float)
    records = []
    for cop in copula_list:
        try:
            res = fit_on_split(data, spec_template.with_copula(cop), split, options)
            scores = predict_joint(res, test, mode)
            auc = pr_curve(scores, y_test).auc
            rec = SelectionRecord(cop.code, auc, res.converged, res.info_positive_definite,
                                  "" if res.converged else res.message)
        except Exception as exc:  # noqa: BLE001 - recorded per copula
            rec = SelectionRecord(cop.code, None, False, False, f"{type(exc).__name__}: {exc}")
        records.append(rec)
    records.sort(key=lambda r: (not (r.converged and r.auc is not None), -(r.auc or 0.0)))
    for i, r in enumerate(records, start=1):
        r.rank = i
    return SelectionReport(records)


def improvement(auc_new: float, auc_ref: float) -> float:
    """Percentage change of ``auc_new`` relative to ``auc_ref``."""
    return 100.0 * (auc_new - auc_ref) / auc_ref


@dataclass
class ComparisonReport:
    curves: dict
    aucs: dict
    improvement_in_sample: float
    improvement_out_of_sample: float

    def to_dict(self) -> dict:
        return {
            "auc": self.aucs,
            "improvement_pct": {
                "in_sample": self.improvement_in_sample,
                "out_of_sample": self.improvement_out_of_sample,
            },
        }


def compare_scores(base_in, joint_in, y_in, base_out, joint_out, y_out) -> ComparisonReport:
    curves = {
        ("baseline", "in_sample"): pr_curve(base_in, y_in),
        ("joint", "in_sample"): pr_curve(joint_in, y_in),
        ("baseline", "out_of_sample"): pr_curve(base_out, y_out),
        ("joint", "out_of_sample"): pr_curve(joint_out, y_out),
    }
    aucs = {f"{m}_{s}": c.auc for (m, s), c in curves.items()}
    return ComparisonReport(
        curves,
        aucs,
        improvement(aucs["joint_in_sample"], aucs["baseline_in_sample"]),
        improvement(aucs["joint_out_of_sample"], aucs["baseline_out_of_sample"]),
    )


def compare_models(baseline_fit: FitResult, joint_fit: FitResult, data, split: SplitPlan,
                   mode: str = "conditional") -> ComparisonReport:
    """In- and out-of-sample PR curves of the exogenous baseline and the joint model."""
    for name, f in (("baseline", baseline_fit), ("joint", joint_fit)):
        if f.sample_id != split.train_id:
            raise ValueError(f"the {name} fit was not trained on this split's training rows")
    train = _rows(data, split.train_indices)
    test = _rows(data, split.test_indices)
    outcome = joint_fit.spec.outcome
    return compare_scores(
        predict(baseline_fit, train), predict(joint_fit, train, mode), np.asarray(train[outcome], float),
        predict(baseline_fit, test), predict(joint_fit, test, mode), np.asarray(test[outcome], float),
    )
