"""
Synthetic panels with an endogenous binary treatment and known truth.

Observed confounders enter both equations, instruments enter only the
treatment equation, and the unobserved confounder is carried by copula
dependence between the two latent errors. With uniforms ``(U, V)`` drawn
from the copula, ``y1 = 1[U <= Phi(eta1)]`` and
``y2 = 1[V <= Phi(eta2 + gamma * y1)]``, so that
``P(y1 = 1, y2 = 1 | x) = C(Phi(eta1), Phi(eta2 + gamma))`` exactly as the
fitted model assumes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy import special

from copulaprobit import copulas
from copulaprobit.copulas import CopulaSpec
from copulaprobit.joint import ModelSpec
from copulaprobit.splines import SmoothTerm

TREATMENT = "alliance"
OUTCOME = "dispute"
PEACE = "peace_years"


@dataclass
class DgpSpec:
    """Data-generating process.

    ``beta1_true`` and ``beta2_true`` hold an intercept followed by one
    coefficient per observed confounder; when left empty they default to
    the intercepts ``(0.0, -1.9)`` and ``confounder_strength`` on every
    confounder. Every instrument gets coefficient ``instrument_strength``.
    """

    n_rows: int = 5000
    beta1_true: tuple = ()
    beta2_true: tuple = ()
    gamma_true: float = 0.0
    copula_true: CopulaSpec = field(default_factory=copulas.independence_spec)
    instrument_strength: float = 1.0
    confounder_strength: float = 0.5
    seed: int = 0
    n_confounders: int = 2
    n_instruments: int = 2
    #: coefficient on log1p(peace_years) in the outcome equation; None omits the column
    peace_effect: float | None = None

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be at least 1")
        if not isinstance(self.copula_true, CopulaSpec):
            raise TypeError("copula_true must be a CopulaSpec")
        k = self.n_confounders
        if not self.beta1_true:
            self.beta1_true = (0.0,) + (self.confounder_strength,) * k
        if not self.beta2_true:
            self.beta2_true = (-1.9,) + (self.confounder_strength,) * k
        self.beta1_true = tuple(float(b) for b in self.beta1_true)
        self.beta2_true = tuple(float(b) for b in self.beta2_true)
        for name, b in (("beta1_true", self.beta1_true), ("beta2_true", self.beta2_true)):
            if len(b) != k + 1:
                raise ValueError(f"{name} needs {k + 1} entries (intercept + confounders), got {len(b)}")

    @property
    def confounders(self) -> list[str]:
        return [f"c{j + 1}" for j in range(self.n_confounders)]

    @property
    def instruments(self) -> list[str]:
        return [f"z{j + 1}" for j in range(self.n_instruments)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["copula_true"] = {
            "code": self.copula_true.code,
            "theta": self.copula_true.theta,
            "theta_unconstrained": self.copula_true.theta_unconstrained,
            "df": self.copula_true.df,
        }
        d["beta1_true"] = list(self.beta1_true)
        d["beta2_true"] = list(self.beta2_true)
        return d


def _eta2_untreated(dgp: DgpSpec, data) -> np.ndarray:
    c = np.column_stack([np.asarray(data[name], float) for name in dgp.confounders]) if dgp.n_confounders \
        else np.zeros((len(data), 0))
    eta = dgp.beta2_true[0] + c @ np.asarray(dgp.beta2_true[1:])
    if dgp.peace_effect is not None:
        eta = eta + dgp.peace_effect * np.log1p(np.asarray(data[PEACE], float))
    return eta


def generate(dgp: DgpSpec):
    """Draw a panel and its truth record.

    Returns
    -------
    data : pandas.DataFrame
    truth : dict
        The generating parameters and the true average treatment effect.
    """
    rng = np.random.default_rng(dgp.seed)
    n = dgp.n_rows
    cols = {}
    for name in dgp.confounders:
        cols[name] = rng.standard_normal(n)
    for name in dgp.instruments:
        cols[name] = rng.standard_normal(n)
    if dgp.peace_effect is not None:
        cols[PEACE] = rng.geometric(0.1, n).astype(float) - 1.0
    u, v = copulas.sample_pair(dgp.copula_true, rng, n)
    frame = pd.DataFrame(cols)
    c = frame[dgp.confounders].to_numpy() if dgp.n_confounders else np.zeros((n, 0))
    eta1 = dgp.beta1_true[0] + c @ np.asarray(dgp.beta1_true[1:])
    if dgp.n_instruments:
        eta1 = eta1 + dgp.instrument_strength * frame[dgp.instruments].to_numpy().sum(axis=1)
    y1 = (u <= special.ndtr(eta1)).astype(float)
    eta2 = _eta2_untreated(dgp, frame) + dgp.gamma_true * y1
    y2 = (v <= special.ndtr(eta2)).astype(float)
    frame.insert(0, OUTCOME, y2)
    frame.insert(0, TREATMENT, y1)
    truth = dgp.to_dict()
    truth["true_ate"] = true_ate(dgp, frame)
    truth["treatment"] = TREATMENT
    truth["outcome"] = OUTCOME
    return frame, truth


def true_ate(dgp: DgpSpec, data) -> float:
    """Mean over rows of Phi(eta2 + gamma) - Phi(eta2) under the true parameters."""
    if dgp.gamma_true == 0.0:
        return 0.0
    eta2 = _eta2_untreated(dgp, data)
    return float(np.mean(special.ndtr(eta2 + dgp.gamma_true) - special.ndtr(eta2)))


def model_spec_for(dgp: DgpSpec, copula: CopulaSpec | None = None, spline: bool | None = None) -> ModelSpec:
    """The correctly specified model for data from ``dgp``."""
    smooths2 = []
    if spline if spline is not None else dgp.peace_effect is not None:
        smooths2 = [SmoothTerm(PEACE, 10)]
    return ModelSpec(
        treatment=TREATMENT,
        outcome=OUTCOME,
        eq1_predictors=dgp.confounders + dgp.instruments,
        eq2_predictors=dgp.confounders,
        instruments=dgp.instruments,
        smooths2=smooths2,
        copula=copula if copula is not None else dgp.copula_true.with_theta(0.0),
    )


def truth_json(truth: dict) -> str:
    return json.dumps(truth, indent=2, sort_keys=True)
