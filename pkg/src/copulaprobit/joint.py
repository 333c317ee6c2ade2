"""
Recursive bivariate probit likelihood with copula-coupled errors.

The treatment equation models ``y1``; the outcome equation models ``y2`` and
contains ``y1`` with coefficient ``gamma``. Parameter vectors are laid out as::

    [beta1 (eq1 intercept, columns, spline coefs),
     beta2 (eq2 intercept, columns, spline coefs),
     gamma,
     theta_unconstrained]
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import special

from copulaprobit import copulas
from copulaprobit.copulas import CopulaSpec
from copulaprobit.splines import MissingColumnError, SmoothTerm

#: Floor applied to cell probabilities before taking logs.
CELL_FLOOR = 1e-12
_FD_STEP = 1e-5


class SpecificationError(ValueError):
    """The two-equation design violates a structural requirement."""


class NonFiniteLikelihoodError(FloatingPointError):
    def __init__(self, row: int, value: float):
        super().__init__(f"non-finite log-likelihood contribution {value!r} at row {row}")
        self.row = row


@dataclass
class ModelSpec:
    """Column roles of the two-equation model and the coupling copula.

    ``eq2_predictors`` lists the outcome equation's exogenous columns; the
    treatment column is added to it automatically with coefficient gamma.
    """

    treatment: str
    outcome: str
    eq1_predictors: Sequence[str]
    eq2_predictors: Sequence[str]
    instruments: Sequence[str] = ()
    smooths1: Sequence[SmoothTerm] = field(default_factory=list)
    smooths2: Sequence[SmoothTerm] = field(default_factory=list)
    copula: CopulaSpec = field(default_factory=copulas.independence_spec)

    def __post_init__(self):
        self.eq1_predictors = list(self.eq1_predictors)
        self.eq2_predictors = list(self.eq2_predictors)
        self.instruments = list(self.instruments)
        self.smooths1 = list(self.smooths1)
        self.smooths2 = list(self.smooths2)
        self.validate()

    def validate(self) -> None:
        missing = [z for z in self.instruments if z not in self.eq1_predictors]
        if missing:
            raise SpecificationError(f"instruments {missing} must appear in the treatment equation")
        leaked = [z for z in self.instruments if z in self.eq2_predictors]
        if leaked:
            raise SpecificationError(
                f"instruments {leaked} appear in the outcome equation (exclusion restriction)"
            )
        if self.treatment in self.eq1_predictors:
            raise SpecificationError("the treatment cannot predict itself in the treatment equation")
        if self.treatment in self.eq2_predictors:
            raise SpecificationError(
                "the treatment enters the outcome equation through gamma; do not list it as a predictor"
            )
        if self.outcome in self.eq1_predictors or self.outcome in self.eq2_predictors:
            raise SpecificationError("the outcome cannot be used as a predictor")

    def with_copula(self, copula: CopulaSpec) -> "ModelSpec":
        return replace(self, copula=copula)

    def with_lambdas(self, lams1: Sequence[float], lams2: Sequence[float]) -> "ModelSpec":
        s1 = [replace(t, lam=float(l)) for t, l in zip(self.smooths1, lams1)]
        s2 = [replace(t, lam=float(l)) for t, l in zip(self.smooths2, lams2)]
        return replace(self, smooths1=s1, smooths2=s2)

    def unfitted(self) -> "ModelSpec":
        """Copy with spline bases cleared, so they are rebuilt on new data."""
        return replace(
            self,
            smooths1=[replace(t, basis=None) for t in self.smooths1],
            smooths2=[replace(t, basis=None) for t in self.smooths2],
        )

    @property
    def columns(self) -> list[str]:
        cols = [self.treatment, self.outcome, *self.eq1_predictors, *self.eq2_predictors]
        cols += [t.column for t in (*self.smooths1, *self.smooths2)]
        return list(dict.fromkeys(cols))


@dataclass
class ParamVector:
    beta1: np.ndarray
    beta2: np.ndarray
    gamma: float
    theta_unconstrained: float

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.beta1, self.beta2, [self.gamma, self.theta_unconstrained]])

    @classmethod
    def from_array(cls, arr, p1: int, p2: int) -> "ParamVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (p1 + p2 + 2,):
            raise ValueError(f"expected {p1 + p2 + 2} parameters, got {arr.shape}")
        return cls(arr[:p1].copy(), arr[p1:p1 + p2].copy(), float(arr[p1 + p2]), float(arr[-1]))


def _column(data, name) -> np.ndarray:
    try:
        return np.asarray(data[name], dtype=float)
    except KeyError:
        raise MissingColumnError(name) from None


def build_equation(data, columns: Sequence[str], smooths: Sequence[SmoothTerm], n: int, prefix: str):
    """Design matrix, coefficient names and penalty blocks of one equation."""
    blocks = [np.ones((n, 1))]
    names = [f"{prefix}:(Intercept)"]
    for col in columns:
        blocks.append(_column(data, col)[:, None])
        names.append(f"{prefix}:{col}")
    penalties = []
    built = []
    offset = 1 + len(columns)
    for term in smooths:
        if term.basis is None:
            term = term.fitted(_column(data, term.column))
        x = term.design(_column(data, term.column))
        blocks.append(x)
        names.extend(f"{prefix}:s({term.column}).{j + 1}" for j in range(x.shape[1]))
        penalties.append((offset, term))
        offset += x.shape[1]
        built.append(term)
    return np.hstack(blocks), names, penalties, built


class JointModel:
    """A :class:`ModelSpec` bound to a data set.

    Spline bases are built on ``data`` unless ``spec`` already carries fitted
    bases (for example when scoring held-out rows).
    """

    def __init__(self, spec: ModelSpec, data):
        self.n = len(_column(data, spec.treatment))
        if self.n == 0:
            raise ValueError("data must contain at least one row")
        self.y1 = _column(data, spec.treatment)
        self.y2 = _column(data, spec.outcome)
        for name, y in ((spec.treatment, self.y1), (spec.outcome, self.y2)):
            if not np.all((y == 0) | (y == 1)):
                raise ValueError(f"column {name!r} must be binary 0/1")
        self.x1, names1, pen1, built1 = build_equation(data, spec.eq1_predictors, spec.smooths1, self.n, "eq1")
        x2, names2, pen2, built2 = build_equation(data, spec.eq2_predictors, spec.smooths2, self.n, "eq2")
        self.x2 = x2
        self.spec = replace(spec, smooths1=built1, smooths2=built2)
        self.p1 = self.x1.shape[1]
        self.p2 = x2.shape[1]
        self.x2e = np.hstack([x2, self.y1[:, None]])
        self.names = names1 + names2 + [f"eq2:{spec.treatment}", "theta"]
        self.gamma_index = self.p1 + self.p2
        self.theta_index = self.p1 + self.p2 + 1
        self.n_params = self.p1 + self.p2 + 2
        # (global start index, term)
        self.penalties = [(o, t) for o, t in pen1] + [(self.p1 + o, t) for o, t in pen2]

    # ------------------------------------------------------------------
    def split(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        b1 = params[: self.p1]
        b2e = params[self.p1 : self.p1 + self.p2 + 1]
        return b1, b2e, params[-1]

    def etas(self, params):
        b1, b2e, x = self.split(params)
        return self.x1 @ b1, self.x2e @ b2e, x

    def penalty_matrix(self) -> np.ndarray:
        """Block-diagonal sum of lambda-weighted penalties (lambda None counts as 0)."""
        s = np.zeros((self.n_params, self.n_params))
        for start, term in self.penalties:
            lam = term.lam or 0.0
            k = term.basis.n_coef
            s[start : start + k, start : start + k] += lam * term.basis.penalty
        return s

    def penalty(self, params) -> float:
        params = np.asarray(params, dtype=float)
        return 0.5 * float(params @ self.penalty_matrix() @ params)

    # ------------------------------------------------------------------
    def _row_terms(self, eta1, eta2, x, need_score=True):
        """Per-row log cell probability and its derivatives in (eta1, eta2, x)."""
        cop = self.spec.copula.with_theta(x)
        raw1 = special.ndtr(eta1)
        raw2 = special.ndtr(eta2)
        p1 = np.clip(raw1, copulas.EPS, 1.0 - copulas.EPS)
        p2 = np.clip(raw2, copulas.EPS, 1.0 - copulas.EPS)
        c, cu, cv, cx = copulas.evaluate(cop, p1, p2)
        y1, y2 = self.y1, self.y2
        s11 = (y1 == 1) & (y2 == 1)
        s10 = (y1 == 1) & (y2 == 0)
        s01 = (y1 == 0) & (y2 == 1)
        m11, m10, m01, m00 = copulas.quadrant_masses(cop, p1, p2)
        prob = np.select([s11, s10, s01], [m11, m10, m01], m00)
        floored = prob < CELL_FLOOR
        prob = np.where(floored, CELL_FLOOR, prob)
        ll = np.log(prob)
        if not need_score:
            return ll, None
        dp1 = np.select([s11, s10, s01], [cu, 1.0 - cu, -cu], cu - 1.0)
        dp2 = np.select([s11, s10, s01], [cv, -cv, 1.0 - cv], cv - 1.0)
        dx = np.select([s11, s10, s01], [cx, -cx, -cx], cx)
        live = ~floored / prob
        d1 = np.where(raw1 == p1, _npdf(eta1), 0.0)
        d2 = np.where(raw2 == p2, _npdf(eta2), 0.0)
        score = np.stack([dp1 * d1 * live, dp2 * d2 * live, dx * live])
        return ll, score

    def loglik_rows(self, params) -> np.ndarray:
        e1, e2, x = self.etas(params)
        return self._row_terms(e1, e2, x, need_score=False)[0]

    def loglik(self, params, penalized: bool = True) -> float:
        rows = self.loglik_rows(params)
        total = float(np.sum(rows))
        if not np.isfinite(total):
            bad = int(np.flatnonzero(~np.isfinite(rows))[0])
            raise NonFiniteLikelihoodError(bad, float(rows[bad]))
        if penalized:
            total -= self.penalty(params)
        return total

    def gradient(self, params, penalized: bool = True) -> np.ndarray:
        e1, e2, x = self.etas(params)
        _, sc = self._row_terms(e1, e2, x)
        g = np.concatenate([self.x1.T @ sc[0], self.x2e.T @ sc[1], [np.sum(sc[2])]])
        if penalized:
            g -= self.penalty_matrix() @ np.asarray(params, dtype=float)
        return g

    def hessian(self, params, penalized: bool = True) -> np.ndarray:
        """Hessian from central differences of the row scores in (eta1, eta2, x).

        The linear predictors are linear in the coefficients, so differencing
        three row-level inputs is enough to assemble the full matrix.
        """
        e1, e2, x = self.etas(params)
        h = _FD_STEP
        cols = []
        for k in range(3):
            shift = [np.zeros(self.n), np.zeros(self.n), 0.0]
            shift[k] = h if k == 2 else np.full(self.n, h)
            _, up = self._row_terms(e1 + shift[0], e2 + shift[1], x + shift[2])
            _, dn = self._row_terms(e1 - shift[0], e2 - shift[1], x - shift[2])
            cols.append((up - dn) / (2 * h))
        w = np.empty((3, 3, self.n))
        for a in range(3):
            for b in range(3):
                w[a, b] = 0.5 * (cols[b][a] + cols[a][b])
        a1, a2 = self.x1, self.x2e
        h11 = a1.T @ (w[0, 0][:, None] * a1)
        h12 = a1.T @ (w[0, 1][:, None] * a2)
        h22 = a2.T @ (w[1, 1][:, None] * a2)
        h1x = a1.T @ w[0, 2]
        h2x = a2.T @ w[1, 2]
        hxx = np.sum(w[2, 2])
        out = np.block(
            [
                [h11, h12, h1x[:, None]],
                [h12.T, h22, h2x[:, None]],
                [h1x[None, :], h2x[None, :], np.array([[hxx]])],
            ]
        )
        if penalized:
            out -= self.penalty_matrix()
        return 0.5 * (out + out.T)

    # ------------------------------------------------------------------
    def cells(self, params):
        """(P11, P10, P01, P00) per row, with gamma evaluated at each cell's y1."""
        b1, b2e, x = self.split(params)
        eta1 = self.x1 @ b1
        eta2_0 = self.x2 @ b2e[:-1]
        gamma = b2e[-1]
        return cell_probabilities_from_etas(eta1, eta2_0, gamma, self.spec.copula.with_theta(x))

    def predict(self, params, mode: str = "conditional") -> np.ndarray:
        """P(y2 = 1) for each row given the observed treatment."""
        b1, b2e, x = self.split(params)
        eta1 = self.x1 @ b1
        eta2 = self.x2e @ b2e
        p2 = np.clip(special.ndtr(eta2), copulas.EPS, 1.0 - copulas.EPS)
        if mode == "marginal":
            return special.ndtr(eta2)
        if mode != "conditional":
            raise ValueError(f"mode must be 'conditional' or 'marginal', got {mode!r}")
        p1 = np.clip(special.ndtr(eta1), copulas.EPS, 1.0 - copulas.EPS)
        c = copulas.evaluate(self.spec.copula.with_theta(x), p1, p2)[0]
        treated = c / p1
        untreated = (p2 - c) / (1.0 - p1)
        return np.clip(np.where(self.y1 == 1, treated, untreated), 0.0, 1.0)


def _npdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def cell_probabilities_from_etas(eta1, eta2_untreated, gamma, copula: CopulaSpec):
    eta1 = np.asarray(eta1, dtype=float)
    p1 = np.clip(special.ndtr(eta1), copulas.EPS, 1.0 - copulas.EPS)
    p2_1 = np.clip(special.ndtr(np.asarray(eta2_untreated) + gamma), copulas.EPS, 1.0 - copulas.EPS)
    p2_0 = np.clip(special.ndtr(np.asarray(eta2_untreated, dtype=float)), copulas.EPS, 1.0 - copulas.EPS)
    p11, p10, _, _ = copulas.quadrant_masses(copula, p1, p2_1)
    _, _, p01, p00 = copulas.quadrant_masses(copula, p1, p2_0)
    return p11, p10, p01, p00


def _as_frame(row) -> pd.DataFrame:
    if isinstance(row, pd.DataFrame):
        return row
    return pd.DataFrame({k: [v] for k, v in dict(row).items()})


def _as_array(params, model: JointModel) -> np.ndarray:  # noqa: ARG001
    if isinstance(params, ParamVector):
        return params.to_array()
    return np.asarray(params, dtype=float)


def cell_probabilities(params, row: Mapping[str, float], spec: ModelSpec):
    """Four cell probabilities (P11, P10, P01, P00) for one observation.

    ``row`` needs the predictor columns and the treatment; the outcome may be
    omitted.
    """
    frame = _as_frame(row)
    if spec.outcome not in frame:
        frame = frame.assign(**{spec.outcome: 0.0})
    if spec.treatment not in frame:
        frame = frame.assign(**{spec.treatment: 0.0})
    model = JointModel(spec, frame)
    out = model.cells(_as_array(params, model))
    return tuple(float(np.asarray(c)[0]) for c in out)


def log_likelihood(params, data, spec: ModelSpec) -> float:
    """Penalized log-likelihood: sum of log observed-cell probabilities minus
    half the lambda-weighted spline penalty."""
    model = JointModel(spec, data)
    return model.loglik(_as_array(params, model))


def gradient(params, data, spec: ModelSpec) -> np.ndarray:
    model = JointModel(spec, data)
    return model.gradient(_as_array(params, model))


def predict_conflict(params, row, spec: ModelSpec, mode: str = "conditional"):
    """P(y2 = 1 | observed y1) for one row or every row of a frame."""
    frame = _as_frame(row)
    if spec.outcome not in frame:
        frame = frame.assign(**{spec.outcome: 0.0})
    model = JointModel(spec, frame)
    out = model.predict(_as_array(params, model), mode)
    return float(out[0]) if not isinstance(row, pd.DataFrame) else out
