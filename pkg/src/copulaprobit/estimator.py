"""
Penalized maximum likelihood for the joint model and single-equation
binary regressions, plus covariance, diagnostics and instrument tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize, special, stats

from copulaprobit import copulas
from copulaprobit.joint import JointModel, ModelSpec, NonFiniteLikelihoodError, build_equation
from copulaprobit.splines import SmoothTerm

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = tuple(10.0**k for k in range(-4, 5))


@dataclass
class FitOptions:
    tol: float = 1e-6
    max_iter: int = 200
    #: choose unset smoothing weights by AIC grid search; otherwise they default to 1
    select_smoothing: bool = True
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    message: str = ""


def newton_maximize(
    fun: Callable,
    grad: Callable,
    hess: Callable,
    x0,
    tol: float = 1e-6,
    max_iter: int = 200,
    max_step: float = 5.0,
) -> OptimResult:
    """Damped Newton ascent with backtracking and a Levenberg ridge.

    The ridge is raised until ``-H + mu*I`` factorizes and the line search
    finds an Armijo increase. Iteration stops when the largest absolute
    gradient component drops below ``tol``, or when no ascent step can be
    found (step underflow).
    """

    def safe(x):
        try:
            v = fun(x)
        except (NonFiniteLikelihoodError, FloatingPointError, ValueError):
            return -math.inf
        return v if math.isfinite(v) else -math.inf

    x = np.asarray(x0, dtype=float).copy()
    f = safe(x)
    if not math.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting values")
    g = grad(x)
    history = [f]
    h = None
    message = "iteration limit reached"
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            message = "gradient tolerance met"
            it -= 1
            break
        h = hess(x)
        neg = -h
        scale = max(1.0, float(np.max(np.abs(np.diag(neg)))))
        mu = 0.0
        accepted = False
        while mu < 1e12 * scale:
            try:
                cf = linalg.cho_factor(neg + mu * np.eye(len(x)), lower=True, check_finite=True)
            except (linalg.LinAlgError, ValueError):
                mu = max(mu * 10.0, 1e-8 * scale)
                continue
            d = linalg.cho_solve(cf, g)
            big = np.max(np.abs(d))
            if big > max_step:
                d *= max_step / big
            slope = float(g @ d)
            t = 1.0
            for _ in range(40):
                x_new = x + t * d
                f_new = safe(x_new)
                if f_new >= f + 1e-4 * t * slope:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
            mu = max(mu * 10.0, 1e-6 * scale)
        if not accepted:
            message = "step size underflow"
            it -= 1
            break
        x, f = x_new, f_new
        g = grad(x)
        history.append(f)
    else:
        it = max_iter
    converged = bool(np.max(np.abs(g)) < tol)
    if converged:
        message = "gradient tolerance met"
    hfinal = hess(x)
    return OptimResult(x, f, g, hfinal, it, converged, history, message)


# ----------------------------------------------------------------------
# single-equation binary regressions


class BinaryRegression:
    """Penalized probit or logit likelihood for one binary outcome."""

    def __init__(self, y, x, link: str = "probit", penalty=None):
        self.y = np.asarray(y, dtype=float)
        self.x = np.asarray(x, dtype=float)
        if link not in ("probit", "logit"):
            raise ValueError(f"link must be 'probit' or 'logit', got {link!r}")
        self.link = link
        k = self.x.shape[1]
        self.s = np.zeros((k, k)) if penalty is None else np.asarray(penalty, dtype=float)
        self.q = 2.0 * self.y - 1.0

    def loglik(self, b, penalized=True):
        eta = self.x @ b
        if self.link == "logit":
            ll = float(np.sum(self.y * eta - np.logaddexp(0.0, eta)))
        else:
            ll = float(np.sum(special.log_ndtr(self.q * eta)))
        if penalized:
            ll -= 0.5 * float(b @ self.s @ b)
        return ll

    def _weights(self, b):
        eta = self.x @ b
        if self.link == "logit":
            p = special.expit(eta)
            return self.y - p, p * (1.0 - p)
        z = self.q * eta
        mills = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - special.log_ndtr(z))
        lam = self.q * mills
        return lam, lam * (lam + eta)

    def gradient(self, b, penalized=True):
        r, _ = self._weights(b)
        g = self.x.T @ r
        return g - self.s @ b if penalized else g

    def hessian(self, b, penalized=True):
        _, w = self._weights(b)
        h = -(self.x.T @ (w[:, None] * self.x))
        return h - self.s if penalized else h

    def fitted(self, b):
        eta = self.x @ b
        return special.expit(eta) if self.link == "logit" else special.ndtr(eta)


@dataclass
class SingleEquationSpec:
    """One binary outcome regressed on columns and optional smooth terms."""

    outcome: str
    predictors: Sequence[str]
    smooths: Sequence[SmoothTerm] = field(default_factory=list)
    link: str = "logit"


# ----------------------------------------------------------------------
# results


@dataclass
class FitResult:
    kind: str
    names: list
    params: np.ndarray
    vcov: np.ndarray
    loglik: float
    penalized_loglik: float
    max_abs_gradient: float
    info_positive_definite: bool
    iterations: int
    converged: bool
    aic: float
    edf: float
    n_obs: int
    spec: object = None
    copula: copulas.CopulaSpec | None = None
    sample_id: str = ""
    lambdas: list = field(default_factory=list)
    history: list = field(default_factory=list)
    message: str = ""
    #: treatment column of a single-equation outcome fit built from a ModelSpec
    treatment: str | None = None

    @property
    def std_errors(self) -> np.ndarray:
        d = np.diag(self.vcov) if self.vcov is not None else np.full(len(self.params), np.nan)
        with np.errstate(invalid="ignore"):
            return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def coef(self, name: str) -> float:
        return float(self.params[self.index(name)])

    @property
    def gamma_name(self) -> str:
        if self.kind == "joint":
            return f"eq2:{self.spec.treatment}"
        if self.treatment is not None:
            return f"eq2:{self.treatment}"
        raise AttributeError("single-equation fits have no designated treatment coefficient")

    @property
    def gamma(self) -> float:
        return self.coef(self.gamma_name)

    @property
    def gamma_se(self) -> float:
        return float(self.std_errors[self.index(self.gamma_name)])

    @property
    def theta_natural(self) -> float | None:
        return None if self.copula is None else self.copula.theta

    def to_dict(self) -> dict:
        z = z_statistics(self)
        se = self.std_errors
        coefs = [
            {
                "name": name,
                "estimate": float(self.params[i]),
                "std_error": None if not np.isfinite(se[i]) else float(se[i]),
                "z": z.get(name),
            }
            for i, name in enumerate(self.names)
        ]
        return {
            "kind": self.kind,
            "copula": None if self.copula is None else self.copula.code,
            "theta": self.theta_natural,
            "coefficients": coefs,
            "loglik": self.loglik,
            "penalized_loglik": self.penalized_loglik,
            "aic": self.aic,
            "edf": self.edf,
            "n_obs": self.n_obs,
            "lambdas": list(self.lambdas),
            "diagnostics": {
                "converged": self.converged,
                "info_positive_definite": self.info_positive_definite,
                "max_abs_gradient": self.max_abs_gradient,
                "iterations": self.iterations,
                "message": self.message,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


@dataclass
class LrTestResult:
    statistic: float
    df: int
    p_value: float
    loglik_full: float = math.nan
    loglik_restricted: float = math.nan


def sample_fingerprint(n_rows: int, indices=None) -> str:
    idx = np.arange(n_rows) if indices is None else np.asarray(indices, dtype=np.int64)
    return hashlib.sha256(idx.astype("<i8").tobytes()).hexdigest()[:16]


def _covariance(neg_hess):
    """Inverse of the observed information and whether it was positive definite."""
    sym = 0.5 * (neg_hess + neg_hess.T)
    try:
        cf = linalg.cho_factor(sym, lower=True)
        vcov = linalg.cho_solve(cf, np.eye(len(sym)))
        return 0.5 * (vcov + vcov.T), True
    except (linalg.LinAlgError, ValueError):
        pass
    try:
        vcov = linalg.inv(sym)
        return 0.5 * (vcov + vcov.T), False
    except (linalg.LinAlgError, ValueError):
        return np.full(sym.shape, np.nan), False


def _edf(neg_hess_pen, neg_hess_unpen, pd: bool) -> float:
    if not pd:
        return float(len(neg_hess_pen))
    return float(np.trace(linalg.solve(neg_hess_pen, neg_hess_unpen, assume_a="sym")))


def _is_separated(y, x, fitted) -> bool:
    """Whether the outcome is (quasi-)completely separated by the design.

    Only checked when some fitted probability is numerically 0 or 1. The
    outcome is separated when some nonzero ``b`` has ``(2y - 1) * x @ b >= 0``
    on every row, found as a linear program over the box ``|b| <= 1``.
    """
    if not np.any((fitted < 1e-6) | (fitted > 1.0 - 1e-6)):
        return False
    signed = (2.0 * np.asarray(y, dtype=float) - 1.0)[:, None] * x
    scale = np.maximum(np.abs(signed).max(axis=0), 1e-300)
    a = signed / scale
    res = optimize.linprog(-a.sum(axis=0), A_ub=-a, b_ub=np.zeros(len(a)), bounds=(-1.0, 1.0), method="highs")
    return bool(res.status == 0 and -res.fun > 1e-7 * len(a))


# ----------------------------------------------------------------------
# single-equation fits


def _fit_binary(model: BinaryRegression, names, options: FitOptions, start=None):
    b0 = np.zeros(model.x.shape[1]) if start is None else np.asarray(start, dtype=float)
    res = newton_maximize(model.loglik, model.gradient, model.hessian, b0, options.tol, options.max_iter)
    neg = -res.hess
    vcov, pd = _covariance(neg)
    ll = model.loglik(res.x, penalized=False)
    edf = _edf(neg, -model.hessian(res.x, penalized=False), pd)
    converged = res.converged
    message = res.message
    if _is_separated(model.y, model.x, model.fitted(res.x)):
        converged = False
        message = "perfect prediction: the outcome is separated by the predictors"
    return FitResult(
        kind=model.link,
        names=list(names),
        params=res.x,
        vcov=vcov,
        loglik=ll,
        penalized_loglik=res.value,
        max_abs_gradient=float(np.max(np.abs(res.grad))) if len(res.grad) else 0.0,
        info_positive_definite=pd,
        iterations=res.iterations,
        converged=converged,
        aic=2.0 * edf - 2.0 * ll,
        edf=edf,
        n_obs=len(model.y),
        history=res.history,
        message=message,
    )


def _single_design(data, outcome, predictors, smooths, prefix):
    y = np.asarray(data[outcome], dtype=float)
    n = len(y)
    smooths = [t if t.lam is not None else replace(t, lam=1.0) for t in smooths]
    x, names, pens, built = build_equation(data, list(predictors), smooths, n, prefix)
    s = np.zeros((x.shape[1], x.shape[1]))
    for start, term in pens:
        k = term.basis.n_coef
        s[start:start + k, start:start + k] += term.lam * term.basis.penalty
    return y, x, names, s, built


def fit_binary(data, outcome: str, predictors: Sequence[str], smooths: Sequence[SmoothTerm] = (),
               link: str = "probit", options: FitOptions | None = None, prefix: str = "eq",
               sample_id: str | None = None) -> FitResult:
    """Maximum likelihood probit or logit of ``outcome`` on ``predictors``."""
    options = options or FitOptions()
    y, x, names, s, built = _single_design(data, outcome, predictors, smooths, prefix)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"column {outcome!r} must be binary 0/1")
    res = _fit_binary(BinaryRegression(y, x, link, s), names, options)
    res.spec = SingleEquationSpec(outcome, list(predictors), built, link)
    res.sample_id = sample_id if sample_id is not None else sample_fingerprint(len(y))
    res.lambdas = [t.lam for t in built]
    return res


def fit_baseline(data, outcome_spec, options: FitOptions | None = None, *,
                 sample_id: str | None = None) -> FitResult:
    """Exogenous single-equation regression of the outcome.

    ``outcome_spec`` is either a :class:`SingleEquationSpec` or a
    :class:`ModelSpec`, in which case the outcome equation's columns plus the
    treatment (as an ordinary column) are used with a logit link and no
    smooth terms.
    """
    treatment = None
    if isinstance(outcome_spec, ModelSpec):
        treatment = outcome_spec.treatment
        outcome_spec = SingleEquationSpec(
            outcome_spec.outcome, [*outcome_spec.eq2_predictors, treatment], [], "logit"
        )
    res = fit_binary(
        data, outcome_spec.outcome, outcome_spec.predictors, outcome_spec.smooths,
        outcome_spec.link, options, prefix="eq2", sample_id=sample_id,
    )
    res.treatment = treatment
    return res


def naive_probit(data, spec: ModelSpec, options: FitOptions | None = None) -> FitResult:
    """Single-equation probit of the outcome treating the treatment as exogenous."""
    res = fit_binary(
        data, spec.outcome, [*spec.eq2_predictors, spec.treatment], spec.smooths2, "probit",
        options, prefix="eq2",
    )
    res.treatment = spec.treatment
    return res


# ----------------------------------------------------------------------
# joint fit


def _start_values(model: JointModel, theta0: float, options: FitOptions) -> np.ndarray:
    s_full = model.penalty_matrix()
    p1, p2 = model.p1, model.p2
    s1 = s_full[:p1, :p1]
    s2 = np.zeros((p2 + 1, p2 + 1))
    s2[:p2, :p2] = s_full[p1:p1 + p2, p1:p1 + p2]
    quick = replace(options, max_iter=50)
    b1 = _fit_binary(BinaryRegression(model.y1, model.x1, "probit", s1), [""] * p1, quick).params
    b2 = _fit_binary(BinaryRegression(model.y2, model.x2e, "probit", s2), [""] * (p2 + 1), quick).params
    return np.concatenate([b1, b2, [theta0]])


def _optimize(model: JointModel, x0, options: FitOptions) -> OptimResult:
    return newton_maximize(model.loglik, model.gradient, model.hessian, x0, options.tol, options.max_iter)


def _assemble(model: JointModel, res: OptimResult, sample_id: str) -> FitResult:
    neg = -res.hess
    vcov, pd = _covariance(neg)
    ll = model.loglik(res.x, penalized=False)
    if model.penalties:
        edf = _edf(neg, -model.hessian(res.x, penalized=False), pd)
    else:
        edf = float(model.n_params)
    spec = model.spec.with_copula(model.spec.copula.with_theta(res.x[-1]))
    lams = [t.lam for _, t in model.penalties]
    converged, message = res.converged, res.message
    eta1, eta2, _ = model.etas(res.x)
    for label, y, x, eta in (("treatment", model.y1, model.x1, eta1), ("outcome", model.y2, model.x2e, eta2)):
        if _is_separated(y, x, stats.norm.cdf(eta)):
            converged = False
            message = f"perfect prediction: the {label} is separated by its equation's predictors"
    return FitResult(
        kind="joint",
        names=list(model.names),
        params=res.x,
        vcov=vcov,
        loglik=ll,
        penalized_loglik=res.value,
        max_abs_gradient=float(np.max(np.abs(res.grad))),
        info_positive_definite=pd,
        iterations=res.iterations,
        converged=converged,
        aic=2.0 * edf - 2.0 * ll,
        edf=edf,
        n_obs=model.n,
        spec=spec,
        copula=spec.copula,
        sample_id=sample_id,
        lambdas=lams,
        history=res.history,
        message=message,
    )


def fit(data, spec: ModelSpec, options: FitOptions | None = None, *, sample_id: str | None = None,
        start=None) -> FitResult:
    """Fit the copula-coupled recursive bivariate probit by penalized ML.

    Non-convergence does not raise: the returned result carries
    ``converged=False`` so that sweeps over copulas can continue.
    """
    options = options or FitOptions()
    model = JointModel(spec, data)
    sid = sample_id if sample_id is not None else sample_fingerprint(model.n)
    terms = list(model.spec.smooths1) + list(model.spec.smooths2)
    n1 = len(model.spec.smooths1)
    unset = [i for i, t in enumerate(terms) if t.lam is None]
    if unset and not options.select_smoothing:
        terms = [replace(t, lam=1.0) if t.lam is None else t for t in terms]
        unset = []
    lams = [1.0 if t.lam is None else t.lam for t in terms]

    def model_for(lam_values):
        s = model.spec.with_lambdas(lam_values[:n1], lam_values[n1:])
        return JointModel(s, data)

    x0 = None if start is None else np.asarray(start, dtype=float)
    if unset:
        # one coordinate pass over the unset smoothing weights, warm-started
        for i in unset:
            best = None
            for lam in options.lambda_grid:
                trial = list(lams)
                trial[i] = lam
                m = model_for(trial)
                if x0 is None:
                    x0 = _start_values(m, spec.copula.theta_unconstrained, options)
                try:
                    r = _optimize(m, x0, options)
                except FloatingPointError:
                    continue
                cand = _assemble(m, r, sid)
                if best is None or cand.aic < best[0]:
                    best = (cand.aic, lam, r.x)
            if best is not None:
                lams[i] = best[1]
                x0 = best[2]
            log.debug("smoothing weight %d set to %g", i, lams[i])
    final_model = model_for(lams)
    if x0 is None:
        x0 = _start_values(final_model, spec.copula.theta_unconstrained, options)
    try:
        res = _optimize(final_model, x0, options)
    except FloatingPointError as exc:
        # the objective is not even finite at the start: report, do not raise
        k = final_model.n_params
        return FitResult(
            kind="joint", names=list(final_model.names), params=x0, vcov=np.full((k, k), np.nan),
            loglik=math.nan, penalized_loglik=math.nan, max_abs_gradient=math.nan,
            info_positive_definite=False, iterations=0, converged=False, aic=math.nan, edf=math.nan,
            n_obs=final_model.n, spec=final_model.spec, copula=final_model.spec.copula, sample_id=sid,
            lambdas=lams, message=str(exc),
        )
    return _assemble(final_model, res, sid)


# ----------------------------------------------------------------------
# inference


def z_statistics(fit: FitResult) -> dict:
    """Coefficient over standard error, or ``None`` where unavailable.

    Every entry is ``None`` when the observed information was not positive
    definite.
    """
    out = {}
    se = fit.std_errors
    for i, name in enumerate(fit.names):
        if not fit.info_positive_definite or not np.isfinite(se[i]) or se[i] == 0:
            out[name] = None
        else:
            out[name] = float(fit.params[i] / se[i])
    return out


def classify_z(z: float | None, alpha: float = 0.05) -> str:
    if z is None or not math.isfinite(z):
        return "unavailable"
    crit = stats.norm.ppf(1.0 - alpha / 2.0)
    if abs(z) < crit:
        return f"null at alpha = {alpha:g}"
    return "significant positive" if z > 0 else "significant negative"


def instrument_strength_test(data, spec: ModelSpec, options: FitOptions | None = None) -> LrTestResult:
    """Likelihood ratio test of the instruments in the treatment equation.

    Fits the treatment probit with and without the instrument columns.
    """
    if not spec.instruments:
        raise ValueError("instrument_strength_test needs at least one declared instrument")
    options = options or FitOptions()
    full = fit_binary(data, spec.treatment, spec.eq1_predictors, spec.unfitted().smooths1, "probit",
                      options, prefix="eq1")
    kept = [c for c in spec.eq1_predictors if c not in spec.instruments]
    restricted = fit_binary(data, spec.treatment, kept, spec.unfitted().smooths1, "probit",
                            options, prefix="eq1")
    stat = 2.0 * (full.loglik - restricted.loglik)
    stat = max(stat, 0.0)
    dof = len(spec.instruments)
    return LrTestResult(stat, dof, float(stats.chi2.sf(stat, dof)), full.loglik, restricted.loglik)
