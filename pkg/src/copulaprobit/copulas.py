"""
Bivariate copula families used to couple the latent probit errors.

Ten families are available. Clayton, Gumbel and Joe can additionally be
rotated by 90, 180 or 270 degrees, giving 19 distinct specifications. Each
specification carries its dependence parameter on an unconstrained scale;
:func:`link` maps it into the family's domain.

All evaluation functions are vectorized over ``u`` and ``v``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import special, stats

from copulaprobit._bivariate import bvn_cdf, bvn_pdf, bvt_cdf, bvt_cdf_drho

#: Interior clamp applied to probabilities before evaluation.
EPS = 1e-10
#: Frank's parameter is kept at least this far from zero.
FRANK_GUARD = 1e-8


class InvalidParameterError(ValueError):
    """A natural copula parameter lies outside its family's domain."""


class SamplingError(RuntimeError):
    """Conditional inversion failed while drawing from a copula."""


class Family(str, enum.Enum):
    GAUSSIAN = "N"
    STUDENT_T = "T"
    FRANK = "F"
    PLACKETT = "PL"
    AMH = "AMH"
    FGM = "FGM"
    HOUGAARD = "HO"
    CLAYTON = "C"
    GUMBEL = "G"
    JOE = "J"


ROTATABLE = frozenset({Family.CLAYTON, Family.GUMBEL, Family.JOE})
ROTATIONS = (0, 90, 180, 270)

# (kind, lower, upper) bounds on the unconstrained scale; keeps every family
# numerically well inside its domain.
_LINKS = {
    Family.GAUSSIAN: ("tanh", -7.0, 7.0),
    Family.STUDENT_T: ("tanh", -7.0, 7.0),
    Family.AMH: ("tanh", -7.0, 7.0),
    Family.FGM: ("tanh", -7.0, 7.0),
    Family.FRANK: ("identity", -60.0, 60.0),
    Family.PLACKETT: ("exp", -12.0, 12.0),
    Family.CLAYTON: ("exp", -10.0, math.log(50.0)),
    Family.GUMBEL: ("exp1", -30.0, math.log(49.0)),
    Family.JOE: ("exp1", -30.0, math.log(49.0)),
    Family.HOUGAARD: ("logistic", math.log(0.02 / 0.98), 10.0),
}


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family, rotation and unconstrained dependence parameter.

    ``df`` is the fixed Student-t degrees of freedom and is ignored by the
    other families.
    """

    family: Family
    rotation: int = 0
    theta_unconstrained: float = 0.0
    df: int = 3

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.rotation not in ROTATIONS:
            raise InvalidParameterError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")
        if self.rotation and self.family not in ROTATABLE:
            raise InvalidParameterError(f"family {self.family.name} does not admit rotation {self.rotation}")
        if self.family is Family.STUDENT_T and (int(self.df) != self.df or self.df < 1):
            raise InvalidParameterError(f"Student-t df must be a positive integer, got {self.df}")

    @property
    def code(self) -> str:
        if self.family in ROTATABLE and self.rotation:
            return f"{self.family.value}{self.rotation}"
        return self.family.value

    @property
    def theta(self) -> float:
        """Natural dependence parameter."""
        return float(link(self.theta_unconstrained, self))

    @classmethod
    def from_code(cls, code: str, theta_unconstrained: float = 0.0, df: int = 3) -> "CopulaSpec":
        code = code.strip().upper()
        for fam in sorted(Family, key=lambda f: -len(f.value)):
            if code == fam.value:
                return cls(fam, 0, theta_unconstrained, df)
            if fam in ROTATABLE and code.startswith(fam.value):
                rest = code[len(fam.value):]
                if rest.isdigit():
                    return cls(fam, int(rest), theta_unconstrained, df)
        raise InvalidParameterError(f"unknown copula code {code!r}")

    @classmethod
    def from_natural(cls, family, theta: float, rotation: int = 0, df: int = 3) -> "CopulaSpec":
        spec = cls(Family(family), rotation, 0.0, df)
        return replace(spec, theta_unconstrained=unlink(theta, spec))

    def with_theta(self, theta_unconstrained: float) -> "CopulaSpec":
        return replace(self, theta_unconstrained=float(theta_unconstrained))


def all_specs(df: int = 3) -> list[CopulaSpec]:
    """The 19 family/rotation combinations, in catalog order."""
    specs = []
    for fam in Family:
        rots = ROTATIONS if fam in ROTATABLE else (0,)
        specs.extend(CopulaSpec(fam, r, 0.0, df) for r in rots)
    return specs


ALL_CODES = tuple(s.code for s in all_specs())


def independence_spec() -> CopulaSpec:
    """Gaussian copula at zero correlation."""
    return CopulaSpec(Family.GAUSSIAN, 0, 0.0)


# --------------------------------------------------------------------------
# parameter links


def _family_of(spec_or_family) -> Family:
    return spec_or_family.family if isinstance(spec_or_family, CopulaSpec) else Family(spec_or_family)


def link(theta_unconstrained, spec) -> np.ndarray | float:
    """Map an unconstrained value into the family's parameter domain."""
    theta, _ = link_with_derivative(theta_unconstrained, spec)
    return theta


def link_with_derivative(x, spec):
    """Natural parameter and its derivative with respect to ``x``."""
    fam = _family_of(spec)
    kind, lo, hi = _LINKS[fam]
    x = np.asarray(x, dtype=float)
    inside = (x >= lo) & (x <= hi)
    xc = np.clip(x, lo, hi)
    if kind == "tanh":
        th = np.tanh(xc)
        d = 1.0 - th * th
    elif kind == "exp":
        th = np.exp(xc)
        d = th
    elif kind == "exp1":
        e = np.exp(xc)
        th = 1.0 + e
        d = e
    elif kind == "logistic":
        th = special.expit(xc)
        d = th * (1.0 - th)
    else:
        # the guard moves theta by at most 1e-8; treated as smooth
        th = np.where(np.abs(xc) < FRANK_GUARD, np.where(xc < 0, -FRANK_GUARD, FRANK_GUARD), xc)
        d = np.ones_like(xc)
    d = np.where(inside, d, 0.0)
    if th.ndim == 0:
        return float(th), float(d)
    return th, d


def _check_domain(fam: Family, theta: float) -> None:
    ok = {
        Family.GAUSSIAN: -1 < theta < 1,
        Family.STUDENT_T: -1 < theta < 1,
        Family.AMH: -1 < theta < 1,
        Family.FGM: -1 < theta < 1,
        Family.FRANK: theta != 0 and math.isfinite(theta),
        Family.PLACKETT: 0 < theta < math.inf,
        Family.CLAYTON: 0 < theta < math.inf,
        Family.GUMBEL: 1 <= theta < math.inf,
        Family.JOE: 1 <= theta < math.inf,
        Family.HOUGAARD: 0 < theta < 1,
    }[fam]
    if not ok:
        raise InvalidParameterError(f"theta={theta} is outside the domain of the {fam.name} family")


def unlink(theta: float, spec) -> float:
    """Inverse of :func:`link`; rejects parameters outside the domain."""
    fam = _family_of(spec)
    theta = float(theta)
    _check_domain(fam, theta)
    kind = _LINKS[fam][0]
    if kind == "tanh":
        return math.atanh(theta)
    if kind == "exp":
        return math.log(theta)
    if kind == "exp1":
        # theta = 1 (independence) maps to the lower clip of the link
        return math.log(theta - 1.0) if theta > 1.0 else _LINKS[fam][1]
    if kind == "logistic":
        return math.log(theta / (1.0 - theta))
    return theta


def check_natural(spec: CopulaSpec, theta: float) -> None:
    """Raise :class:`InvalidParameterError` if ``theta`` is outside the domain."""
    _check_domain(spec.family, float(theta))


# --------------------------------------------------------------------------
# unrotated families: each returns (C, dC/du, dC/dv, dC/dtheta)


def _gaussian(u, v, rho, df):
    h = special.ndtri(u)
    k = special.ndtri(v)
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    c = bvn_cdf(h, k, rho)
    cu = special.ndtr((k - rho * h) / s)
    cv = special.ndtr((h - rho * k) / s)
    return c, cu, cv, bvn_pdf(h, k, rho)


def _student_t(u, v, rho, df):
    h = stats.t.ppf(u, df)
    k = stats.t.ppf(v, df)
    c = bvt_cdf(h, k, rho, df)
    s = (1.0 - rho) * (1.0 + rho)
    cu = stats.t.cdf((k - rho * h) / np.sqrt((df + h * h) * s / (df + 1.0)), df + 1)
    cv = stats.t.cdf((h - rho * k) / np.sqrt((df + k * k) * s / (df + 1.0)), df + 1)
    return c, cu, cv, bvt_cdf_drho(h, k, rho, df)


def _log_abs_expm1(z):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(z > 0, z + np.log1p(-np.exp(-np.abs(z))), np.log(-np.expm1(np.minimum(z, 0.0))))


def _frank(u, v, th, df):
    # g1 + gu*gv rewritten as a sum of two same-signed terms to avoid cancellation
    lgu = _log_abs_expm1(-th * u)
    lgv = _log_abs_expm1(-th * v)
    lg1 = _log_abs_expm1(-th)
    lnum = np.logaddexp(-th * u + lgv, -th * v + _log_abs_expm1(-th * (1.0 - v)))
    lg = lnum - lg1
    c = -lg / th
    cu = np.exp(-th * u + lgv - lnum)
    cv = np.exp(-th * v + lgu - lnum)
    dlog = u / np.expm1(th * u) + v / np.expm1(th * v) - 1.0 / np.expm1(th)
    ratio = -np.sign(th) * np.exp(lgu + lgv - lnum)
    ct = lg / th**2 - ratio * dlog / th
    if np.any(np.abs(th) < _FRANK_SERIES):
        # the closed forms cancel catastrophically near independence
        sc, scu, scv, sct = _frank_series(u, v, th)
        small = np.abs(th) < _FRANK_SERIES
        c, cu, cv, ct = (np.where(small, a, b) for a, b in ((sc, c), (scu, cu), (scv, cv), (sct, ct)))
    return c, cu, cv, ct


_FRANK_SERIES = 1e-2


def _frank_series(u, v, th):
    """Third-order expansion of the Frank copula in theta around independence."""
    a = u * (u - 1.0)
    b = v * (v - 1.0)
    a1 = 2.0 * u - 1.0
    b1 = 2.0 * v - 1.0
    ab = a * b
    c = u * v + th * ab / 2.0 + th**2 * ab * a1 * b1 / 12.0 + th**3 * ab * (6.0 * ab + a + b) / 24.0
    cu = (v + th * a1 * b / 2.0 + th**2 * b * b1 * (a1 * a1 + 2.0 * a) / 12.0
          + th**3 * b * a1 * (12.0 * ab + 2.0 * a + b) / 24.0)
    cv = (u + th * b1 * a / 2.0 + th**2 * a * a1 * (b1 * b1 + 2.0 * b) / 12.0
          + th**3 * a * b1 * (12.0 * ab + 2.0 * b + a) / 24.0)
    ct = ab / 2.0 + th * ab * a1 * b1 / 6.0 + th**2 * ab * (6.0 * ab + a + b) / 8.0
    return c, cu, cv, ct


def _plackett(u, v, th, df):
    eta = th - 1.0
    b = 1.0 + eta * (u + v)
    r = np.sqrt(b * b - 4.0 * th * eta * u * v)
    # b + r without cancellation when b < 0
    den = np.where(b >= 0, b + r, -4.0 * th * eta * u * v / (r - b))
    c = 2.0 * th * u * v / den
    den_u = eta * (den - 2.0 * th * v) / r
    den_v = eta * (den - 2.0 * th * u) / r
    den_t = ((u + v) * den - 2.0 * u * v * (2.0 * th - 1.0)) / r
    cu = 2.0 * th * v * (den - u * den_u) / den**2
    cv = 2.0 * th * u * (den - v * den_v) / den**2
    ct = 2.0 * u * v * (den - th * den_t) / den**2
    return c, cu, cv, ct


def _amh(u, v, th, df):
    d = 1.0 - th * (1.0 - u) * (1.0 - v)
    c = u * v / d
    cu = v * (d - u * th * (1.0 - v)) / d**2
    cv = u * (d - v * th * (1.0 - u)) / d**2
    ct = u * v * (1.0 - u) * (1.0 - v) / d**2
    return c, cu, cv, ct


def _fgm(u, v, th, df):
    a = (1.0 - u) * (1.0 - v)
    c = u * v * (1.0 + th * a)
    cu = v * (1.0 + th * (1.0 - v) * (1.0 - 2.0 * u))
    cv = u * (1.0 + th * (1.0 - u) * (1.0 - 2.0 * v))
    return c, cu, cv, u * v * a


def _clayton(u, v, th, df):
    lu = -np.log(u)
    lv = -np.log(v)
    a = th * lu
    b = th * lv
    big = np.maximum(a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        small_l = np.log1p(np.expm1(a) + np.expm1(b))
        m = np.logaddexp(a, b)
        large_l = m + np.log1p(-np.exp(-m))
    ls = np.where(big > 1.0, large_l, small_l)
    c = np.exp(-ls / th)
    cu = np.exp((th + 1.0) * lu - (1.0 / th + 1.0) * ls)
    cv = np.exp((th + 1.0) * lv - (1.0 / th + 1.0) * ls)
    s_ratio = np.exp(a - ls) * lu + np.exp(b - ls) * lv
    ct = c * (ls / th**2 - s_ratio / th)
    return c, cu, cv, ct


def _gumbel(u, v, th, df):
    s = -np.log(u)
    t = -np.log(v)
    ls, lt = np.log(s), np.log(t)
    la = np.logaddexp(th * ls, th * lt)
    a_root = np.exp(la / th)
    c = np.exp(-a_root)
    lcommon = -a_root + la * (1.0 / th - 1.0)
    cu = np.exp(lcommon + (th - 1.0) * ls + s)
    cv = np.exp(lcommon + (th - 1.0) * lt + t)
    weighted = np.exp(th * ls - la) * ls + np.exp(th * lt - la) * lt
    ct = -c * a_root * (-la / th**2 + weighted / th)
    return c, cu, cv, ct


def _joe(u, v, th, df):
    la = np.log1p(-u)
    lb = np.log1p(-v)
    x = np.exp(th * la)
    y = np.exp(th * lb)
    l1y = np.log1p(-y)
    l1x = np.log1p(-x)
    lw = np.logaddexp(th * la, th * lb + l1x)
    root = np.exp(lw / th)
    # 1 - root cancels when C is tiny; there 1 - W = (1 - x)(1 - y) is small
    lq = l1x + l1y
    c = np.where(lq < -0.7, -np.expm1(np.log1p(-np.exp(lq)) / th), 1.0 - root)
    lcommon = lw * (1.0 / th - 1.0)
    cu = np.exp(lcommon + (th - 1.0) * la + l1y)
    cv = np.exp(lcommon + (th - 1.0) * lb + l1x)
    wt = np.exp(th * la - lw) * la * (1.0 - y) + np.exp(th * lb - lw) * lb * (1.0 - x)
    ct = -root * (-lw / th**2 + wt / th)
    return c, cu, cv, ct


def _hougaard(u, v, th, df):
    c, cu, cv, cd = _gumbel(u, v, 1.0 / th, df)
    return c, cu, cv, -cd / th**2


_BASE = {
    Family.GAUSSIAN: _gaussian,
    Family.STUDENT_T: _student_t,
    Family.FRANK: _frank,
    Family.PLACKETT: _plackett,
    Family.AMH: _amh,
    Family.FGM: _fgm,
    Family.CLAYTON: _clayton,
    Family.GUMBEL: _gumbel,
    Family.JOE: _joe,
    Family.HOUGAARD: _hougaard,
}


# --------------------------------------------------------------------------
# rotation algebra


def rotate_cdf(base_cdf: Callable, rotation: int, u, v):
    """Evaluate the ``rotation``-degree rotation of ``base_cdf`` at (u, v)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if rotation == 0:
        return base_cdf(u, v)
    if rotation == 90:
        return v - base_cdf(1.0 - u, v)
    if rotation == 180:
        return u + v - 1.0 + base_cdf(1.0 - u, 1.0 - v)
    if rotation == 270:
        return u - base_cdf(u, 1.0 - v)
    raise InvalidParameterError(f"rotation must be one of {ROTATIONS}, got {rotation}")


def _rotated(spec: CopulaSpec, u, v, theta):
    f = _BASE[spec.family]
    rot = spec.rotation
    if rot == 0:
        return f(u, v, theta, spec.df)
    if rot == 90:
        c, cu, cv, ct = f(1.0 - u, v, theta, spec.df)
        return v - c, cu, 1.0 - cv, -ct
    if rot == 180:
        c, cu, cv, ct = f(1.0 - u, 1.0 - v, theta, spec.df)
        return u + v - 1.0 + c, 1.0 - cu, 1.0 - cv, ct
    c, cu, cv, ct = f(u, 1.0 - v, theta, spec.df)
    return u - c, 1.0 - cu, cv, -ct


def _clamp(x):
    return np.clip(x, EPS, 1.0 - EPS)


def evaluate(spec: CopulaSpec, u, v):
    """Copula value and derivatives at interior (clamped) points.

    Returns ``(C, dC/du, dC/dv, dC/dx)`` where ``x`` is the unconstrained
    parameter. Intended for likelihood work, where inputs are fitted
    probabilities already away from the boundary.
    """
    u = _clamp(np.asarray(u, dtype=float))
    v = _clamp(np.asarray(v, dtype=float))
    theta, dtheta = link_with_derivative(spec.theta_unconstrained, spec)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        c, cu, cv, ct = _rotated(spec, u, v, theta)
    lower = np.maximum(u + v - 1.0, 0.0)
    c = np.clip(c, lower, np.minimum(u, v))
    return c, np.clip(cu, 0.0, 1.0), np.clip(cv, 0.0, 1.0), ct * dtheta


# --------------------------------------------------------------------------
# quadrant masses without cancellation
#
# The likelihood needs all four cells P(U<=u, V<=v), P(U<=u, V>v),
# P(U>u, V<=v) and P(U>u, V>v). Forming the last three as differences of C
# loses every significant digit when a cell is tiny, so each family gets
# direct expressions (reflection identities or expm1/log1p forms).


def _masses_reflect(f, flip_theta):
    """Families whose one-coordinate reflection stays in the family."""

    def masses(a, b, th, df):
        ll = f(a, b, th, df)[0]
        lu = f(a, 1.0 - b, flip_theta(th), df)[0]
        ul = f(1.0 - a, b, flip_theta(th), df)[0]
        uu = f(1.0 - a, 1.0 - b, th, df)[0]
        return ll, lu, ul, uu

    return masses


def _masses_amh(a, b, th, df):
    abar, bbar = 1.0 - a, 1.0 - b
    d = 1.0 - th * abar * bbar
    return (a * b / d, a * bbar * (1.0 - th * abar) / d, abar * b * (1.0 - th * bbar) / d,
            abar * bbar * (1.0 - th * (abar * bbar - a * b)) / d)


def _masses_fgm(a, b, th, df):
    abar, bbar = 1.0 - a, 1.0 - b
    return (a * b * (1.0 + th * abar * bbar), a * bbar * (1.0 - th * abar * b),
            abar * b * (1.0 - th * a * bbar), abar * bbar * (1.0 + th * a * b))


def _lu_clayton(a, b, th):
    # a - C(a, b) = a * (1 - (1 + r)^(-1/th)),  r = a^th (b^-th - 1)
    lr = th * np.log(a) + _log_abs_expm1(-th * np.log(b))
    return a * -np.expm1(-np.logaddexp(0.0, lr) / th)


def _lu_gumbel(a, b, th):
    # a - C(a, b) = a * (1 - exp(-(-ln a) * ((1 + r)^(1/th) - 1))),  r = (ln b / ln a)^th
    la = -np.log(a)
    lr = th * (np.log(-np.log(b)) - np.log(la))
    return a * -np.expm1(-la * np.expm1(np.logaddexp(0.0, lr) / th))


def _lu_joe(a, b, th):
    # a - C(a, b) = (1 - a) * ((1 + r)^(1/th) - 1),  r = (1-b)^th (1 - (1-a)^th) / (1-a)^th
    l1a = np.log1p(-a)
    lr = th * np.log1p(-b) + np.log1p(-np.exp(th * l1a)) - th * l1a
    return (1.0 - a) * np.expm1(np.logaddexp(0.0, lr) / th)


def _uu_clayton(a, b, th, ll):
    # 1 - a - b + C = (1-a)(1-b) + C (1 - (1 + st/(1+s+t))^(-1/th)),  s = a^-th - 1, t = b^-th - 1
    s = np.expm1(-th * np.log(a))
    t = np.expm1(-th * np.log(b))
    return (1.0 - a) * (1.0 - b) + ll * -np.expm1(-np.log1p(s * t / (1.0 + s + t)) / th)


def _uu_gumbel(a, b, th, ll):
    # 1 - a - b + C = (1-a)(1-b) + (C - ab), and C >= ab for Gumbel
    la, lb = -np.log(a), -np.log(b)
    big, small = np.maximum(la, lb), np.minimum(la, lb)
    q = small / big
    gap = big * (1.0 + q - np.exp(np.log1p(q**th) / th))
    return (1.0 - a) * (1.0 - b) + a * b * np.expm1(np.maximum(gap, 0.0))


def _masses_archimedean(f, lu_fn, uu_fn=None, to_theta=lambda th: th):
    def masses(a, b, th, df):
        ll = f(a, b, th, df)[0]
        t = to_theta(th)
        lu = lu_fn(a, b, t)
        ul = lu_fn(b, a, t)
        if uu_fn is None:
            # subtract from the smaller margin, where the cancellation is mildest
            uu = np.where(a > b, (1.0 - a) - ul, (1.0 - b) - lu)
        else:
            uu = uu_fn(a, b, t, ll)
        return ll, lu, ul, uu

    return masses


_MASSES = {
    Family.GAUSSIAN: _masses_reflect(_gaussian, lambda th: -th),
    Family.STUDENT_T: _masses_reflect(_student_t, lambda th: -th),
    Family.FRANK: _masses_reflect(_frank, lambda th: -th),
    Family.PLACKETT: _masses_reflect(_plackett, lambda th: 1.0 / th),
    Family.AMH: _masses_amh,
    Family.FGM: _masses_fgm,
    Family.CLAYTON: _masses_archimedean(_clayton, _lu_clayton, _uu_clayton),
    Family.GUMBEL: _masses_archimedean(_gumbel, _lu_gumbel, _uu_gumbel),
    Family.JOE: _masses_archimedean(_joe, _lu_joe),
    Family.HOUGAARD: _masses_archimedean(_hougaard, _lu_gumbel, _uu_gumbel, lambda th: 1.0 / th),
}


def quadrant_masses(spec: CopulaSpec, u, v):
    """The four quadrant probabilities around (u, v), each computed directly.

    Returns ``(P(U<=u, V<=v), P(U<=u, V>v), P(U>u, V<=v), P(U>u, V>v))``
    at clamped interior points. Algebraically these equal ``C``,
    ``u - C``, ``v - C`` and ``1 - u - v + C``; numerically the small ones
    keep their relative accuracy.
    """
    u = _clamp(np.asarray(u, dtype=float))
    v = _clamp(np.asarray(v, dtype=float))
    theta = link(spec.theta_unconstrained, spec)
    f = _MASSES[spec.family]
    rot = spec.rotation
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        if rot == 0:
            ll, lu, ul, uu = f(u, v, theta, spec.df)
        elif rot == 90:  # U = 1 - U'
            bll, blu, bul, buu = f(1.0 - u, v, theta, spec.df)
            ll, lu, ul, uu = bul, buu, bll, blu
        elif rot == 180:
            bll, blu, bul, buu = f(1.0 - u, 1.0 - v, theta, spec.df)
            ll, lu, ul, uu = buu, bul, blu, bll
        else:  # V = 1 - V'
            bll, blu, bul, buu = f(u, 1.0 - v, theta, spec.df)
            ll, lu, ul, uu = blu, bll, buu, bul
    return tuple(np.clip(m, 0.0, 1.0) for m in (ll, lu, ul, uu))


def cdf(spec: CopulaSpec, u, v):
    """C(u, v) for the copula described by ``spec``.

    Boundary values are exact (``C(u, 0) = 0``, ``C(u, 1) = u`` and
    symmetrically); interior arguments are clamped into ``[EPS, 1 - EPS]``.
    """
    u_in = np.asarray(u, dtype=float)
    v_in = np.asarray(v, dtype=float)
    if np.any((u_in < 0) | (u_in > 1) | (v_in < 0) | (v_in > 1)):
        raise ValueError("copula arguments must lie in [0, 1]")
    u_b, v_b = np.broadcast_arrays(u_in, v_in)
    c = evaluate(spec, u_b, v_b)[0]
    c = np.where(v_b == 1.0, u_b, c)
    c = np.where(u_b == 1.0, v_b, c)
    c = np.where((u_b == 0.0) | (v_b == 0.0), 0.0, c)
    return c if c.ndim else float(c)


def partial_u(spec: CopulaSpec, u, v):
    """dC/du, the conditional distribution P(V <= v | U = u)."""
    out = evaluate(spec, u, v)[1]
    return out if np.ndim(out) else float(out)


def partial_v(spec: CopulaSpec, u, v):
    """dC/dv, the conditional distribution P(U <= u | V = v)."""
    out = evaluate(spec, u, v)[2]
    return out if np.ndim(out) else float(out)


def kendall_tau(spec: CopulaSpec) -> float:
    """Kendall's tau for families with a closed form (sign-adjusted for rotation)."""
    th = spec.theta
    fam = spec.family
    if fam in (Family.GAUSSIAN, Family.STUDENT_T):
        tau = 2.0 / math.pi * math.asin(th)
    elif fam is Family.CLAYTON:
        tau = th / (th + 2.0)
    elif fam is Family.GUMBEL:
        tau = 1.0 - 1.0 / th
    elif fam is Family.HOUGAARD:
        tau = 1.0 - th
    elif fam is Family.FGM:
        tau = 2.0 * th / 9.0
    else:
        raise NotImplementedError(f"no closed-form Kendall's tau for {fam.name}")
    return -tau if spec.rotation in (90, 270) else tau


def sample_pair(spec: CopulaSpec, rng: np.random.Generator, size: int | None = None):
    """Draw (u, v) by conditional inversion.

    ``u`` is uniform; ``v`` solves ``partial_u(u, v) = w`` for an independent
    uniform ``w`` by vectorized bisection.
    """
    n = 1 if size is None else int(size)
    u = rng.random(n)
    w = rng.random(n)
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = evaluate(spec, u, mid)[1]
        if not np.all(np.isfinite(val)):
            bad = np.flatnonzero(~np.isfinite(val))[0]
            raise SamplingError(
                f"non-finite conditional cdf for {spec.code} (theta={spec.theta}) "
                f"at u={u[bad]!r}, v={mid[bad]!r}"
            )
        below = val < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    v = 0.5 * (lo + hi)
    if size is None:
        return float(u[0]), float(v[0])
    return u, v
