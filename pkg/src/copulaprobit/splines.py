"""Probit margins, linear predictors and penalized cubic regression splines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg, special


class DegenerateInputError(ValueError):
    """Too few distinct values to place the requested knots."""


class MissingColumnError(KeyError):
    pass


def probit(eta):
    """Standard normal CDF."""
    out = special.ndtr(eta)
    return out if np.ndim(out) else float(out)


def probit_inv(p):
    """Standard normal quantile; ``p`` must lie strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("probit_inv requires 0 < p < 1")
    out = special.ndtri(arr)
    return out if out.ndim else float(out)


def _cr_matrices(knots):
    """Second-derivative map ``F`` and penalty ``S`` of a natural cubic spline.

    Parameters are the spline's values at the knots; ``F`` maps them to the
    second derivatives at the knots (zero at both ends).
    """
    k = len(knots)
    h = np.diff(knots)
    d = np.zeros((k - 2, k))
    b = np.zeros((k - 2, k - 2))
    for i in range(k - 2):
        d[i, i] = 1.0 / h[i]
        d[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        d[i, i + 2] = 1.0 / h[i + 1]
        b[i, i] = (h[i] + h[i + 1]) / 3.0
        if i + 1 < k - 2:
            b[i, i + 1] = b[i + 1, i] = h[i + 1] / 6.0
    binv_d = linalg.solve(b, d, assume_a="sym")
    f = np.vstack([np.zeros(k), binv_d, np.zeros(k)])
    s = d.T @ binv_d
    return f, 0.5 * (s + s.T)


def _cr_design(x, knots, f):
    """Raw (uncentered) basis: column j is the spline with value 1 at knot j."""
    x = np.asarray(x, dtype=float)
    k = len(knots)
    n = len(x)
    out = np.zeros((n, k))
    lo, hi = knots[0], knots[-1]
    inside = (x >= lo) & (x <= hi)
    xi = x[inside]
    j = np.clip(np.searchsorted(knots, xi, side="right") - 1, 0, k - 2)
    hj = knots[j + 1] - knots[j]
    am = (knots[j + 1] - xi) / hj
    ap = (xi - knots[j]) / hj
    cm = ((knots[j + 1] - xi) ** 3 / hj - hj * (knots[j + 1] - xi)) / 6.0
    cp = ((xi - knots[j]) ** 3 / hj - hj * (xi - knots[j])) / 6.0
    rows = np.flatnonzero(inside)
    block = cm[:, None] * f[j] + cp[:, None] * f[j + 1]
    block[np.arange(len(xi)), j] += am
    block[np.arange(len(xi)), j + 1] += ap
    out[rows] = block

    # linear continuation beyond the boundary knots (natural spline: f'' = 0 there)
    h0 = knots[1] - knots[0]
    slope_lo = np.zeros(k)
    slope_lo[0] -= 1.0 / h0
    slope_lo[1] += 1.0 / h0
    slope_lo -= h0 * (2.0 * f[0] + f[1]) / 6.0
    hk = knots[-1] - knots[-2]
    slope_hi = np.zeros(k)
    slope_hi[-1] += 1.0 / hk
    slope_hi[-2] -= 1.0 / hk
    slope_hi += hk * (f[-2] + 2.0 * f[-1]) / 6.0
    below = x < lo
    above = x > hi
    if below.any():
        val = np.zeros(k)
        val[0] = 1.0
        out[below] = val + (x[below] - lo)[:, None] * slope_lo
    if above.any():
        val = np.zeros(k)
        val[-1] = 1.0
        out[above] = val + (x[above] - hi)[:, None] * slope_hi
    return out


@dataclass(frozen=True)
class SplineBasis:
    """A centered cubic regression spline fitted to one training column.

    ``constraint`` maps the ``k - 1`` identifiable coefficients back to knot
    values; ``penalty`` is the second-derivative penalty in the identifiable
    coordinates.
    """

    knots: np.ndarray
    second_deriv_map: np.ndarray
    constraint: np.ndarray
    penalty: np.ndarray

    @property
    def n_coef(self) -> int:
        return self.constraint.shape[1]

    def design(self, values) -> np.ndarray:
        raw = _cr_design(values, self.knots, self.second_deriv_map)
        return raw @ self.constraint


def build_spline_basis(values, basis_dim: int = 10):
    """Cubic regression spline basis with second-derivative penalty.

    Knots sit at empirical quantiles of ``values``. The basis is centered
    over ``values`` (sum-to-zero columns) so it can sit next to an intercept,
    which leaves ``basis_dim - 1`` columns.

    Returns
    -------
    design : ndarray of shape (n, basis_dim - 1)
    penalty : ndarray of shape (basis_dim - 1, basis_dim - 1)
    basis : SplineBasis
        Reusable for evaluation on new rows.
    """
    values = np.asarray(values, dtype=float)
    if basis_dim < 3:
        raise ValueError(f"basis_dim must be at least 3, got {basis_dim}")
    uniq = np.unique(values)
    if len(uniq) < basis_dim:
        raise DegenerateInputError(
            f"need at least {basis_dim} distinct values for the spline basis, got {len(uniq)}"
        )
    knots = np.unique(np.quantile(values, np.linspace(0, 1, basis_dim)))
    if len(knots) < basis_dim:
        # heavy ties: fall back to quantiles of the distinct values
        knots = np.quantile(uniq, np.linspace(0, 1, basis_dim))
    f, s = _cr_matrices(knots)
    raw = _cr_design(values, knots, f)
    colsum = raw.sum(axis=0)
    q, _ = linalg.qr(colsum[:, None], mode="full")
    z = q[:, 1:]
    penalty = z.T @ s @ z
    penalty = 0.5 * (penalty + penalty.T)
    basis = SplineBasis(knots, f, z, penalty)
    return raw @ z, penalty, basis


@dataclass
class SmoothTerm:
    """A penalized spline of one column.

    ``lam`` is the smoothing weight; ``None`` asks the estimator to choose it.
    ``basis`` is filled in when the term is built on training data.
    """

    column: str
    basis_dim: int = 10
    lam: float | None = None
    basis: SplineBasis | None = None

    @property
    def n_coef(self) -> int:
        return self.basis_dim - 1

    @property
    def knots(self):
        return None if self.basis is None else self.basis.knots

    @property
    def penalty(self):
        return None if self.basis is None else self.basis.penalty

    def fitted(self, values) -> "SmoothTerm":
        _, _, basis = build_spline_basis(values, self.basis_dim)
        return SmoothTerm(self.column, self.basis_dim, self.lam, basis)

    def design(self, values) -> np.ndarray:
        if self.basis is None:
            raise RuntimeError(f"smooth term on {self.column!r} has not been built")
        return self.basis.design(values)

    def label(self) -> str:
        return f"spline({self.column}, {self.basis_dim})"


@dataclass
class LinearPredictor:
    """Intercept, parametric columns and smooth terms of one equation.

    ``coefficients`` is laid out as intercept, parametric columns in order,
    then each smooth term's basis coefficients.
    """

    design_columns: Sequence[str]
    coefficients: np.ndarray
    smooth_terms: Sequence[SmoothTerm] = field(default_factory=list)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        expected = 1 + len(self.design_columns) + sum(t.n_coef for t in self.smooth_terms)
        if self.coefficients.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {self.coefficients.shape}")

    def design_row(self, row: Mapping[str, float]) -> np.ndarray:
        parts = [np.ones(1)]
        for col in self.design_columns:
            if col not in row:
                raise MissingColumnError(col)
            parts.append(np.array([float(row[col])]))
        for term in self.smooth_terms:
            if term.column not in row:
                raise MissingColumnError(term.column)
            parts.append(term.design(np.array([float(row[term.column])]))[0])
        return np.concatenate(parts)


def eta(lp: LinearPredictor, row: Mapping[str, float]) -> float:
    """Linear predictor value for one observation."""
    return float(lp.design_row(row) @ lp.coefficients)
