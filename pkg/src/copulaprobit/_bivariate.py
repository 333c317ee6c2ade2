"""Vectorized bivariate normal and Student-t lower-orthant probabilities."""

from __future__ import annotations

import numpy as np
from scipy import special, stats

_TWO_PI = 2.0 * np.pi


def bvn_cdf(h, k, rho):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.

    Uses the Owen's T representation, which is accurate to machine precision
    for |rho| < 1.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, float), np.asarray(k, float), np.asarray(rho, float)
    )
    out = np.empty(h.shape)
    s = np.sqrt((1.0 - rho) * (1.0 + rho))

    both_zero = (h == 0.0) & (k == 0.0)
    out[both_zero] = 0.25 + np.arcsin(rho[both_zero]) / _TWO_PI

    m = ~both_zero
    hm, km, rm, sm = h[m], k[m], rho[m], s[m]
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = (km - rm * hm) / (hm * sm)
        a_k = (hm - rm * km) / (km * sm)
    # T(0, +-inf) = +-1/4; the sign of the limit is the sign of the numerator
    t_h = np.where(
        hm == 0.0, 0.25 * np.sign(km - rm * hm), special.owens_t(hm, np.nan_to_num(a_h))
    )
    t_k = np.where(
        km == 0.0, 0.25 * np.sign(hm - rm * km), special.owens_t(km, np.nan_to_num(a_k))
    )
    hk = hm * km
    beta = np.where((hk > 0) | ((hk == 0) & (hm + km >= 0)), 0.0, 0.5)
    val = 0.5 * (special.ndtr(hm) + special.ndtr(km)) - t_h - t_k - beta
    out[m] = val
    return np.clip(out, 0.0, 1.0)


def bvn_pdf(h, k, rho):
    s2 = (1.0 - rho) * (1.0 + rho)
    q = (h * h - 2.0 * rho * h * k + k * k) / s2
    return np.exp(-0.5 * q) / (_TWO_PI * np.sqrt(s2))


def bvt_cdf(h, k, rho, df: int):
    """P(X <= h, Y <= k) for a standard bivariate t with integer ``df``.

    Finite series of Dunnett and Sobel as arranged by Genz (2004); exact up
    to rounding for integer degrees of freedom.
    """
    if int(df) != df or df < 1:
        raise ValueError(f"bivariate t requires integer df >= 1, got {df}")
    nu = int(df)
    dh, dk, r = np.broadcast_arrays(
        np.asarray(h, float), np.asarray(k, float), np.asarray(rho, float)
    )
    ors = (1.0 - r) * (1.0 + r)
    hrk = dh - r * dk
    krh = dk - r * dh
    denom_hk = hrk**2 + ors * (nu + dk**2)
    denom_kh = krh**2 + ors * (nu + dh**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        xnhk = np.where(denom_hk > 0, hrk**2 / denom_hk, 0.0)
        xnkh = np.where(denom_kh > 0, krh**2 / denom_kh, 0.0)
    hs = np.sign(hrk)
    ks = np.sign(krh)
    if nu % 2 == 0:
        bvt = np.arctan2(np.sqrt(ors), -r) / _TWO_PI
        gmph = dh / np.sqrt(16.0 * (nu + dh**2))
        gmpk = dk / np.sqrt(16.0 * (nu + dk**2))
        btnckh = 2.0 * np.arctan2(np.sqrt(xnkh), np.sqrt(1.0 - xnkh)) / np.pi
        btpdkh = 2.0 * np.sqrt(xnkh * (1.0 - xnkh)) / np.pi
        btnchk = 2.0 * np.arctan2(np.sqrt(xnhk), np.sqrt(1.0 - xnhk)) / np.pi
        btpdhk = 2.0 * np.sqrt(xnhk * (1.0 - xnhk)) / np.pi
        for j in range(1, nu // 2 + 1):
            bvt = bvt + gmph * (1.0 + ks * btnckh) + gmpk * (1.0 + hs * btnchk)
            btnckh = btnckh + btpdkh
            btpdkh = 2 * j * btpdkh * (1.0 - xnkh) / (2 * j + 1)
            btnchk = btnchk + btpdhk
            btpdhk = 2 * j * btpdhk * (1.0 - xnhk) / (2 * j + 1)
            gmph = gmph * (2 * j - 1) / (2 * j * (1.0 + dh**2 / nu))
            gmpk = gmpk * (2 * j - 1) / (2 * j * (1.0 + dk**2 / nu))
    else:
        qhrk = np.sqrt(dh**2 + dk**2 - 2.0 * r * dh * dk + nu * ors)
        hkrn = dh * dk + r * nu
        hkn = dh * dk - nu
        hpk = dh + dk
        bvt = (
            np.arctan2(-np.sqrt(nu) * (hkn * qhrk + hpk * hkrn), hkn * hkrn - nu * hpk * qhrk)
            / _TWO_PI
        )
        bvt = np.where(bvt < -1e-15, bvt + 1.0, bvt)
        gmph = dh / (_TWO_PI * np.sqrt(nu) * (1.0 + dh**2 / nu))
        gmpk = dk / (_TWO_PI * np.sqrt(nu) * (1.0 + dk**2 / nu))
        btnckh = np.sqrt(xnkh)
        btpdkh = btnckh
        btnchk = np.sqrt(xnhk)
        btpdhk = btnchk
        for j in range(1, (nu - 1) // 2 + 1):
            bvt = bvt + gmph * (1.0 + ks * btnckh) + gmpk * (1.0 + hs * btnchk)
            btpdkh = (2 * j - 1) * btpdkh * (1.0 - xnkh) / (2 * j)
            btnckh = btnckh + btpdkh
            btpdhk = (2 * j - 1) * btpdhk * (1.0 - xnhk) / (2 * j)
            btnchk = btnchk + btpdhk
            gmph = gmph * 2 * j / ((2 * j + 1) * (1.0 + dh**2 / nu))
            gmpk = gmpk * 2 * j / ((2 * j + 1) * (1.0 + dk**2 / nu))
    return np.clip(bvt, 0.0, 1.0)


def bvt_pdf(h, k, rho, df):
    s2 = (1.0 - rho) * (1.0 + rho)
    q = (h * h - 2.0 * rho * h * k + k * k) / s2
    return (1.0 + q / df) ** (-(df + 2.0) / 2.0) / (_TWO_PI * np.sqrt(s2))


def bvt_cdf_drho(h, k, rho, df):
    """Derivative of :func:`bvt_cdf` with respect to rho."""
    s2 = (1.0 - rho) * (1.0 + rho)
    q = (h * h - 2.0 * rho * h * k + k * k) / s2
    return (1.0 + q / df) ** (-df / 2.0) / (_TWO_PI * np.sqrt(s2))


def t_cdf(x, df):
    return stats.t.cdf(x, df)


def t_ppf(p, df):
    return stats.t.ppf(p, df)
