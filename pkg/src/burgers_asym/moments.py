"""Initial-data moments and renormalized space-time moments of ``u^2``.

A space-time moment at renormalization level ``k`` is

    int_0^inf int (-s)^l (-y)^beta (u^2 - sum_{m1 + m2 <= k} U_m1 U_m2)(s, y) dy ds

with ``U_0 = M0 G`` and ``U_1 = M1 . grad G`` (levels -1, 0, 1 are supported;
-1 means no subtraction).  The subtracted profile products are integrated in
closed form.  The solver's dense per-step record of ``int y^beta u^2`` is
integrated up to the final time ``T`` with Simpson's rule; beyond ``T`` the
highest available subtraction is integrated analytically and the remaining
residual is extrapolated from a power-law fit over ``[T/8, T]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .field import Field, shell_max
from .kernel import mi_order, multi_indices, monomial, product_moment, unit

DELTA = 0.05
NOISE_TOL = 1e-7        # symmetry-breaking roundoff settles near 1e-9 of the scale in nonlinear runs
MAX_LEVEL = 1


class MomentError(RuntimeError):
    pass


def parity_vanishes(beta, m1: int, m2: int) -> bool:
    """``int x^beta U_m1 U_m2 dx = 0`` whenever ``|beta| + m1 + m2`` is odd (U_m has the parity of m)."""
    return (mi_order(beta) + m1 + m2) % 2 == 1


@dataclass
class MomentEntry:
    value: float
    converged: bool
    tail_bound: float
    decay: float = math.nan          # fitted exponent of the renormalized integrand near s = T
    flag: str = ""                   # "", "divergent", "slow", "negligible"
    subtractions: dict = field(default_factory=dict)   # (m1, m2) -> "parity" or "closed-form"


@dataclass
class MomentTable:
    n: int
    M0: float
    alpha_moments: dict
    alpha_errors: dict = field(default_factory=dict)
    M1: np.ndarray | None = None
    st_moments: dict = field(default_factory=dict)

    def alpha(self, alpha) -> float:
        alpha = tuple(alpha)
        if alpha not in self.alpha_moments:
            raise MomentError(f"initial moment {alpha} was not computed")
        return self.alpha_moments[alpha]

    def st(self, l: int, beta, level: int) -> MomentEntry:
        key = (l, tuple(beta), level)
        if key not in self.st_moments:
            raise MomentError(f"space-time moment l={l} beta={tuple(beta)} level={level} was not computed")
        return self.st_moments[key]

    def require(self, l: int, beta, level: int) -> float:
        e = self.st(l, beta, level)
        if not e.converged:
            raise MomentError(f"space-time moment l={l} beta={tuple(beta)} level={level} "
                              f"is not converged ({e.flag or 'decay'} {e.decay:.3g})")
        return e.value

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l", "beta", "renorm_level", "value", "tail_bound", "converged"])
            for (l, beta, level), e in sorted(self.st_moments.items()):
                w.writerow([l, "-".join(map(str, beta)), level, repr(e.value), repr(e.tail_bound),
                            int(e.converged)])


# ---------------------------------------------------------------------------
# initial data

def initial_moments(u0: Field, max_order: int, tail_tol: float = 1e-12) -> MomentTable:
    """``int (-y)^alpha u0(y) dy`` for ``|alpha| <= max_order`` by the rectangle rule.

    The error estimate is the change when every other grid point is dropped.
    """
    if max_order > max(2 * u0.n - 3, 1):
        raise MomentError(f"max_order {max_order} exceeds 2n-3 = {2 * u0.n - 3}")
    peak = float(np.abs(u0.values).max())
    if peak > 0 and shell_max(u0.values) > tail_tol * peak:
        raise MomentError("initial data does not decay at the box boundary; moments untrustworthy")
    coords = u0.coords()
    coarse = [c[tuple(slice(None, None, 2) for _ in range(u0.n))] if c.size > 1 else c for c in coords]
    coarse_vals = u0.values[tuple(slice(None, None, 2) for _ in range(u0.n))]
    out, errs = {}, {}
    for k in range(max_order + 1):
        for alpha in multi_indices(u0.n, k):
            sign = (-1) ** k
            fine = sign * float((u0.values * monomial(alpha, coords)).sum()) * u0.cell_volume
            crs = sign * float((coarse_vals * monomial(alpha, coarse)).sum()) * (2 * u0.h) ** u0.n
            out[alpha] = fine
            errs[alpha] = abs(fine - crs)
    return MomentTable(u0.n, out[(0,) * u0.n], out, errs)


# ---------------------------------------------------------------------------
# profile products

def _profile_ops(m: int, n: int, M0: float, M1):
    if m == 0:
        return [(M0, (0,) * n)]
    if m == 1:
        if M1 is None:
            raise MomentError("level-1 subtraction needs M1")
        return [(float(M1[j]), unit(n, j)) for j in range(n) if M1[j] != 0.0]
    raise MomentError(f"profile U_{m} products are not available in closed form here")


def profile_product_moment(beta, m1: int, m2: int, n: int, M0: float, M1=None, s: float = 1.0) -> float:
    """``int y^beta U_m1(s) U_m2(s) dy`` for ``m1, m2 <= 1``; exactly 0 when parity forces it."""
    if parity_vanishes(beta, m1, m2):
        return 0.0
    total = 0.0
    for c1, a1 in _profile_ops(m1, n, M0, M1):
        for c2, a2 in _profile_ops(m2, n, M0, M1):
            total += c1 * c2 * product_moment(beta, a1, a2, s)
    return total


def subtraction_pairs(level: int) -> list[tuple[int, int]]:
    return [(m1, m2) for m1 in range(level + 1) for m2 in range(level + 1) if m1 + m2 <= level]


def subtraction_terms(beta, level: int, n: int, M0: float, M1=None):
    """``sum_{m1+m2<=level} int y^beta U_m1 U_m2 (s) dy`` as a list of ``(C, p)`` meaning ``C s^p``."""
    terms, info = {}, {}
    for m1, m2 in subtraction_pairs(level):
        if parity_vanishes(beta, m1, m2):
            info[(m1, m2)] = "parity"
            continue
        p = 0.5 * (mi_order(beta) - n - m1 - m2)
        C = profile_product_moment(beta, m1, m2, n, M0, M1, 1.0)
        info[(m1, m2)] = "closed-form"
        terms[p] = terms.get(p, 0.0) + C
    return [(C, p) for p, C in sorted(terms.items()) if C != 0.0], info


# ---------------------------------------------------------------------------
# space-time moments

def _power_integral(C: float, q: float, a: float, b: float) -> float:
    """``int_a^b C s^q ds`` with ``b`` possibly infinite; ``nan`` if divergent."""
    if C == 0.0:
        return 0.0
    if math.isinf(b):
        return -C * a ** (q + 1) / (q + 1) if q < -1 else math.nan
    if a == 0.0:
        return C * b ** (q + 1) / (q + 1) if q > -1 else math.nan
    if q == -1:
        return C * math.log(b / a)
    return C * (b ** (q + 1) - a ** (q + 1)) / (q + 1)


def fit_power(s: np.ndarray, r: np.ndarray):
    """Fit ``|r| ~ c s^slope``; returns ``(slope, value_at_last_point)``."""
    mask = r != 0
    if mask.sum() < 3:
        return -math.inf, 0.0
    res = stats.linregress(np.log(s[mask]), np.log(np.abs(r[mask])))
    val_T = math.copysign(math.exp(res.intercept + res.slope * math.log(s[-1])), r[-1])
    return float(res.slope), val_T


def renormalized_st_moment(series, l: int, beta, level: int, M0: float, M1=None,
                           window: float = 0.125, delta: float = DELTA) -> MomentEntry:
    """Renormalized space-time moment from a dense moment series (see module docstring)."""
    beta = tuple(beta)
    n = len(beta)
    if not -1 <= level <= MAX_LEVEL:
        raise MomentError(f"renormalization level {level} unsupported")
    if level >= 1 and M1 is None:
        raise MomentError("level-1 renormalization needs M1")
    s = series.times()
    if len(s) < 8:
        raise MomentError("moment series too short")
    T = float(s[-1])
    sign = (-1) ** (l + mi_order(beta))
    weight = sign * s**l
    raw = weight * series.column(beta)

    sub_k, info = subtraction_terms(beta, level, n, M0, M1)
    K = MAX_LEVEL if M1 is not None else 0
    K = max(K, level)
    sub_K, _ = subtraction_terms(beta, K, n, M0, M1)

    def S(terms, x):
        return sum(sign * C * x ** (p + l) for C, p in terms) if terms else np.zeros_like(x)

    entry = MomentEntry(math.nan, False, math.inf, subtractions=info)

    # integral over [0, T]
    head = float(integrate.simpson(raw, x=s))
    for C, p in sub_k:
        v = _power_integral(sign * C, p + l, 0.0, T)
        if math.isnan(v):
            entry.flag = "divergent"
        head -= v

    # analytic tail of the extra subtraction, then fitted tail of what remains
    tail = 0.0
    extra = {p: C for C, p in sub_K}
    for C, p in sub_k:
        extra[p] = extra.get(p, 0.0) - C
    for p, C in extra.items():
        if abs(C) > 0:
            v = _power_integral(sign * C, p + l, T, math.inf)
            if math.isnan(v):
                entry.flag = "divergent"
            tail += v

    win = s >= window * T
    scale = np.abs(s[win] ** l * series.column((0,) * n)[win]) * (1.0 + s[win]) ** (0.5 * mi_order(beta))
    resid_K = raw[win] - S(sub_K, s[win])
    resid_k = raw[win] - S(sub_k, s[win])
    if np.max(np.abs(resid_k) / scale) < NOISE_TOL:
        entry.decay = -math.inf
        fitted_tail = 0.0
        if not entry.flag:
            entry.flag = "negligible"
    else:
        entry.decay, _ = fit_power(s[win], resid_k)
        slope_K, r_T = fit_power(s[win], resid_K)
        if np.max(np.abs(resid_K) / scale) < NOISE_TOL:
            fitted_tail = 0.0
        elif slope_K < -1.0:
            fitted_tail = r_T * T / (-slope_K - 1.0)
        else:
            fitted_tail = math.nan
    entry.tail_bound = abs(fitted_tail) if not math.isnan(fitted_tail) else math.inf
    entry.value = head + tail + (fitted_tail if not math.isnan(fitted_tail) else 0.0)
    if entry.flag != "divergent" and entry.decay > -(1.0 + delta):
        entry.flag = "slow"
    entry.converged = entry.flag in ("", "negligible") and math.isfinite(entry.tail_bound)
    if entry.flag == "divergent":
        entry.value = math.nan
    return entry


def integrand_decay(series, l: int, beta, level: int, M0: float, M1=None, window: float = 0.125) -> float:
    """Fitted power of the renormalized spatial-moment integrand over ``[window*T, T]``."""
    beta = tuple(beta)
    s = series.times()
    sign = (-1) ** (l + mi_order(beta))
    raw = sign * s**l * series.column(beta)
    terms, _ = subtraction_terms(beta, level, len(beta), M0, M1)
    sub = sum(sign * C * s ** (p + l) for C, p in terms) if terms else 0.0
    win = s >= window * s[-1]
    return fit_power(s[win], (raw - sub)[win])[0]


def required_moments(n: int, max_order: int) -> list[tuple[int, tuple, int]]:
    """Space-time moments ``(l, beta, level)`` needed by the expansion up to ``max_order``."""
    req = []
    if n >= 3 and max_order >= 1:
        req.append((0, (0,) * n, -1))              # enters M1
    if n == 3:
        if max_order >= 2:
            req += [(0, b, -1) for b in multi_indices(n, 1)]
        if max_order >= 3:
            req += [(1, (0,) * n, 0)] + [(0, b, 0) for b in multi_indices(n, 2)]
    elif n >= 4:
        for m in range(2, min(max_order, n - 2) + 1):
            for l in range((m - 1) // 2 + 1):
                req += [(l, b, -1) for b in multi_indices(n, m - 1 - 2 * l)]
    return req


def compute_moment_table(run, max_order: int, extra=()) -> MomentTable:
    """Initial moments, ``M1`` and every space-time moment the expansion up to ``max_order`` needs."""
    n = run.config.n
    a = np.asarray(run.config.a)
    table = initial_moments(run.u0, max(min(max_order, 2 * n - 3), 1))
    req = required_moments(n, max_order) + list(extra)
    if n >= 3:
        e = renormalized_st_moment(run.series, 0, (0,) * n, -1, table.M0, None)
        table.st_moments[(0, (0,) * n, -1)] = e
        if e.converged:
            table.M1 = np.array([table.alpha(unit(n, j)) for j in range(n)]) + a * e.value
    for l, beta, level in req:
        key = (l, tuple(beta), level)
        if key not in table.st_moments:
            table.st_moments[key] = renormalized_st_moment(run.series, l, beta, level, table.M0, table.M1)
    return table


def cumulative_square_integral(series) -> tuple[np.ndarray, np.ndarray]:
    """``I(t) = int_0^t int u^2 dy ds`` at every recorded step (cumulative trapezoid)."""
    s = series.times()
    m = series.column((0,) * series.n)
    return s, integrate.cumulative_trapezoid(m, s, initial=0.0)


def log_growth_rate(series, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``I(t)`` against ``log(1 + t)`` over ``[t_lo, t_hi]``.

    In two dimensions this tends to ``M0^2 / (8 pi)``.
    """
    s, I = cumulative_square_integral(series)
    sel = (s >= t_lo) & (s <= t_hi)
    if sel.sum() < 3:
        raise MomentError(f"fewer than 3 samples in [{t_lo}, {t_hi}]")
    return float(stats.linregress(np.log1p(s[sel]), I[sel]).slope)
