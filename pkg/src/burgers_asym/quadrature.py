"""Brute-force quadrature of Gaussian integrals, independent of the closed forms.

Spatial integrals over R^n are computed with tensor Gauss-Hermite rules whose
nodes are scaled to the combined Gaussian width of the integrand; inner time
integrals with an ``s^(-1/2)`` endpoint singularity use ``s = sigma^2`` and
Gauss-Legendre in ``sigma``; tails ``int_{s0}^inf`` use ``s = s0 / w^2``.
Every rule is refined by doubling the node count, and the difference between
the last two levels is reported as the error estimate.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .kernel import KernelTerm, delayed, eval_terms, laplacian, monomial, partial_op, unit, IDENTITY

MAX_NODES = 256
TimeSpec = Union[float, Callable[[float], float]]


class QuadratureError(RuntimeError):
    """Requested tolerance not reached at the maximum node count."""


@dataclass(frozen=True)
class Factor:
    """A sum of kernel terms evaluated at ``time`` (a number, or a function of the inner variable s)."""

    terms: tuple[KernelTerm, ...]
    time: TimeSpec = 1.0

    def at(self, s: float | None) -> float:
        return self.time(s) if callable(self.time) else float(self.time)


@dataclass(frozen=True)
class IntegralSpec:
    """``int [s-weight] int_{R^n} y^monomial prod(factors) dy ds``.

    ``s_kind`` is ``None`` (no time integral), ``"inv_sqrt"`` for
    ``int_0^{s_max} s^(-1/2) (...) ds`` or ``"tail"`` for ``int_{s_min}^inf (...) ds``.
    """

    factors: tuple[Factor, ...]
    monomial: tuple[int, ...]
    s_kind: str | None = None
    s_bound: float = 1.0
    tol: float = 1e-12
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.monomial)


@dataclass
class QuadResult:
    value: float
    err_est: float
    nodes: int


@lru_cache(maxsize=None)
def _hermite_rule(m: int):
    x, w = np.polynomial.hermite.hermgauss(m)
    return x, w * np.exp(x * x)


@lru_cache(maxsize=None)
def _legendre_rule(m: int):
    return np.polynomial.legendre.leggauss(m)


def _precision(factors: Sequence[Factor], s: float | None) -> float:
    # integrand ~ exp(-p |y|^2) with p = sum of 1/(4 T) over the Gaussian factors
    p = 0.0
    for f in factors:
        times = {term.time_map(f.at(s)) for term in f.terms}
        p += 1.0 / (4.0 * min(times))
    return p


def _spatial(factors: Sequence[Factor], beta: Sequence[int], s: float | None, m: int) -> float:
    n = len(beta)
    p = _precision(factors, s)
    x, w = _hermite_rule(m)
    y = x / math.sqrt(p)
    wy = w / math.sqrt(p)
    coords = [y.reshape([-1 if j == i else 1 for j in range(n)]) for i in range(n)]
    vals = monomial(beta, coords)
    for f in factors:
        vals = vals * eval_terms(f.terms, f.at(s), coords)
    vals = np.broadcast_to(vals, (m,) * n)
    for _ in range(n):
        vals = vals @ wy if vals.ndim > 1 else vals @ wy
    return float(vals)


def _level(spec: IntegralSpec, m: int) -> float:
    if spec.s_kind is None:
        return _spatial(spec.factors, spec.monomial, None, m)
    sig, wsig = _legendre_rule(m)
    if spec.s_kind == "inv_sqrt":
        # s = sigma^2: s^(-1/2) ds = 2 d sigma on (0, sqrt(s_max))
        r = math.sqrt(spec.s_bound)
        sig = 0.5 * r * (sig + 1.0)
        wts = 0.5 * r * wsig * 2.0
        svals = sig**2
    elif spec.s_kind == "tail":
        # s = s0 / w^2, ds = 2 s0 w^-3 dw on (0, 1]
        wv = 0.5 * (sig + 1.0)
        svals = spec.s_bound / wv**2
        wts = 0.5 * wsig * 2.0 * spec.s_bound / wv**3
    else:
        raise ValueError(f"unknown s_kind {spec.s_kind!r}")
    return float(sum(wk * _spatial(spec.factors, spec.monomial, sk, m) for sk, wk in zip(svals, wts)))


def integrate(spec: IntegralSpec, start: int | None = None) -> QuadResult:
    """Evaluate ``spec`` by node doubling until successive levels agree to ``spec.tol`` (relative)."""
    if spec.tol < 1e-12:
        raise ValueError("tolerance below 1e-12 is not supported")
    m = start or (8 if spec.n >= 4 else 16)
    prev = _level(spec, m)
    while True:
        if 2 * m > MAX_NODES or (2 * m) ** spec.n > 4e7:
            raise QuadratureError(f"{spec.name or 'integral'}: tolerance {spec.tol} not reached "
                                  f"with {m} nodes per axis")
        m *= 2
        cur = _level(spec, m)
        err = abs(cur - prev)
        if err <= spec.tol * max(abs(cur), 1e-300):
            return QuadResult(cur, err, m)
        prev = cur


def gauss_product_moment(term_lists: Sequence[Sequence[KernelTerm]], beta: Sequence[int], t: float,
                         nodes: int = 24, absolute: bool = False) -> float:
    """``int y^beta prod_i [sum of term_lists[i]](t, y) dy`` on one fixed tensor Gauss-Hermite rule.

    With ``absolute`` the integrand's modulus is integrated instead (a scale for
    judging cancellation).
    """
    factors = [Factor(tuple(terms), t) for terms in term_lists]
    n = len(beta)
    p = _precision(factors, None)
    x, w = _hermite_rule(nodes)
    y = x / math.sqrt(p)
    wy = w / math.sqrt(p)
    coords = [y.reshape([-1 if j == i else 1 for j in range(n)]) for i in range(n)]
    vals = monomial(beta, coords)
    for f in factors:
        vals = vals * eval_terms(f.terms, t, coords)
    vals = np.broadcast_to(np.abs(vals) if absolute else vals, (nodes,) * n)
    for _ in range(n):
        vals = vals @ wy
    return float(vals)


def integrate_1d_inv_sqrt(func: Callable[[np.ndarray], np.ndarray], s_max: float,
                          tol: float = 1e-13) -> QuadResult:
    """``int_0^{s_max} s^(-1/2) func(s) ds`` by ``s = sigma^2`` and Gauss-Legendre doubling."""
    r = math.sqrt(s_max)

    def level(m):
        x, w = _legendre_rule(m)
        sig = 0.5 * r * (x + 1.0)
        return float(np.sum(r * w * func(sig**2)))

    m = 8
    prev = level(m)
    while 2 * m <= MAX_NODES:
        m *= 2
        cur = level(m)
        if abs(cur - prev) <= tol * abs(cur):
            return QuadResult(cur, abs(cur - prev), m)
        prev = cur
    raise QuadratureError("1-D integral did not converge")


# ---------------------------------------------------------------------------
# the fixed table of closed-form constants

def _g(n: int) -> tuple[KernelTerm, ...]:
    return (KernelTerm(1.0, (0,) * n),)


def _dj(n: int, j: int, time_map=IDENTITY) -> tuple[KernelTerm, ...]:
    return (KernelTerm(1.0, unit(n, j), 0, time_map),)


def _lap_dj(n: int, j: int) -> tuple[KernelTerm, ...]:
    return tuple((laplacian(n) * partial_op(unit(n, j))).terms())


def six_integral_specs(j: int = 0, k: int = 1, tol: float = 1e-12) -> dict[str, IntegralSpec]:
    """The six 3-D integrals that assemble the logarithmic coefficient (axes ``j != k``)."""
    n = 3
    G1 = Factor(_g(n), 1.0)
    dG_half = Factor(_dj(n, j), 0.5)
    lap_dG = Factor(_lap_dj(n, j), lambda s: 1.0 - 0.5 * s)
    yj = unit(n, j)
    ykkj = tuple(a + b for a, b in zip(unit(n, k, 2), unit(n, j)))
    yjjj = unit(n, j, 3)
    return {
        "I_yj_dG": IntegralSpec((G1, dG_half), yj, tol=tol, name="I_yj_dG"),
        "I_yk2yj_dG": IntegralSpec((G1, dG_half), ykkj, tol=tol, name="I_yk2yj_dG"),
        "I_yj3_dG": IntegralSpec((G1, dG_half), yjjj, tol=tol, name="I_yj3_dG"),
        "T_yj_lapdG": IntegralSpec((G1, lap_dG), yj, "inv_sqrt", 1.0, tol, "T_yj_lapdG"),
        "T_yk2yj_lapdG": IntegralSpec((G1, lap_dG), ykkj, "inv_sqrt", 1.0, tol, "T_yk2yj_lapdG"),
        "T_yj3_lapdG": IntegralSpec((G1, lap_dG), yjjj, "inv_sqrt", 1.0, tol, "T_yj3_lapdG"),
    }


SQ6PI = math.sqrt(6.0 * math.pi)
PI2 = math.pi**2

SIX_CLOSED_FORMS = {
    "I_yj_dG": -SQ6PI / (54.0 * PI2),
    "I_yk2yj_dG": -SQ6PI / (81.0 * PI2),
    "I_yj3_dG": -SQ6PI / (27.0 * PI2),
    "T_yj_lapdG": 7.0 * SQ6PI / (2**3 * 3**3 * PI2),
    "T_yk2yj_lapdG": 11.0 * SQ6PI / (2 * 3**4 * 5 * PI2),
    "T_yj3_lapdG": 11.0 * SQ6PI / (2 * 3**3 * 5 * PI2),
}

K4_CLOSED_FORM = -math.sqrt(3.0) / (2**6 * 3**3 * 5 * math.pi**3)


def _mass_spec(n: int, tol: float) -> IntegralSpec:
    return IntegralSpec((Factor(_g(n), 1.0), Factor(_g(n), 1.0)), (0,) * n, tol=tol, name=f"mass_n{n}")


def _second_moment_spec(n: int, tol: float) -> IntegralSpec:
    G = Factor(_g(n), 1.0)
    return IntegralSpec((G, G), unit(n, 0, 2), tol=tol, name=f"y2_mass_n{n}")


@dataclass
class ConstantEntry:
    name: str
    closed_form: float
    quadrature: float
    rel_err: float
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "closed_form": self.closed_form, "quadrature": self.quadrature,
                "rel_err": self.rel_err, "pass": self.passed}


@dataclass
class ConstantReport:
    entries: list[ConstantEntry] = field(default_factory=list)
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_json(self) -> str:
        return json.dumps({"tolerance": self.tolerance, "pass": self.passed,
                           "entries": [e.as_dict() for e in self.entries]}, indent=2)

    def lines(self) -> list[str]:
        return [f"{'PASS' if e.passed else 'FAIL'}  {e.name:<18} closed={e.closed_form:+.12e} "
                f"quad={e.quadrature:+.12e} rel_err={e.rel_err:.2e}" for e in self.entries]


def quadrature_table(tol: float = 1e-13) -> dict[str, float]:
    """Quadrature values of every entry of the constant table (no closed forms used)."""
    tol = max(tol, 1e-12)
    out = {}
    for n in (2, 3, 4):
        out[f"mass_G2_n{n}"] = integrate(_mass_spec(n, tol)).value
    out["tail_G2_n3"] = integrate(IntegralSpec((Factor(_g(3), lambda s: s), Factor(_g(3), lambda s: s)),
                                               (0, 0, 0), "tail", 1.0, tol, "tail_n3")).value
    # 4-D log coefficient: sum_j d_j^2 (a.grad) G / 2! int y_j^2 G^2 - d_t (a.grad) G int G^2
    from .profiles import k4_constant_from_integrals, log_coefficient_4d
    c2 = integrate(_second_moment_spec(4, tol)).value
    out["log_coeff_4d"] = log_coefficient_4d(c2, out["mass_G2_n4"])
    # 2-D: d/dlog(1+t) of int_0^t int G^2(1+s) is the mass of G(1)^2
    out["log_coeff_2d"] = out["mass_G2_n2"]
    for name, spec in six_integral_specs(tol=tol).items():
        out[name] = integrate(spec).value
    out["oned_inv_sqrt"] = integrate_1d_inv_sqrt(lambda s: (2.0 - 0.5 * s) ** -3.5, 1.0).value
    out["K4_n3"] = k4_constant_from_integrals({k: out[k] for k in SIX_CLOSED_FORMS})
    return out


def closed_form_table() -> dict[str, float]:
    pi = math.pi
    return {
        "mass_G2_n2": 1.0 / (8.0 * pi),
        "mass_G2_n3": math.sqrt(2.0 * pi) / (32.0 * pi**2),
        "mass_G2_n4": 1.0 / (64.0 * pi**2),
        "tail_G2_n3": math.sqrt(2.0 * pi) / (16.0 * pi**2),
        "log_coeff_4d": -1.0 / (128.0 * pi**2),
        "log_coeff_2d": 1.0 / (8.0 * pi),
        **SIX_CLOSED_FORMS,
        "oned_inv_sqrt": 14.0 * math.sqrt(6.0) / (3**3 * 5),
        "K4_n3": K4_CLOSED_FORM,
    }


def verify_constant_table(tolerance: float = 1e-8) -> ConstantReport:
    closed = closed_form_table()
    quad = quadrature_table()
    report = ConstantReport(tolerance=tolerance)
    for name, cf in closed.items():
        q = quad[name]
        rel = abs(q - cf) / abs(cf)
        report.entries.append(ConstantEntry(name, cf, q, rel, bool(rel <= tolerance)))
    return report


# ---------------------------------------------------------------------------
# pointwise identities on grids

def _centered_fft_conv(f: np.ndarray, g: np.ndarray, cell: float) -> np.ndarray:
    # grids have the origin at index N/2; move it to 0, convolve circularly, move back
    F = np.fft.fftn(np.fft.ifftshift(f))
    G = np.fft.fftn(np.fft.ifftshift(g))
    return np.fft.fftshift(np.real(np.fft.ifftn(F * G))) * cell


def convolution_identity_error(t: float, s: float, a: Sequence[float], N: int = 64,
                               L: float = 16.0) -> float:
    """Max error of the FFT convolution ``(a.grad)G(t-s) * G(s)^2`` against the merged-kernel
    closed form, relative to the closed form's maximum."""
    from .field import grid_coords
    from .kernel import convolve_selfsquare, directional
    n = len(a)
    coords = grid_coords(n, N, L)
    h = 2.0 * L / N
    f = eval_terms(directional(a).terms(), t - s, coords)
    g = eval_terms(_g(n), s, coords) ** 2
    f, g = (np.broadcast_to(v, (N,) * n) for v in (f, g))
    grid = _centered_fft_conv(f, g, h**n)
    closed = np.broadcast_to(eval_terms(convolve_selfsquare(t, s, a), t, coords), (N,) * n)
    return float(np.max(np.abs(grid - closed)) / np.max(np.abs(closed)))


def ibp_identity_sides(t: float, a: Sequence[float], coords, tol: float = 1e-11):
    """Both sides of
    ``int_0^t s^(-3/2) [(a.grad)G(t-s/2) - (a.grad)G(t)] ds
      = -2 t^(-1/2) [(a.grad)G(t/2) - (a.grad)G(t)] - int_0^t s^(-1/2) Lap (a.grad) G(t-s/2) ds``.

    The left side is integrated here by ``s = sigma^2`` (the integrand becomes
    ``2 f(sigma^2) / sigma^2``, bounded); the right side uses the profile
    builder's time integral.
    """
    from .kernel import HALF, directional
    from .profiles import time_integral
    adg = directional(a).terms()
    base = eval_terms(adg, t, coords)
    r = math.sqrt(t)

    def level(m):
        x, w = _legendre_rule(m)
        sig = 0.5 * r * (x + 1.0)
        acc = 0.0
        for sk, wk in zip(sig, w):
            s = sk * sk
            shifted = [KernelTerm(k.coeff, k.alpha, k.t_order, delayed(s)) for k in adg]
            acc = acc + (0.5 * r * wk) * 2.0 * (eval_terms(shifted, t, coords) - base) / s
        return acc

    m, prev = 16, level(16)
    while True:
        if 2 * m > MAX_NODES:
            raise QuadratureError("integration-by-parts left side did not converge")
        m *= 2
        cur = level(m)
        if np.max(np.abs(cur - prev)) <= tol * np.max(np.abs(cur)):
            break
        prev = cur
    half = [KernelTerm(k.coeff, k.alpha, k.t_order, HALF) for k in adg]
    rhs = -2.0 / r * (eval_terms(half, t, coords) - base) \
        - time_integral(laplacian(len(a)) * directional(a), t, coords, tol=tol)
    return cur, rhs

