"""Heat-kernel derivative terms and the Gaussian identities built from them.

A :class:`KernelTerm` is one summand ``c * d_t^l grad^alpha G(T(t), x)`` with
``G(t, x) = (4 pi t)^(-n/2) exp(-|x|^2 / (4 t))`` and ``T`` an affine time map.
Time derivatives are eliminated through ``d_t G = Laplacian G`` so every
evaluation reduces to products of one-dimensional Gaussian derivatives,
generated by the Hermite recurrence.

Differential operators acting on ``G`` (``a . grad``, ``Laplacian``, products
of those) are represented as :class:`DiffOp`, a mapping from multi-index to
coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

MultiIndex = tuple[int, ...]


class KernelError(ValueError):
    """Raised for invalid kernel evaluations (bad time, dimension mismatch)."""


# ---------------------------------------------------------------------------
# multi-indices

def check_multi_index(alpha: Sequence[int], n: int | None = None) -> MultiIndex:
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise KernelError(f"negative entry in multi-index {alpha}")
    if n is not None and len(alpha) != n:
        raise KernelError(f"multi-index {alpha} has length {len(alpha)}, expected {n}")
    return alpha


def mi_order(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def mi_factorial(alpha: Sequence[int]) -> int:
    # exact integer arithmetic, no overflow for any realistic order
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def unit(n: int, j: int, k: int = 1) -> MultiIndex:
    e = [0] * n
    e[j] = k
    return tuple(e)


def mi_add(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    return tuple(a + b for a, b in zip(alpha, beta))


@lru_cache(maxsize=None)
def multi_indices(n: int, order: int) -> tuple[MultiIndex, ...]:
    """All multi-indices of length ``n`` and total order ``order``, lexicographically descending."""
    if n == 1:
        return ((order,),)
    out = []
    for first in range(order, -1, -1):
        for rest in multi_indices(n - 1, order - first):
            out.append((first,) + rest)
    return tuple(out)


def monomial(alpha: Sequence[int], coords: Sequence[np.ndarray]):
    out = 1.0
    for a, x in zip(alpha, coords):
        if a:
            out = out * x**a
    return out


# ---------------------------------------------------------------------------
# time maps

@dataclass(frozen=True)
class TimeMap:
    """Affine time map ``t -> scale * t + shift``.

    Only the forms that occur in the expansions are used: the identity,
    ``t/2`` and ``t - s/2``.  ``shift`` may be negative; evaluation checks that
    the mapped time stays positive.
    """

    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise KernelError(f"time-map scale must lie in (0, 1], got {self.scale}")

    def __call__(self, t: float) -> float:
        return self.scale * t + self.shift

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.shift == 0.0

    def describe(self) -> str:
        if self.is_identity:
            return "t"
        if self.shift == 0.0:
            return f"{self.scale:g}*t"
        if self.scale == 1.0:
            return f"t{self.shift:+g}"
        return f"{self.scale:g}*t{self.shift:+g}"


IDENTITY = TimeMap()
HALF = TimeMap(0.5, 0.0)


def delayed(s: float) -> TimeMap:
    """The map ``t -> t - s/2``."""
    return TimeMap(1.0, -0.5 * s)


# ---------------------------------------------------------------------------
# kernel terms

@dataclass(frozen=True)
class KernelTerm:
    coeff: float
    alpha: MultiIndex
    t_order: int = 0
    time_map: TimeMap = IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_multi_index(self.alpha))
        if not 1 <= len(self.alpha) <= 5:
            raise KernelError("dimension must be between 1 and 5")
        if self.t_order < 0:
            raise KernelError("t_order must be non-negative")

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def order(self) -> int:
        """Parabolic degree: two per time derivative, one per space derivative."""
        return 2 * self.t_order + mi_order(self.alpha)

    @property
    def parity(self) -> int:
        return mi_order(self.alpha) % 2

    def spatial_terms(self) -> list["KernelTerm"]:
        """Rewrite ``d_t^l grad^alpha`` as ``Laplacian^l grad^alpha`` (multinomial expansion)."""
        if self.t_order == 0:
            return [self]
        l = self.t_order
        out = []
        for k in multi_indices(self.n, l):
            c = math.factorial(l) / mi_factorial(k)
            out.append(KernelTerm(self.coeff * c, mi_add(self.alpha, tuple(2 * ki for ki in k)),
                                  0, self.time_map))
        return out


def gauss_derivative_1d(k: int, t: float, x) -> np.ndarray:
    """``d^k/dx^k`` of the 1-D heat kernel, via physicists' Hermite recurrence.

    With ``z = x / (2 sqrt t)``: ``d^k G1 = (-1 / (2 sqrt t))^k H_k(z) G1``.
    """
    x = np.asarray(x, dtype=float)
    rt = math.sqrt(t)
    z = x / (2.0 * rt)
    g = np.exp(-z * z) / math.sqrt(4.0 * math.pi * t)
    if k == 0:
        return g
    h_prev = np.ones_like(z)
    h = 2.0 * z
    for j in range(1, k):
        h_prev, h = h, 2.0 * z * h - 2.0 * j * h_prev
    return (-0.5 / rt) ** k * h * g


def _as_coords(points, n: int) -> list[np.ndarray]:
    if isinstance(points, np.ndarray) and points.ndim >= 1 and points.shape[-1] == n \
            and not isinstance(points, (list, tuple)):
        coords = [points[..., j] for j in range(n)]
    else:
        coords = [np.asarray(c, dtype=float) for c in points]
    if len(coords) != n:
        raise KernelError(f"points have dimension {len(coords)}, kernel has dimension {n}")
    return coords


def eval_terms(terms: Iterable[KernelTerm], t: float, points) -> np.ndarray:
    """Sum of kernel terms evaluated at ``points``.

    ``points`` is either a sequence of ``n`` coordinate arrays that broadcast
    against each other (e.g. ``np.ogrid`` style) or an array of shape
    ``(..., n)``.  One-dimensional factors are cached per axis, so separable
    grids cost one broadcasted product per multi-index.
    """
    terms = list(terms)
    if not terms:
        raise KernelError("empty term list")
    n = terms[0].n
    coords = _as_coords(points, n)
    cache: dict[tuple[int, int, float], np.ndarray] = {}
    total = None
    for term in terms:
        if term.n != n:
            raise KernelError("mixed dimensions in term list")
        T = term.time_map(t)
        if not T > 0:
            raise KernelError(f"non-positive mapped time {T} (t={t}, map={term.time_map.describe()})")
        for sp in term.spatial_terms():
            val = sp.coeff
            for j, k in enumerate(sp.alpha):
                key = (j, k, T)
                if key not in cache:
                    cache[key] = gauss_derivative_1d(k, T, coords[j])
                val = val * cache[key]
            total = val if total is None else total + val
    return total


def eval_kernel_term(term: KernelTerm, t: float, points) -> np.ndarray:
    return eval_terms([term], t, points)


def fourier_symbol(term: KernelTerm, t: float, xi) -> np.ndarray:
    """Symbol of ``term`` at frequency ``xi``, transform convention ``(2 pi)^(-n/2) int e^{-i x.xi}``.

    Equals ``c (-|xi|^2)^l (i xi)^alpha (2 pi)^(-n/2) exp(-T |xi|^2)``.
    """
    n = term.n
    k = _as_coords(xi, n)
    T = term.time_map(t)
    k2 = sum(kj * kj for kj in k)
    val = term.coeff * (2.0 * math.pi) ** (-n / 2) * np.exp(-T * k2) * (-k2) ** term.t_order
    for a, kj in zip(term.alpha, k):
        if a:
            val = val * (1j * kj) ** a
    return np.asarray(val, dtype=complex)


def fourier_symbol_terms(terms: Iterable[KernelTerm], t: float, xi) -> np.ndarray:
    out = None
    for term in terms:
        v = fourier_symbol(term, t, xi)
        out = v if out is None else out + v
    return out


# ---------------------------------------------------------------------------
# differential operators on G

class DiffOp(dict):
    """Constant-coefficient differential operator: ``{alpha: coeff}`` meaning ``sum coeff grad^alpha``."""

    @property
    def n(self) -> int:
        return len(next(iter(self)))

    def degree(self) -> int:
        degrees = {mi_order(a) for a, c in self.items() if c != 0.0}
        if len(degrees) > 1:
            raise KernelError(f"operator is not homogeneous: degrees {sorted(degrees)}")
        return degrees.pop() if degrees else 0

    def __mul__(self, other):
        if isinstance(other, DiffOp):
            out = DiffOp()
            for a, ca in self.items():
                for b, cb in other.items():
                    key = mi_add(a, b)
                    out[key] = out.get(key, 0.0) + ca * cb
            return out.pruned()
        return DiffOp({a: c * other for a, c in self.items()})

    __rmul__ = __mul__

    def __add__(self, other: "DiffOp") -> "DiffOp":
        out = DiffOp(self)
        for a, c in other.items():
            out[a] = out.get(a, 0.0) + c
        return out

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def pruned(self, tol: float = 0.0) -> "DiffOp":
        return DiffOp({a: c for a, c in self.items() if abs(c) > tol})

    def terms(self, coeff: float = 1.0, time_map: TimeMap = IDENTITY) -> list[KernelTerm]:
        return [KernelTerm(coeff * c, a, 0, time_map) for a, c in sorted(self.items(), reverse=True)
                if c != 0.0]


def identity_op(n: int) -> DiffOp:
    return DiffOp({(0,) * n: 1.0})


def partial_op(alpha: Sequence[int]) -> DiffOp:
    return DiffOp({check_multi_index(alpha): 1.0})


def directional(a: Sequence[float]) -> DiffOp:
    """``a . grad`` as a first-order operator."""
    n = len(a)
    return DiffOp({unit(n, j): float(a[j]) for j in range(n)})


def laplacian(n: int) -> DiffOp:
    return DiffOp({unit(n, j, 2): 1.0 for j in range(n)})


def dt_power(n: int, l: int) -> DiffOp:
    """``d_t^l`` acting on ``G``, i.e. ``Laplacian^l``."""
    op = identity_op(n)
    for _ in range(l):
        op = op * laplacian(n)
    return op


# ---------------------------------------------------------------------------
# closed-form Gaussian identities

def selfsquare_mass(n: int, s: float = 1.0) -> float:
    """``int G(s, y)^2 dy = (8 pi s)^(-n/2)``; for ``n = 3`` this is ``sqrt(2 pi)/(32 pi^2) s^(-3/2)``."""
    return (8.0 * math.pi * s) ** (-n / 2)


def convolve_selfsquare(t: float, s: float, a: Sequence[float]) -> list[KernelTerm]:
    """``(a . grad) G(t - s) * G(s)^2`` as kernel terms: ``(8 pi s)^(-n/2) (a . grad) G(t - s/2)``.

    ``G(s)^2 = (8 pi s)^(-n/2) G(s/2)`` and the heat semigroup merges the two
    Gaussians.
    """
    if not 0.0 < s < t:
        raise KernelError(f"need 0 < s < t, got s={s}, t={t}")
    return directional(a).terms(selfsquare_mass(len(a), s), delayed(s))


def mixed_convolution(t: float, s: float, a: Sequence[float], m1: Sequence[float]) -> list[KernelTerm]:
    """``(a . grad) G(t - s) * (M1 . grad)(G^2)(s) = (8 pi s)^(-n/2) (M1 . grad)(a . grad) G(t - s/2)``."""
    if not 0.0 < s < t:
        raise KernelError(f"need 0 < s < t, got s={s}, t={t}")
    if len(m1) != len(a):
        raise KernelError("M1 and a must have the same length")
    op = (directional(m1) * directional(a)).pruned()
    if not op:
        return []
    return op.terms(selfsquare_mass(len(a), s), delayed(s))


@lru_cache(maxsize=None)
def derivative_poly_1d(k: int, t: float) -> np.ndarray:
    """Power-basis coefficients of ``p_k`` with ``d^k G1(t, x) = p_k(x) G1(t, x)``.

    Uses ``p_{k+1} = p_k' - x p_k / (2 t)``.
    """
    p = np.array([1.0])
    for _ in range(k):
        p = P.polysub(P.polyder(p) if len(p) > 1 else np.array([0.0]),
                      P.polymulx(p) / (2.0 * t))
    return p


def gaussian_moment_1d(b: int, var: float) -> float:
    """``E[Y^b]`` for ``Y ~ N(0, var)``."""
    if b % 2:
        return 0.0
    dfact = 1
    for j in range(b - 1, 0, -2):
        dfact *= j
    return dfact * var ** (b // 2)


def product_moment(beta: Sequence[int], alpha1: Sequence[int], alpha2: Sequence[int], t: float) -> float:
    """Closed form of ``int y^beta grad^alpha1 G(t, y) grad^alpha2 G(t, y) dy``.

    Per axis the integrand is a polynomial times ``G1(t)^2 = (8 pi t)^(-1/2) G1(t/2)``,
    whose moments are those of a centred normal law with variance ``t``.
    """
    out = 1.0
    for b, a1, a2 in zip(beta, alpha1, alpha2):
        poly = P.polymul(derivative_poly_1d(a1, t), derivative_poly_1d(a2, t))
        poly = P.polymul(poly, np.eye(b + 1)[b])
        axis = sum(c * gaussian_moment_1d(k, t) for k, c in enumerate(poly))
        out *= axis / math.sqrt(8.0 * math.pi * t)
        if out == 0.0:
            return 0.0
    return out


def kernel_moment(beta: Sequence[int], alpha: Sequence[int], t: float) -> float:
    """Closed form of ``int y^beta grad^alpha G(t, y) dy`` (integration by parts)."""
    out = 1.0
    for b, a in zip(beta, alpha):
        if a > b:
            return 0.0
        # int y^b d^a G1 = (-1)^a b!/(b-a)! int y^(b-a) G1
        out *= (-1) ** a * math.factorial(b) / math.factorial(b - a) * gaussian_moment_1d(b - a, 2.0 * t)
    return out
