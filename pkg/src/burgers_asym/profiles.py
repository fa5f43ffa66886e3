"""Large-time asymptotic profiles as evaluable term lists.

Each :class:`ProfileTerm` applies a constant-coefficient operator to the heat
kernel in one of three ways:

* ``plain-kernel``:  ``coeff * t^p * [op G](sigma t, x)``
* ``time-integral``: ``coeff * int_0^t s^(-1/2) [op G](t - s/2, x) ds``
* ``log-kernel``:    ``coeff * [op G](t, x) * log t``

An :class:`ExpansionSpec` is an ordered list of such terms, built from a
:class:`~burgers_asym.moments.MomentTable` and the direction ``a``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import (DiffOp, TimeMap, delayed, directional, dt_power, eval_terms, identity_op,
                     laplacian, mi_factorial, multi_indices, partial_op, unit)
from .moments import MomentError, MomentTable, parity_vanishes
from .quadrature import QuadratureError, SIX_CLOSED_FORMS

KINDS = ("plain-kernel", "time-integral", "log-kernel")
SELF_SQUARE_3D = math.sqrt(2.0 * math.pi) / (32.0 * math.pi**2)
TIME_INTEGRAL_TOL = 1e-10


@dataclass(frozen=True)
class ProfileTerm:
    kind: str
    order: int
    op: DiffOp
    coeff: float = 1.0
    time_scale: float = 1.0
    t_power: float = 0.0
    label: str = ""
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind != "plain-kernel" and (self.time_scale != 1.0 or self.t_power != 0.0):
            raise ValueError("time_scale and t_power apply to plain-kernel terms only")

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def scaling_degree(self) -> float:
        """``m`` with ``lambda^(n+m) V(lambda^2 t, lambda x) = V(t, x)`` (log factor excluded)."""
        d = self.op.degree()
        if self.kind == "plain-kernel":
            return d - 2.0 * self.t_power
        if self.kind == "time-integral":
            return d - 1.0
        return float(d)

    @property
    def parity(self) -> int:
        """0 if even under ``x -> -x``, 1 if odd."""
        return self.op.degree() % 2

    def is_zero(self) -> bool:
        return self.coeff == 0.0 or not self.op.pruned()

    def evaluate(self, t: float, coords, include_log: bool = True) -> np.ndarray:
        if self.is_zero():
            return np.zeros(np.broadcast_shapes(*[np.shape(c) for c in coords]))
        if self.kind == "plain-kernel":
            c = self.coeff * t**self.t_power
            return eval_terms(self.op.terms(c, TimeMap(self.time_scale)), t, coords)
        if self.kind == "log-kernel":
            val = eval_terms(self.op.terms(self.coeff), t, coords)
            return val * math.log(t) if include_log else val
        return self.coeff * time_integral(self.op, t, coords)

    def describe(self) -> dict:
        tm = {"plain-kernel": TimeMap(self.time_scale).describe(), "time-integral": "t-s/2",
              "log-kernel": "t"}[self.kind]
        return {"kind": self.kind, "label": self.label, "order": self.order, "l": 0,
                "alpha": [[list(a), c] for a, c in sorted(self.op.items(), reverse=True)],
                "coefficient": self.coeff, "t_power": self.t_power, "time_map": tm,
                "provenance": self.provenance}


def time_integral(op: DiffOp, t: float, coords, tol: float | None = None,
                  max_nodes: int = 1024) -> np.ndarray:
    """``int_0^t s^(-1/2) [op G](t - s/2) ds`` via ``s = sigma^2`` and Gauss-Legendre doubling.

    Converged when successive levels differ by less than ``tol`` times the
    maximum magnitude of the result.
    """
    tol = TIME_INTEGRAL_TOL if tol is None else tol
    terms = op.terms()
    r = math.sqrt(t)

    def level(m):
        x, w = np.polynomial.legendre.leggauss(m)
        sig = 0.5 * r * (x + 1.0)
        acc = 0.0
        for sk, wk in zip(sig, w):
            # s^(-1/2) ds = 2 d sigma; the interval map contributes r/2
            acc = acc + (wk * r) * eval_terms([_shift(term, sk * sk) for term in terms], t, coords)
        return acc

    m = 8
    prev = level(m)
    while 2 * m <= max_nodes:
        m *= 2
        cur = level(m)
        scale = float(np.max(np.abs(cur))) if np.size(cur) else 0.0
        if float(np.max(np.abs(cur - prev))) <= tol * max(scale, 1e-300):
            return cur
        prev = cur
    raise QuadratureError(f"time integral at t = {t} did not reach tolerance {tol}")


def _shift(term, s):
    return type(term)(term.coeff, term.alpha, term.t_order, delayed(s))


@dataclass
class ExpansionSpec:
    n: int
    a: tuple
    terms: list = field(default_factory=list)
    valid_orders: tuple = (0, 0)
    meta: dict = field(default_factory=dict)

    def select(self, cutoff: int | None = None, include_log: bool = True, labels=None):
        out = []
        for term in self.terms:
            if labels is not None and term.label not in labels:
                continue
            if term.kind == "log-kernel":
                if include_log:
                    out.append(term)
            elif cutoff is None or term.order <= cutoff:
                out.append(term)
        return out

    def evaluate(self, t: float, coords, cutoff: int | None = None, include_log: bool = True,
                 labels=None) -> np.ndarray:
        shape = np.broadcast_shapes(*[np.shape(c) for c in coords])
        total = np.zeros(shape)
        for term in self.select(cutoff, include_log, labels):
            total = total + term.evaluate(t, coords, include_log)
        return total

    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def term(self, label: str) -> ProfileTerm:
        for t in self.terms:
            if t.label == label:
                return t
        raise KeyError(label)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "a": list(self.a), "valid_orders": list(self.valid_orders),
                           "meta": self.meta, "terms": [t.describe() for t in self.terms]}, indent=2)


def eval_expansion(spec: ExpansionSpec, t: float, grid, include_log: bool = True,
                   cutoff: int | None = None) -> np.ndarray:
    """Evaluate on a Field's grid (or explicit coordinates); broadcast to the full grid."""
    coords = grid.coords() if hasattr(grid, "coords") else grid
    vals = spec.evaluate(t, coords, cutoff, include_log)
    if hasattr(grid, "coords"):
        vals = np.broadcast_to(vals, (grid.N,) * grid.n)
    return vals


# ---------------------------------------------------------------------------
# closed-form constants assembled from their ingredients

GENERIC_A3 = (0.3, -0.7, 1.1)


def _project(op: DiffOp, target: DiffOp, tol: float = 1e-12) -> float:
    keys = set(op) | set(target)
    x = np.array([op.get(k, 0.0) for k in keys])
    y = np.array([target.get(k, 0.0) for k in keys])
    kappa = float(x @ y / (y @ y))
    if np.linalg.norm(x - kappa * y) > tol * max(np.linalg.norm(x), 1e-300):
        raise ValueError("assembled operator is not a multiple of the target operator")
    return kappa


def k4_constant_from_integrals(ingredients: dict | None = None, a=GENERIC_A3) -> float:
    """Scalar ``kappa`` with ``K4 = kappa M0^3 Laplacian (a.grad)^2 G``.

    Assembled from the six Gaussian integrals (closed forms by default) through
    the ``j``, ``k != j`` and ``j^3`` sums with weights ``1``, ``1/2!``,
    ``1/3!``, for a generic ``a``; the result is then projected on
    ``Laplacian (a.grad)^2``, which fails unless the sums collapse onto it.
    """
    I = SIX_CLOSED_FORMS if ingredients is None else ingredients
    A1 = 2.0 * I["I_yj_dG"] + I["T_yj_lapdG"]
    A2 = 2.0 * I["I_yk2yj_dG"] + I["T_yk2yj_lapdG"]
    A3 = 2.0 * I["I_yj3_dG"] + I["T_yj3_lapdG"]
    c = math.sqrt(2.0 * math.pi) / (16.0 * math.pi**2)
    n = len(a)
    D = directional(a)
    op = DiffOp()
    for j in range(n):
        dj = partial_op(unit(n, j))
        op = op + (laplacian(n) * dj * D) * (-c * a[j] * A1)
        for k in range(n):
            if k != j:
                op = op + (partial_op(unit(n, k, 2)) * dj * D) * (c * a[j] * A2 / 2.0)
        op = op + (partial_op(unit(n, j, 3)) * D) * (c * a[j] * A3 / 6.0)
    return _project(op.pruned(), laplacian(n) * D * D)


def log_coefficient_4d(c2: float | None = None, c0: float | None = None, a=(0.3, -0.7, 1.1, 0.5)) -> float:
    """Scalar ``kappa`` with the 4-D log term ``kappa M0^2 Laplacian (a.grad) G log t``.

    ``c2 = int y_j^2 G(1)^2`` and ``c0 = int G(1)^2`` (closed forms by default).
    """
    c0 = 1.0 / (64.0 * math.pi**2) if c0 is None else c0
    c2 = 1.0 / (64.0 * math.pi**2) if c2 is None else c2
    n = 4
    D = directional(a)
    op = DiffOp()
    for j in range(n):
        op = op + partial_op(unit(n, j, 2)) * D * (c2 / 2.0)
    op = op - laplacian(n) * D * c0
    return _project(op.pruned(), laplacian(n) * D)


LOG_COEFF_2D = 1.0 / (8.0 * math.pi)


# ---------------------------------------------------------------------------
# expansion builders

def _init_term(n, m, moments: MomentTable, label) -> ProfileTerm:
    op = DiffOp({alpha: moments.alpha(alpha) / mi_factorial(alpha) for alpha in multi_indices(n, m)})
    return ProfileTerm("plain-kernel", m, op.pruned() or DiffOp({(0,) * n: 0.0}), 1.0,
                       label=label, provenance="initial moments")


def _nl_term(n, m, moments, a, level, label, with_l_factorial=True) -> ProfileTerm:
    D = directional(a)
    op = DiffOp()
    for l in range((m - 1) // 2 + 1):
        for beta in multi_indices(n, m - 1 - 2 * l):
            w = moments.require(l, beta, level) / mi_factorial(beta)
            if with_l_factorial:
                w /= math.factorial(l)
            op = op + dt_power(n, l) * partial_op(beta) * D * w
    op = op.pruned()
    prov = f"space-time moments (renormalization level {level})"
    return ProfileTerm("plain-kernel", m, op or DiffOp({(0,) * n: 0.0}), 1.0, label=label, provenance=prov)


def generic_profile(n: int, m: int, moments: MomentTable, a) -> list[ProfileTerm]:
    """``U_m`` in the generic form: initial-moment term plus unrenormalized nonlinear term.

    ``U_0 = M0 G``; for ``m >= 1`` the nonlinear part uses the level -1
    moments with ``2l + |beta| = m - 1``.  Every term is a derivative of order
    ``m`` of ``G`` (counting ``d_t`` twice), so ``U_m`` has the parity of ``m``.
    """
    if m == 0:
        return [ProfileTerm("plain-kernel", 0, identity_op(n), moments.M0, label="U0", provenance="mass M0")]
    return [_init_term(n, m, moments, f"U{m}.init"), _nl_term(n, m, moments, a, -1, f"U{m}.nl")]


def _u1_term(n, moments, a) -> ProfileTerm:
    if moments.M1 is None:
        entry = moments.st(0, (0,) * n, -1)
        raise MomentError(f"M1 unavailable: int int u^2 not converged ({entry.flag})")
    op = DiffOp({unit(n, j): float(moments.M1[j]) for j in range(n)})
    return ProfileTerm("plain-kernel", 1, op.pruned() or DiffOp({(0,) * n: 0.0}), 1.0, label="U1",
                       provenance="M0 and space-time moment int int u^2")


def build_expansion(n: int, moments: MomentTable, a, max_order: int | None = None) -> ExpansionSpec:
    """Asymptotic profile terms up to ``max_order`` plus the logarithmic term where one exists.

    * ``n = 2``: ``U0`` and ``(M0^2 / 8 pi) (a.grad) G log t``.
    * ``n = 3``: ``U0 .. U3`` with the odd-parity pairs in ``U2`` and ``U3``, and
      ``K4 log t`` when ``max_order = 3``.
    * ``n = 4``: ``U0 .. U2`` and ``-(M0^2 / 128 pi^2) Laplacian (a.grad) G log t``.
    * other ``n``: the generic ``U_m``, ``m <= n - 2``.
    """
    a = tuple(float(x) for x in a)
    if len(a) != n:
        raise ValueError("direction has wrong length")
    limit = 3 if n == 3 else n - 2
    if n == 2:
        limit = 0
    if max_order is None:
        max_order = limit
    if not 0 <= max_order <= limit:
        raise ValueError(f"unsupported (n, max_order) = ({n}, {max_order}); at most {limit}")
    M0 = moments.M0
    D = directional(a)
    terms = [ProfileTerm("plain-kernel", 0, identity_op(n), M0, label="U0", provenance="mass M0")]
    if max_order >= 1:
        terms.append(_u1_term(n, moments, a))
    if n == 3:
        c3 = SELF_SQUARE_3D
        if max_order >= 2:
            terms += [
                _init_term(n, 2, moments, "U2.init"),
                _nl_term(n, 2, moments, a, -1, "U2.nl"),
                ProfileTerm("plain-kernel", 2, D, -2.0 * c3 * M0**2, 0.5, -0.5, "U2.odd.t", "closed form"),
                ProfileTerm("time-integral", 2, laplacian(n) * D, -c3 * M0**2, label="U2.odd.int",
                            provenance="closed form"),
            ]
        if max_order >= 3:
            M1op = directional(moments.M1)
            terms += [
                _init_term(n, 3, moments, "U3.init"),
                _nl_term(n, 3, moments, a, 0, "U3.renorm", with_l_factorial=False),
                ProfileTerm("plain-kernel", 3, (M1op * D).pruned() or DiffOp({(0,) * n: 0.0}),
                            -2.0 * c3 * M0, 0.5, -0.5, "U3.odd.t", "closed form and M1"),
                ProfileTerm("time-integral", 3, (laplacian(n) * M1op * D).pruned() or DiffOp({(0,) * n: 0.0}),
                            -c3 * M0, label="U3.odd.int", provenance="closed form and M1"),
                ProfileTerm("log-kernel", 4, laplacian(n) * D * D, k4_constant_from_integrals() * M0**3,
                            label="K4.log", provenance="closed form"),
            ]
    else:
        for m in range(2, max_order + 1):
            terms += [_init_term(n, m, moments, f"U{m}.init"), _nl_term(n, m, moments, a, -1, f"U{m}.nl")]
        if n == 2:
            terms.append(ProfileTerm("log-kernel", 1, D, LOG_COEFF_2D * M0**2, label="K1.log",
                                     provenance="closed form"))
        elif n == 4 and max_order == 2:
            terms.append(ProfileTerm("log-kernel", 3, laplacian(n) * D, log_coefficient_4d() * M0**2,
                                     label="K3.log", provenance="closed form"))
    return ExpansionSpec(n, a, terms, (0, max_order), {"M0": M0, "M1": None if moments.M1 is None
                                                       else [float(x) for x in moments.M1]})


# ---------------------------------------------------------------------------
# structure for odd dimensions

@dataclass
class SlotInfo:
    l: int
    beta: tuple
    pairs: dict          # (m1, m2) -> True if parity-pruned

    @property
    def pruned(self) -> bool:
        return all(self.pairs.values()) if self.pairs else False


@dataclass
class JDescriptor:
    m: int
    pairs: tuple         # (m1, m2) with m1 + m2 = m - n + 1
    taylor_order: int    # Taylor subtraction up to 2l + |beta| <= m - 1
    scaling_degree: int  # n + m
    parity: int          # parity of the source U_m1 U_m2 convolved with (a.grad) G

    def label(self, n: int) -> list[str]:
        if n == 3:
            return [f"U{self.m}.odd.t", f"U{self.m}.odd.int"]
        return [f"U{self.m}.J"]


@dataclass
class OddStructure:
    n: int
    initial_slots: dict = field(default_factory=dict)     # m -> list of alpha
    nonlinear_slots: dict = field(default_factory=dict)   # k = 2l + |beta| -> list of SlotInfo
    j_terms: list = field(default_factory=list)
    log_order: int = 0

    def nonpruned_count(self, k: int) -> int:
        return sum(1 for s in self.nonlinear_slots.get(k, []) if not s.pruned)

    def slot_level(self, k: int) -> int:
        """Renormalization level of the moments feeding ``U_{k+1}`` (-1: none)."""
        return k - self.n + 2 if k >= self.n - 2 else -1

    def term_labels(self) -> list[str]:
        out = ["U0", "U1"]
        for m in range(2, 2 * self.n - 2):
            out.append(f"U{m}.init")
            slots = self.nonlinear_slots[m - 1]
            renorm = (m - 1) >= self.n - 2 and not all(s.pruned for s in slots)
            out.append(f"U{m}.renorm" if renorm else f"U{m}.nl")
            for j in self.j_terms:
                if j.m == m:
                    out += j.label(self.n)
        out.append(f"K{self.log_order}.log")
        return out


def build_odd_n_structure(n: int, moments: MomentTable | None = None, a=None) -> OddStructure:
    """Term skeleton ``U_0 .. U_{2n-3}`` for odd ``n``, with parity-pruned subtraction slots.

    The nonlinear coefficient at order ``m = k + 1`` uses moments with
    ``2l + |beta| = k``; for ``k >= n - 2`` they are renormalized by every
    ``U_m1 U_m2`` with ``m1 + m2 <= k - n + 2``, and a pair is pruned when
    ``|beta| + m1 + m2`` is odd.  Coefficients stay symbolic; ``moments`` and
    ``a`` are accepted for interface symmetry with :func:`build_expansion`.
    """
    if n % 2 == 0 or n < 3:
        raise ValueError(f"odd n >= 3 required, got {n}")
    st = OddStructure(n, log_order=2 * n - 2)
    for m in range(2 * n - 2):
        st.initial_slots[m] = list(multi_indices(n, m))
    for k in range(2 * n - 3):
        slots = []
        top = k - n + 2
        for l in range(k // 2 + 1):
            for beta in multi_indices(n, k - 2 * l):
                pairs = {}
                if top >= 0:
                    for m1, m2 in itertools.product(range(top + 1), repeat=2):
                        if m1 + m2 <= top:
                            pairs[(m1, m2)] = parity_vanishes(beta, m1, m2)
                slots.append(SlotInfo(l, beta, pairs))
        st.nonlinear_slots[k] = slots
    for m in range(n - 1, 2 * n - 2):
        p = m - n + 1
        pairs = tuple((m1, p - m1) for m1 in range(p + 1))
        st.j_terms.append(JDescriptor(m, pairs, m - 1, n + m, (p + 1) % 2))
    return st
