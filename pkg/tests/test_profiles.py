import itertools
import json
import math

import numpy as np
import pytest

from burgers_asym.kernel import IDENTITY, delayed, directional, eval_terms, laplacian, multi_indices
from burgers_asym.moments import MomentEntry, MomentTable, MomentError, parity_vanishes
from burgers_asym.profiles import (LOG_COEFF_2D, build_expansion, build_odd_n_structure,
                                   generic_profile, log_coefficient_4d, time_integral)
from burgers_asym.quadrature import K4_CLOSED_FORM, gauss_product_moment

THREE_D_LABELS = ["U0", "U1", "U2.init", "U2.nl", "U2.odd.t", "U2.odd.int",
                     "U3.init", "U3.renorm", "U3.odd.t", "U3.odd.int", "K4.log"]


def synthetic_table(n, seed=0, M0=1.3, max_alpha=3, st_order=3):
    rng = np.random.default_rng(seed)
    alpha = {a: (M0 if sum(a) == 0 else float(rng.normal()))
             for k in range(max_alpha + 1) for a in multi_indices(n, k)}
    tab = MomentTable(n, M0, alpha, M1=rng.normal(size=n))
    for k in range(st_order):
        for l in range(k // 2 + 1):
            for b in multi_indices(n, k - 2 * l):
                for level in (-1, 0):
                    tab.st_moments[(l, b, level)] = MomentEntry(float(rng.normal()), True, 0.0)
    return tab


def kernel_terms(profile):
    out = []
    for p in profile:
        assert p.kind == "plain-kernel" and p.time_scale == 1.0 and p.t_power == 0.0
        out += p.op.terms(p.coeff, IDENTITY)
    return out


# -- parity ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_parity_vanishing_of_profile_products(n):
    tab = synthetic_table(n, seed=n)
    a = np.linspace(0.5, -0.7, n)
    U = {m: kernel_terms(generic_profile(n, m, tab, a)) for m in range(3)}
    checked = nonzero = 0
    for m1, m2 in itertools.product(range(3), repeat=2):
        for k in range(4):
            for beta in multi_indices(n, k):
                v = gauss_product_moment([U[m1], U[m2]], beta, 1.0, nodes=10)
                scale = gauss_product_moment([U[m1], U[m2]], beta, 1.0, nodes=10, absolute=True)
                if parity_vanishes(beta, m1, m2):
                    assert abs(v) <= 1e-10 * scale, (beta, m1, m2, v, scale)
                    checked += 1
                elif abs(v) > 1e-6 * scale:
                    nonzero += 1
    assert checked > 0 and nonzero > 0


def test_generic_profiles_have_parity_of_order():
    tab = synthetic_table(4)
    for m in range(3):
        for term in generic_profile(4, m, tab, (1, 0, 0, 0)):
            assert term.parity == m % 2
            assert term.scaling_degree == m


def test_three_d_second_order_mixes_parities():
    spec = build_expansion(3, synthetic_table(3), (1.0, 0.2, 0.0), 2)
    assert spec.term("U2.init").parity == 0
    assert spec.term("U2.odd.t").parity == 1
    assert spec.term("U2.odd.int").parity == 1


# -- odd-dimension structure ----------------------------------------------------

def brute_force_slots(n, k):
    slots = []
    for l in range(k // 2 + 1):
        for beta in itertools.product(range(k + 1), repeat=n):
            if 2 * l + sum(beta) != k:
                continue
            top = k - n + 2
            pairs = {(m1, m2): (sum(beta) + m1 + m2) % 2 == 1
                     for m1 in range(top + 1) for m2 in range(top + 1) if top >= 0 and m1 + m2 <= top}
            slots.append((l, beta, pairs))
    return slots


def test_structure_n5_matches_brute_force():
    st = build_odd_n_structure(5)
    for k in range(2 * 5 - 3):
        bf = brute_force_slots(5, k)
        got = {(s.l, s.beta): s.pairs for s in st.nonlinear_slots[k]}
        assert got == {(l, b): p for l, b, p in bf}
        nonpruned = sum(1 for _, _, p in bf if not (p and all(p.values())))
        assert st.nonpruned_count(k) == nonpruned


def test_structure_n5_counts():
    st = build_odd_n_structure(5)
    expected = [(0, 1, 1), (1, 5, 5), (2, 16, 16), (3, 40, 0), (4, 86, 86), (5, 166, 166), (6, 296, 296)]
    for k, total, kept in expected:
        assert len(st.nonlinear_slots[k]) == total
        assert st.nonpruned_count(k) == kept


def test_structure_n5_source_terms():
    st = build_odd_n_structure(5)
    assert [j.m for j in st.j_terms] == [4, 5, 6, 7]
    for j in st.j_terms:
        assert j.scaling_degree == 5 + j.m
        assert all(m1 + m2 == j.m - 4 for m1, m2 in j.pairs)
    assert st.log_order == 8


def test_structure_n3_labels_match_expansion():
    st = build_odd_n_structure(3)
    assert st.term_labels() == THREE_D_LABELS
    spec = build_expansion(3, synthetic_table(3), (1.0, 0.0, 0.0), 3)
    assert spec.labels() == THREE_D_LABELS


def test_structure_rejects_even_n():
    with pytest.raises(ValueError):
        build_odd_n_structure(4)


# -- scaling --------------------------------------------------------------------

def all_emitted_terms():
    out = []
    for n, order in ((2, 0), (3, 3), (4, 2)):
        a = np.linspace(1.0, -0.4, n)
        spec = build_expansion(n, synthetic_table(n, seed=10 + n), a, order)
        out += [(n, t) for t in spec.terms]
    tab5 = synthetic_table(5, seed=15)
    for m in range(4):
        out += [(5, t) for t in generic_profile(5, m, tab5, (1, 0, 0, 0, 0.5))]
    return out


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_scaling_of_every_emitted_term(lam):
    rng = np.random.default_rng(4)
    for n, term in all_emitted_terms():
        if term.is_zero():
            continue
        pts = rng.normal(size=(12, n)) * 1.5
        coords = [pts[:, j] for j in range(n)]
        scaled = [lam * c for c in coords]
        t = 1.7
        v = term.evaluate(t, coords, include_log=False)
        w = lam ** (n + term.scaling_degree) * term.evaluate(lam**2 * t, scaled, include_log=False)
        assert np.max(np.abs(v - w)) <= 1e-10 * np.max(np.abs(v)), term.label


# -- 3-D, 2-D, 4-D expansions ---------------------------------------------------

def test_k4_coefficient_in_expansion():
    tab = synthetic_table(3)
    spec = build_expansion(3, tab, (0.3, -1.0, 0.5), 3)
    k4 = spec.term("K4.log")
    assert k4.coeff == pytest.approx(K4_CLOSED_FORM * tab.M0**3, rel=1e-12)
    assert K4_CLOSED_FORM == pytest.approx(-6.465e-6, rel=1e-3)
    D = directional((0.3, -1.0, 0.5))
    assert k4.op == laplacian(3) * D * D


def test_two_d_log_term():
    tab = synthetic_table(2)
    spec = build_expansion(2, tab, (1.0, 0.0))
    assert spec.labels() == ["U0", "K1.log"]
    assert spec.term("K1.log").coeff == pytest.approx(tab.M0**2 / (8 * math.pi), rel=1e-15)
    assert LOG_COEFF_2D == pytest.approx(0.0397887, abs=1e-7)


def test_four_d_log_coefficient():
    assert log_coefficient_4d() == pytest.approx(-1 / (128 * math.pi**2), rel=1e-14)
    spec = build_expansion(4, synthetic_table(4), (1.0, 0.0, 0.0, 0.0), 2)
    assert spec.labels()[-1] == "K3.log"


def test_unsupported_orders_rejected():
    with pytest.raises(ValueError):
        build_expansion(2, synthetic_table(2), (1, 0), 1)
    with pytest.raises(ValueError):
        build_expansion(3, synthetic_table(3), (1, 0, 0), 4)


def test_unconverged_moment_blocks_expansion():
    tab = synthetic_table(3)
    tab.st_moments[(0, (1, 0, 0), -1)] = MomentEntry(1.0, False, math.inf, flag="slow")
    with pytest.raises(MomentError):
        build_expansion(3, tab, (1, 0, 0), 2)


def test_expansion_select_and_json():
    spec = build_expansion(3, synthetic_table(3), (1.0, 0.0, 0.0), 3)
    # the log term is switched by its own flag, not by the order cutoff
    assert [t.label for t in spec.select(cutoff=1, include_log=False)] == ["U0", "U1"]
    assert [t.label for t in spec.select(cutoff=1)] == ["U0", "U1", "K4.log"]
    d = json.loads(spec.to_json())
    assert [t["label"] for t in d["terms"]] == THREE_D_LABELS


def test_time_integral_against_scipy():
    from scipy import integrate
    op = laplacian(3) * directional((1.0, 0.0, 0.0))
    x = [np.array([0.7]), np.array([-0.3]), np.array([0.2])]
    terms = op.terms()

    def f(s):
        shifted = [type(k)(k.coeff, k.alpha, 0, delayed(s)) for k in terms]
        return float(eval_terms(shifted, 1.0, x)[0]) / math.sqrt(s)

    ref, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    assert float(time_integral(op, 1.0, x)[0]) == pytest.approx(ref, rel=1e-9)
