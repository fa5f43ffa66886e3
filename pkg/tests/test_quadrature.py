import math

import numpy as np
import pytest

from burgers_asym.field import grid_coords
from burgers_asym.kernel import KernelTerm
from burgers_asym.profiles import k4_constant_from_integrals
from burgers_asym.quadrature import (K4_CLOSED_FORM, SIX_CLOSED_FORMS, Factor, IntegralSpec, QuadratureError,
                                     closed_form_table, convolution_identity_error, ibp_identity_sides, integrate,
                                     integrate_1d_inv_sqrt, quadrature_table, six_integral_specs,
                                     verify_constant_table)

G3 = (KernelTerm(1.0, (0, 0, 0)),)


@pytest.fixture(scope="module")
def quad():
    return quadrature_table()


def test_g_squared_mass_3d():
    spec = IntegralSpec((Factor(G3, 1.0), Factor(G3, 1.0)), (0, 0, 0), tol=1e-12)
    v = integrate(spec).value
    assert v == pytest.approx(math.sqrt(2 * math.pi) / (32 * math.pi**2), rel=1e-12)
    assert abs(v - 0.0079367) < 1e-7


def test_tail_integral_3d():
    spec = IntegralSpec((Factor(G3, lambda s: s), Factor(G3, lambda s: s)), (0, 0, 0), "tail", 1.0, 1e-12)
    v = integrate(spec).value
    assert v == pytest.approx(math.sqrt(2 * math.pi) / (16 * math.pi**2), rel=1e-10)
    assert abs(v - 0.0158734) < 1e-7


def test_oned_singular_integral():
    v = integrate_1d_inv_sqrt(lambda s: (2.0 - 0.5 * s) ** -3.5, 1.0).value
    assert v == pytest.approx(14 * math.sqrt(6) / (3**3 * 5), rel=1e-12)
    assert abs(v - 0.2540212) < 1e-6


@pytest.mark.parametrize("name", sorted(SIX_CLOSED_FORMS))
def test_six_integrals_match_closed_forms(name, quad):
    assert quad[name] == pytest.approx(SIX_CLOSED_FORMS[name], rel=1e-8)


def test_plancherel_integral_value():
    assert SIX_CLOSED_FORMS["T_yj_lapdG"] == pytest.approx(0.0142559, abs=1e-7)


def test_six_integrals_independent_of_axis_pair():
    for j, k in ((2, 0), (1, 2)):
        for name, spec in six_integral_specs(j, k).items():
            if name.startswith("I_"):
                assert integrate(spec).value == pytest.approx(SIX_CLOSED_FORMS[name], rel=1e-9)


def test_k4_from_closed_ingredients():
    assert k4_constant_from_integrals() == pytest.approx(K4_CLOSED_FORM, rel=1e-12)
    assert K4_CLOSED_FORM == pytest.approx(-6.465e-6, rel=1e-3)


def test_k4_from_quadrature_ingredients(quad):
    k4 = k4_constant_from_integrals({k: quad[k] for k in SIX_CLOSED_FORMS})
    assert k4 == pytest.approx(K4_CLOSED_FORM, rel=1e-8)


def test_k4_independent_of_direction():
    for a in ((1.0, 0.0, 0.0), (0.2, 0.5, -0.9), (1.0, 1.0, 1.0)):
        assert k4_constant_from_integrals(a=a) == pytest.approx(K4_CLOSED_FORM, rel=1e-12)


def test_constant_table_passes():
    rep = verify_constant_table(1e-8)
    assert rep.passed
    assert set(e.name for e in rep.entries) == set(closed_form_table())
    assert len(rep.entries) >= 12


def test_over_tight_tolerance_reports_failures_cleanly():
    rep = verify_constant_table(1e-17)
    assert not rep.passed
    assert all(math.isfinite(e.rel_err) for e in rep.entries)
    assert '"pass": false' in rep.to_json()


def test_tolerance_below_floor_rejected():
    with pytest.raises(ValueError):
        integrate(IntegralSpec((Factor(G3, 1.0),), (0, 0, 0), tol=1e-15))


def test_unreachable_tolerance_raises(monkeypatch):
    import burgers_asym.quadrature as q
    monkeypatch.setattr(q, "MAX_NODES", 16)
    with pytest.raises(QuadratureError):
        integrate(six_integral_specs()["T_yj3_lapdG"], start=8)


@pytest.mark.parametrize("t,s", [(2.0, 1.0), (4.0, 1.0), (4.0, 3.0)])
def test_convolution_identity_grid(t, s):
    assert convolution_identity_error(t, s, (1.0, -0.5, 0.3)) <= 1e-6


def test_integration_by_parts_identity_grid():
    lhs, rhs = np.broadcast_arrays(*ibp_identity_sides(1.0, (1.0, -0.5, 0.3), grid_coords(3, 64, 8.0)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * np.max(np.abs(lhs))
