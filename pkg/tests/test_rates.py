import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from burgers_asym.rates import (CLAIMS, Claim, DecayReport, FitError, RateFit, decay_report, fit_rates, gamma_q,
                                judge, lq_norm, remainder, verdict)
from burgers_asym.solver import SolverConfig, gaussian_data, solve

T = np.geomspace(8.0, 1024.0, 15)


# -- fitting ----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(-3.0, 3.0))
def test_plain_power_law_recovered(p, logc):
    f = fit_rates(T, math.exp(logc) * T**-p)
    assert f.p_plain == pytest.approx(p, abs=1e-3)
    assert f.residual_plain < 1e-10
    assert f.preferred == "plain"


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(-3.0, 3.0))
def test_log_corrected_power_law_recovered(p, logc):
    f = fit_rates(T, math.exp(logc) * T**-p * np.log(T))
    assert f.p_log == pytest.approx(p, abs=1e-3)
    assert f.preferred == "log"
    # ignoring the log factor biases the plain exponent low
    assert f.p_plain < p - 0.1


def test_fit_window_and_errors():
    f = fit_rates(T, T**-1.5, t_min=30.0)
    assert f.npts == int(np.sum(T >= 30.0))
    with pytest.raises(FitError):
        fit_rates(T[:4], T[:4] ** -1.0)
    with pytest.raises(FitError):
        fit_rates(T, -(T**-1.0))
    with pytest.raises(FitError):
        fit_rates(np.linspace(0.5, 1.0, 6), np.ones(6), t_min=0.0)


# -- norms --------------------------------------------------------------------------

def test_norm_definitions_are_cell_weighted_sums():
    rng = np.random.default_rng(0)
    r = rng.normal(size=(32, 32))
    dv = 0.37**2
    assert lq_norm(r, dv, 1.0) == pytest.approx(np.abs(r).sum() * dv, rel=1e-14)
    assert lq_norm(r, dv, 2.0) ** 2 == pytest.approx((r * r).sum() * dv, rel=1e-14)
    assert lq_norm(r, dv, math.inf) == np.abs(r).max()
    assert lq_norm(r, dv, 3.0) == pytest.approx(((np.abs(r) ** 3).sum() * dv) ** (1 / 3), rel=1e-14)


def test_gamma_q():
    assert gamma_q(2, 1.0) == 0.0
    assert gamma_q(2, math.inf) == 1.0
    assert gamma_q(3, 2.0) == 0.75


# -- claims -------------------------------------------------------------------------

def test_claim_predictions():
    c = CLAIMS["thm-2d"]
    assert c.predicted(math.inf) == 1.5
    assert c.predicted(1.0) == 0.5
    assert CLAIMS["ez-exp-k-3d"].predicted(2.0) == 2.25


def test_judge_uses_preferred_model():
    c = Claim("x", 2, 0, True, 0.5, 0.15)
    plain = RateFit(1.45, 1.9, 1e-3, 1e-2, 0, 0, 9)
    assert judge(c, math.inf, plain).passed
    logp = RateFit(1.0, 1.52, 1e-2, 1e-3, 0, 0, 9)
    v = judge(c, math.inf, logp)
    assert v.passed and v.model == "log" and v.fitted == 1.52
    assert not judge(c, math.inf, RateFit(1.2, 1.2, 1e-3, 1e-2, 0, 0, 9)).passed


def test_at_least_claims():
    c = Claim("y", 3, 2, False, 1.5, 0.2, at_least=True)
    assert judge(c, 2.0, RateFit(3.0, 3.0, 1e-3, 1e-2, 0, 0, 9)).passed
    assert not judge(c, 2.0, RateFit(2.0, 2.0, 1e-3, 1e-2, 0, 0, 9)).passed


def test_verdict_rejudges_report():
    rep = DecayReport(2, fits={"2": RateFit(1.0, 1.3, 1e-3, 1e-2, 0, 0, 9),
                               "inf": RateFit(1.5, 1.9, 1e-3, 1e-2, 0, 0, 9)})
    assert verdict(rep, "thm-2d")
    assert len(rep.verdicts) == 2
    assert not verdict(rep, Claim("thm-2d", 2, 0, True, 0.8, 0.05))
    assert len(rep.verdicts) == 2
    assert '"pass": false' in rep.to_json()


# -- remainders on a run ---------------------------------------------------------------

class _HeatSpec:
    """Stand-in expansion: U0 = M0 G exactly, for linear runs."""

    n = 2
    valid_orders = (0, 0)

    def __init__(self, M0):
        self.M0 = M0

    def evaluate(self, t, coords, cutoff=None, include_log=True):
        from burgers_asym.kernel import KernelTerm, eval_terms
        return self.M0 * eval_terms([KernelTerm(1.0, (0, 0))], t, coords)


@pytest.fixture(scope="module")
def shifted_heat_run():
    # a = 0 with data M0 G(1): u = M0 G(1 + t), so u - M0 G(t) decays one order faster
    times = tuple(float(t) for t in (2, 4, 8, 16, 32, 64, 128, 256))
    cfg = SolverConfig(n=2, N=128, L=16.0, a=(0.0, 0.0), t_end=256.0, checkpoint_times=times)
    return solve(cfg, gaussian_data(2, 128, 16.0, 1.0, 1.0))


def test_remainder_without_subtraction_is_solution(shifted_heat_run):
    r = remainder(shifted_heat_run, _HeatSpec(1.0), 8.0, -1, False)
    np.testing.assert_array_equal(r.values, shifted_heat_run.checkpoint(8.0).values)


def test_q_family_coherence_on_heat_remainder(shifted_heat_run):
    rep = decay_report(shifted_heat_run, _HeatSpec(1.0), 0, False, t_min=8.0)
    exps = {q: rep.fits[q].p_preferred for q in ("1", "2", "inf")}
    # G(1 + t) - G(t) = O(t^{-gamma_q - 1})
    for qn, q in (("1", 1.0), ("2", 2.0), ("inf", math.inf)):
        assert exps[qn] == pytest.approx(gamma_q(2, q) + 1.0, abs=0.2)
    assert exps["inf"] - exps["1"] == pytest.approx(gamma_q(2, math.inf) - gamma_q(2, 1.0), abs=0.2)


def test_remainder_rejects_dimension_mismatch(shifted_heat_run):
    spec = _HeatSpec(1.0)
    spec.n = 3
    with pytest.raises(ValueError):
        remainder(shifted_heat_run, spec, 8.0, 0, False)


def test_plot_csv(tmp_path, shifted_heat_run):
    rep = decay_report(shifted_heat_run, _HeatSpec(1.0), 0, False, t_min=8.0)
    rep.write_plot_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "q,log_t,log_norm,fit_plain,fit_log"
    assert len(lines) == 1 + 3 * 6
