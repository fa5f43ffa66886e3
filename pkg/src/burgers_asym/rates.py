"""Remainders against asymptotic profiles, their L^q norms and decay-rate fits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .field import Field

QS = (1.0, 2.0, math.inf)


def gamma_q(n: int, q: float) -> float:
    """Heat-semigroup decay exponent ``(n/2)(1 - 1/q)``."""
    return 0.5 * n * (1.0 - (0.0 if math.isinf(q) else 1.0 / q))


def lq_norm(values: np.ndarray, cell_volume: float, q: float) -> float:
    """Rectangle-rule ``L^q`` norm; ``q = inf`` is the grid maximum."""
    a = np.abs(values)
    if math.isinf(q):
        return float(a.max())
    if q == 1.0:
        return float(a.sum() * cell_volume)
    if q == 2.0:
        return float(math.sqrt((a * a).sum() * cell_volume))
    return float(((a**q).sum() * cell_volume) ** (1.0 / q))


def q_name(q: float) -> str:
    return "inf" if math.isinf(q) else f"{q:g}"


def remainder(run, spec, t: float, order_cutoff: int, include_log: bool) -> Field:
    """``u(t) - sum_{m <= cutoff} U_m(t) - [K(t) log t]`` on the run's grid at checkpoint ``t``.

    ``order_cutoff = -1`` subtracts no ``U_m``.
    """
    u = run.checkpoint(t)
    if spec.n != u.n:
        raise ValueError(f"expansion has dimension {spec.n}, run has {u.n}")
    if order_cutoff > spec.valid_orders[1]:
        raise ValueError(f"expansion covers orders up to {spec.valid_orders[1]}, asked for {order_cutoff}")
    if order_cutoff < 0 and not include_log:
        return u.like(u.values.copy())
    prof = spec.evaluate(t, u.coords(), cutoff=order_cutoff, include_log=include_log)
    return u.like(u.values - prof)


# ---------------------------------------------------------------------------
# fitting

@dataclass
class RateFit:
    p_plain: float
    p_log: float
    residual_plain: float
    residual_log: float
    c_plain: float
    c_log: float
    npts: int

    @property
    def preferred(self) -> str:
        return "log" if self.residual_log < self.residual_plain else "plain"

    @property
    def p_preferred(self) -> float:
        return self.p_log if self.preferred == "log" else self.p_plain

    def as_dict(self) -> dict:
        return {"p_plain": self.p_plain, "p_log": self.p_log, "residual_plain": self.residual_plain,
                "residual_log": self.residual_log, "preferred": self.preferred, "npts": self.npts}


class FitError(ValueError):
    pass


def fit_rates(t, norms, t_min: float = 8.0, t_max: float = math.inf, min_points: int = 5) -> RateFit:
    """Least squares for ``log r = c - p log t`` and ``log r = c - p log t + log log t``.

    Residuals are root-mean-square deviations in ``log r``.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(norms, dtype=float)
    sel = (t >= t_min) & (t <= t_max)
    t, r = t[sel], r[sel]
    if len(t) < min_points:
        raise FitError(f"only {len(t)} samples in [{t_min}, {t_max}], need {min_points}")
    if np.any(r <= 0) or np.any(~np.isfinite(r)):
        raise FitError("norms must be positive and finite")
    if np.any(t <= 1.0):
        raise FitError("the log-corrected model needs t > 1")
    X = np.column_stack([np.ones_like(t), -np.log(t)])
    out = []
    for y in (np.log(r), np.log(r) - np.log(np.log(t))):
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        res = y - X @ coef
        out.append((float(coef[1]), float(coef[0]), float(math.sqrt(np.mean(res**2)))))
    (pp, cp, rp), (pl, cl, rl) = out
    return RateFit(pp, pl, rp, rl, cp, cl, len(t))


# ---------------------------------------------------------------------------
# claims and reports

@dataclass(frozen=True)
class Claim:
    name: str
    n: int
    cutoff: int
    include_log: bool
    offset: float          # predicted exponent = gamma_q + offset
    tolerance: float
    at_least: bool = False
    description: str = ""

    def predicted(self, q: float) -> float:
        return gamma_q(self.n, q) + self.offset


CLAIMS = {
    "thm-2d": Claim("thm-2d", 2, 0, True, 0.5, 0.15, description="u - U0 - log term, 2-D"),
    "ez-exp": Claim("ez-exp", 2, 0, False, 0.5, 0.15,
                    description="u - U0 without the log term, 2-D (log-corrected rate)"),
    "ez-exp-3d": Claim("ez-exp-3d", 3, 1, False, 1.0, 0.2, description="u - U0 - U1, 3-D"),
    "ez-exp-k-3d": Claim("ez-exp-k-3d", 3, 2, False, 1.5, 0.2, at_least=True,
                         description="u - U0 - U1 - U2, 3-D, rate up to a log factor"),
    "thm-4d": Claim("thm-4d", 4, 2, True, 1.5, 0.2, description="u - U0 - U1 - U2 - log term, 4-D"),
}


@dataclass
class Verdict:
    claim: str
    q: str
    predicted: float
    fitted: float
    model: str
    tolerance: float
    passed: bool
    at_least: bool = False

    def line(self) -> str:
        rel = ">=" if self.at_least else "~"
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.claim:<12} q={self.q:<3} fitted={self.fitted:.3f} "
                f"({self.model}) {rel} predicted={self.predicted:.3f} tol={self.tolerance}")


@dataclass
class DecayReport:
    n: int
    series: dict = field(default_factory=dict)    # q name -> [(t, norm)]
    fits: dict = field(default_factory=dict)      # q name -> RateFit
    verdicts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v.passed for v in self.verdicts)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "series": self.series,
                           "fits": {k: f.as_dict() for k, f in self.fits.items()},
                           "verdicts": [v.__dict__ for v in self.verdicts], "pass": self.passed}, indent=2)

    def write_plot_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "log_t", "log_norm", "fit_plain", "fit_log"])
            for qn, pts in self.series.items():
                f = self.fits.get(qn)
                for t, r in pts:
                    lt = math.log(t)
                    fp = f.c_plain - f.p_plain * lt if f else ""
                    fl = f.c_log - f.p_log * lt + math.log(lt) if (f and t > 1) else ""
                    w.writerow([qn, lt, math.log(r) if r > 0 else "", fp, fl])


def judge(claim: Claim, q: float, fit: RateFit) -> Verdict:
    pred = claim.predicted(q)
    p = fit.p_preferred
    ok = p >= pred - claim.tolerance if claim.at_least else abs(p - pred) <= claim.tolerance
    return Verdict(claim.name, q_name(q), pred, p, fit.preferred, claim.tolerance, bool(ok), claim.at_least)


def verdict(report: DecayReport, claim: str | Claim) -> bool:
    """Re-judge the fits of ``report`` against ``claim``; records the verdicts and returns pass/fail."""
    c = CLAIMS[claim] if isinstance(claim, str) else claim
    vs = []
    for qn, fit in report.fits.items():
        q = math.inf if qn == "inf" else float(qn)
        vs.append(judge(c, q, fit))
    report.verdicts = [v for v in report.verdicts if v.claim != c.name] + vs
    return all(v.passed for v in vs)


def remainder_series(run, spec, cutoff: int, include_log: bool, qs=QS, times=None) -> dict:
    times = run.checkpoint_times if times is None else times
    out = {q_name(q): [] for q in qs}
    for t in times:
        r = remainder(run, spec, t, cutoff, include_log)
        for q in qs:
            out[q_name(q)].append((t, lq_norm(r.values, r.cell_volume, q)))
    return out


def decay_report(run, spec, cutoff: int, include_log: bool, qs=QS, t_min: float = 8.0,
                 t_max: float = math.inf, claim: str | Claim | None = None) -> DecayReport:
    times = [t for t in run.checkpoint_times if t_min <= t <= t_max]
    rep = DecayReport(spec.n, remainder_series(run, spec, cutoff, include_log, qs, times))
    for qn, pts in rep.series.items():
        ts, rs = zip(*pts) if pts else ((), ())
        rep.fits[qn] = fit_rates(ts, rs, t_min, t_max)
    if claim is not None:
        verdict(rep, claim)
    return rep


def monotonicity(run, spec, cutoffs=(0, 1, 2), q: float = 2.0, t_min: float = 8.0,
                 t_max: float = math.inf, min_gain: float = 0.4, final_floor: float | None = None):
    """Fitted exponents per cutoff, whether each step gains ``min_gain`` and the last clears ``final_floor``."""
    exps = []
    for c in cutoffs:
        rep = decay_report(run, spec, c, False, (q,), t_min, t_max)
        exps.append(rep.fits[q_name(q)].p_preferred)
    gains = [b - a for a, b in zip(exps, exps[1:])]
    ok = all(g >= min_gain for g in gains)
    if final_floor is not None:
        ok = ok and exps[-1] >= final_floor
    return {"cutoffs": list(cutoffs), "exponents": exps, "gains": gains, "pass": bool(ok)}
