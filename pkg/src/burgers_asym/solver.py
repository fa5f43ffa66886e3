"""Fourier pseudo-spectral solver for ``u_t - Laplacian u = a . grad(f(u))`` on a periodic box.

``f(u) = u^2`` (default) or ``|u| u``.  Diffusion is integrated exactly by the
exponential factor, the transport term by fourth-order exponential Runge-Kutta
(Cox-Matthews ETDRK4).  The box is doubled, with spectral resampling, whenever
the solution's tail reaches the boundary.

Besides checkpointed fields, every step records ``int y^beta u^2 dy`` for
``|beta| <= 3`` so space-time moments can be integrated densely in time.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .field import Field, FieldError, grid_coords, is_power_of_two
from .kernel import multi_indices

log = logging.getLogger(__name__)

NONLINEARITIES = ("squared", "modulus")
SERIES_MAX_ORDER = 3


class SolverError(RuntimeError):
    """Numerical failure; ``last_good`` holds the last finite state (or its checkpoint path)."""

    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


class ConfigError(ValueError):
    pass


def dyadic_times(t_first: float, t_end: float, per_octave: int = 1) -> list[float]:
    """``t_first * 2^(k / per_octave)`` up to ``t_end`` (inclusive)."""
    out = []
    k = 0
    while True:
        t = t_first * 2.0 ** (k / per_octave)
        if t > t_end * (1 + 1e-12):
            break
        out.append(float(t))
        k += 1
    if out and abs(out[-1] - t_end) > 1e-9 * t_end:
        out.append(float(t_end))
    return out


@dataclass
class SolverConfig:
    n: int = 2
    N: int = 256
    L: float = 16.0
    a: tuple = (1.0, 0.0)
    nonlinearity: str = "squared"
    dt_initial: float = 1e-3
    t_end: float = 8.0
    checkpoint_times: tuple = ()
    dealias: bool = True
    box_double: bool = True
    tail_tol: float = 1e-10
    dt_rel: float = 0.02        # steps grow while 2 dt <= dt_rel (1 + t); 0 keeps dt fixed
    dt_max: float = math.inf
    c_stab: float = 0.5

    def __post_init__(self):
        self.a = tuple(float(x) for x in self.a)
        self.checkpoint_times = tuple(float(x) for x in self.checkpoint_times)
        self.validate()

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    def validate(self):
        if not 1 <= self.n <= 4:
            raise ConfigError("solver supports dimensions 1..4")
        if not is_power_of_two(self.N):
            raise ConfigError(f"N = {self.N} is not a power of two")
        if len(self.a) != self.n:
            raise ConfigError(f"direction a has length {len(self.a)}, expected {self.n}")
        if not all(math.isfinite(x) for x in self.a):
            raise ConfigError("direction a must be finite")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")
        if not self.L > 0 or not self.t_end > 0:
            raise ConfigError("L and t_end must be positive")
        if not 0 < self.dt_initial <= self.c_stab * self.h**2:
            raise ConfigError(f"dt_initial = {self.dt_initial} exceeds the stability bound "
                              f"c_stab h^2 = {self.c_stab * self.h**2:.3g}")
        ct = self.checkpoint_times
        if any(b <= a for a, b in zip(ct, ct[1:])):
            raise ConfigError("checkpoint_times must be strictly increasing")
        if ct and (ct[0] <= 0 or ct[-1] > self.t_end * (1 + 1e-12)):
            raise ConfigError("checkpoint_times must lie in (0, t_end]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a"] = list(self.a)
        d["checkpoint_times"] = list(self.checkpoint_times)
        d["dt_max"] = None if math.isinf(self.dt_max) else self.dt_max
        return d


# ---------------------------------------------------------------------------
# spectral helpers

def wavenumbers(n: int, N: int, L: float) -> list[np.ndarray]:
    """Angular wavenumbers for an ``rfftn`` layout, as open-mesh arrays."""
    h = 2.0 * L / N
    out = []
    for i in range(n):
        k = 2 * np.pi * (np.fft.rfftfreq(N, d=h) if i == n - 1 else np.fft.fftfreq(N, d=h))
        out.append(k.reshape([-1 if j == i else 1 for j in range(n)]))
    return out


def dealias_mask(n: int, N: int) -> np.ndarray:
    cut = N / 3.0
    mask = True
    for i in range(n):
        m = np.fft.rfftfreq(N, d=1.0 / N) if i == n - 1 else np.fft.fftfreq(N, d=1.0 / N)
        mask = mask & (np.abs(m) < cut).reshape([-1 if j == i else 1 for j in range(n)])
    return mask


def phi_functions(z: np.ndarray, kmax: int = 3) -> list[np.ndarray]:
    """``phi_0 .. phi_kmax`` of real ``z``: Taylor series near 0, recurrence elsewhere."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    out = [np.exp(z)]
    zs = np.where(small, 1.0, z)
    for k in range(kmax):
        out.append((out[k] - 1.0 / math.factorial(k)) / zs)
    if small.any():
        zz = z[small]
        for k in range(1, kmax + 1):
            acc = np.zeros_like(zz)
            for j in range(24, -1, -1):
                acc = acc * zz + 1.0 / math.factorial(j + k)
            out[k][small] = acc
    return out


@dataclass
class _ETDCoeffs:
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


class _Stepper:
    """ETDRK4 coefficients for one grid geometry; cached per step size."""

    def __init__(self, cfg: SolverConfig, L: float):
        self.cfg = cfg
        self.L = L
        k = wavenumbers(cfg.n, cfg.N, L)
        self.lin = -sum(kj * kj for kj in k)
        adv = sum(aj * kj for aj, kj in zip(cfg.a, k))
        self.adv = 1j * adv
        if cfg.dealias:
            self.adv = self.adv * dealias_mask(cfg.n, cfg.N)
        self.shape = (cfg.N,) * cfg.n
        self._cache: dict[float, _ETDCoeffs] = {}
        f = cfg.nonlinearity
        self._f: Callable = (lambda u: u * u) if f == "squared" else (lambda u: np.abs(u) * u)

    def coeffs(self, dt: float) -> _ETDCoeffs:
        c = self._cache.get(dt)
        if c is None:
            z = dt * self.lin
            p = phi_functions(z)
            ph = phi_functions(0.5 * z, 1)
            c = _ETDCoeffs(p[0], ph[0], 0.5 * dt * ph[1],
                           dt * (p[1] - 3 * p[2] + 4 * p[3]),
                           dt * (p[2] - 2 * p[3]),
                           dt * (-p[2] + 4 * p[3]))
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[dt] = c
        return c

    def physical(self, v):
        return sfft.irfftn(v, s=self.shape)

    def nonlinear(self, v, u=None):
        if u is None:
            u = self.physical(v)
        return self.adv * sfft.rfftn(self._f(u))

    def step(self, v, dt, u=None):
        c = self.coeffs(dt)
        Nv = self.nonlinear(v, u)
        a = c.E2 * v + c.Q * Nv
        Na = self.nonlinear(a)
        b = c.E2 * v + c.Q * Na
        Nb = self.nonlinear(b)
        cc = c.E2 * a + c.Q * (2.0 * Nb - Nv)
        Nc = self.nonlinear(cc)
        return c.E * v + c.f1 * Nv + 2.0 * c.f2 * (Na + Nb) + c.f3 * Nc


def double_box(values: np.ndarray) -> np.ndarray:
    """Resample from ``[-L, L)^n`` to ``[-2L, 2L)^n`` at the same ``N``.

    Zero-extend to ``2N`` points, then keep the lowest ``N`` Fourier modes per
    axis.  The zero mode, and hence the mass, is preserved exactly.
    """
    out = values
    N = values.shape[0]
    for ax in range(values.ndim):
        pad = [(0, 0)] * values.ndim
        pad[ax] = (N // 2, N // 2)
        big = np.pad(out, pad)
        X = sfft.rfft(big, axis=ax)
        X = np.take(X, np.arange(N // 2 + 1), axis=ax) * 0.5
        idx = [slice(None)] * values.ndim
        idx[ax] = N // 2
        X[tuple(idx)] = 0.0
        out = sfft.irfft(X, n=N, axis=ax)
    return out


# ---------------------------------------------------------------------------
# per-step diagnostics

def series_indices(n: int, max_order: int = SERIES_MAX_ORDER) -> list[tuple[int, ...]]:
    return [b for k in range(max_order + 1) for b in multi_indices(n, k)]


def power_moments(values: np.ndarray, x: np.ndarray, h: float, max_order: int) -> np.ndarray:
    """All ``int y^beta v dy`` with each ``beta_i <= max_order``, as an array indexed by ``beta``."""
    V = np.vander(x, max_order + 1, increasing=True)  # (N, max_order+1)
    out = values
    for _ in range(values.ndim):
        # contract the leading axis; the moment axis is appended at the end
        out = np.tensordot(out, V, axes=([0], [0]))
    return out * h**values.ndim


def weighted_norms(u: np.ndarray, coords, h: float) -> dict:
    dv = h**u.ndim
    r2 = sum(c * c for c in coords)
    au = np.abs(u)
    return {"L1": float(au.sum() * dv), "L2": float(math.sqrt((u * u).sum() * dv)),
            "Linf": float(au.max()), "mass": float(u.sum() * dv),
            "w1": float((np.sqrt(r2) * au).sum() * dv), "w2": float((r2 * au).sum() * dv)}


@dataclass
class MomentSeries:
    """Dense-in-time record: ``values[k, i] = int y^beta_i u(t_k)^2 dy``."""

    n: int
    betas: list
    t: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    mass: list = field(default_factory=list)

    def append(self, t, u, x, h):
        pm = power_moments(u * u, x, h, SERIES_MAX_ORDER)
        self.t.append(float(t))
        self.rows.append([pm[b] for b in self.betas])
        self.mass.append(float(u.sum() * h**u.ndim))

    def times(self) -> np.ndarray:
        return np.asarray(self.t)

    def column(self, beta) -> np.ndarray:
        i = self.betas.index(tuple(beta))
        return np.asarray(self.rows)[:, i]

    def save(self, path):
        np.savez(path, t=np.asarray(self.t), values=np.asarray(self.rows),
                 mass=np.asarray(self.mass), betas=np.asarray(self.betas, dtype=int))

    @classmethod
    def load(cls, path) -> "MomentSeries":
        d = np.load(path)
        betas = [tuple(int(v) for v in b) for b in d["betas"]]
        return cls(len(betas[0]), betas, list(d["t"]), [list(r) for r in d["values"]], list(d["mass"]))


@dataclass
class SolutionRun:
    config: SolverConfig
    u0: Field
    series: MomentSeries
    norms: list = field(default_factory=list)
    checkpoint_paths: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    box_history: list = field(default_factory=list)
    wall_time: float = 0.0
    out_dir: Path | None = None

    @property
    def checkpoint_times(self) -> list[float]:
        return sorted(set(self.fields) | set(self.checkpoint_paths))

    def checkpoint(self, t: float) -> Field:
        key = self._key(t)
        if key in self.fields:
            return self.fields[key]
        if key in self.checkpoint_paths:
            return Field.load(self.checkpoint_paths[key])
        raise KeyError(f"no checkpoint at t = {t}")

    def _key(self, t: float) -> float:
        for k in self.checkpoint_times:
            if abs(k - t) <= 1e-9 * max(1.0, t):
                return k
        raise KeyError(f"no checkpoint at t = {t}")

    def mass_drift(self) -> float:
        """Largest change of ``int u`` over the series, relative to ``int |u0|`` (safe for zero-mass data)."""
        m = np.asarray(self.series.mass)
        return float(np.max(np.abs(m - m[0])) / self.u0.integral(np.sign(self.u0.values)))

    # -- persistence ------------------------------------------------------
    def write_manifest(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        self.series.save(out_dir / "series.npz")
        with open(out_dir / "norms.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "L1", "L2", "Linf", "mass", "w1", "w2"])
            for r in self.norms:
                w.writerow([repr(r["t"])] + [repr(r[k]) for k in ("L1", "L2", "Linf", "mass", "w1", "w2")])
        u0_path = self.u0.save(out_dir / "u0.cdbf")
        manifest = {
            "config": self.config.to_dict(),
            "initial": str(u0_path.name),
            "checkpoints": [{"t": t, "path": _relative(p, out_dir)} for t, p in sorted(self.checkpoint_paths.items())],
            "series": "series.npz",
            "norms": "norms.csv",
            "box_history": self.box_history,
            "wall_time_s": self.wall_time,
        }
        path = out_dir / "run.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2))
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, manifest_path) -> "SolutionRun":
        manifest_path = Path(manifest_path)
        base = manifest_path.parent
        m = json.loads(manifest_path.read_text())
        cfgd = dict(m["config"])
        if cfgd.get("dt_max") is None:
            cfgd["dt_max"] = math.inf
        cfg = SolverConfig(**cfgd)
        norms = []
        with open(base / m["norms"]) as fh:
            for row in csv.DictReader(fh):
                norms.append({k: float(v) for k, v in row.items()})
        paths = {float(c["t"]): base / c["path"] for c in m["checkpoints"]}
        for p in paths.values():
            if not p.exists():
                raise FileNotFoundError(p)
        return cls(cfg, Field.load(base / m["initial"]), MomentSeries.load(base / m["series"]), norms,
                   paths, {}, m.get("box_history", []), m.get("wall_time_s", 0.0), base)


def _relative(p, base: Path) -> str:
    p = Path(p)
    try:
        return str(p.resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p.resolve())


def solve(config: SolverConfig, u0: Field, out_dir=None, keep_fields: bool | None = None,
          progress: Callable | None = None) -> SolutionRun:
    """Integrate from ``u0`` at time 0 to ``config.t_end``, checkpointing at ``config.checkpoint_times``."""
    cfg = config
    if (u0.n, u0.N) != (cfg.n, cfg.N) or abs(u0.L - cfg.L) > 1e-12 * cfg.L:
        raise ConfigError("initial field does not live on the configured grid")
    if u0.tail_ratio() > cfg.tail_tol:
        raise FieldError(f"initial data tail {u0.tail_ratio():.2e} exceeds tail_tol {cfg.tail_tol:.1e}")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    keep = (out_dir is None) if keep_fields is None else keep_fields

    start = time.perf_counter()
    L = cfg.L
    stepper = _Stepper(cfg, L)
    v = sfft.rfftn(u0.values)
    run = SolutionRun(cfg, u0, MomentSeries(cfg.n, series_indices(cfg.n)), out_dir=out_dir)
    targets = list(cfg.checkpoint_times)
    if not targets or abs(targets[-1] - cfg.t_end) > 1e-12 * cfg.t_end:
        targets.append(cfg.t_end)
    t, dt = 0.0, cfg.dt_initial
    last_good = u0
    just_doubled = False

    def record_checkpoint(u, t):
        fld = Field(cfg.n, cfg.N, L, t, u.copy())
        if keep:
            run.fields[t] = fld
        if out_dir is not None:
            run.checkpoint_paths[t] = fld.save(out_dir / "checkpoints" / f"u_t{t:.9g}.cdbf")
        run.norms.append({"t": t, **weighted_norms(u, grid_coords(cfg.n, cfg.N, L), 2 * L / cfg.N)})
        return fld

    for target in targets:
        while t < target * (1 - 1e-14):
            u = stepper.physical(v)
            if not np.all(np.isfinite(u)):
                path = last_good.save(out_dir / "last_good.cdbf") if out_dir is not None else None
                raise SolverError(f"non-finite values at t = {t:.6g}", path or last_good)
            if shell_ratio(u) > cfg.tail_tol:
                if just_doubled:
                    raise SolverError(f"tail {shell_ratio(u):.2e} still above tail_tol right after box "
                                      f"doubling at t = {t:.6g}; the grid is probably under-resolved",
                                      last_good)
                if not cfg.box_double:
                    raise SolverError(f"tail {shell_ratio(u):.2e} reached the boundary at t = {t:.6g} "
                                      f"and box doubling is off", last_good)
                u = double_box(u)
                L *= 2.0
                stepper = _Stepper(cfg, L)
                v = sfft.rfftn(u)
                run.box_history.append({"t": t, "L": L})
                log.info("box doubled to L = %g at t = %.4g", L, t)
                just_doubled = True
                continue
            just_doubled = False
            h = 2 * L / cfg.N
            run.series.append(t, u, -L + h * np.arange(cfg.N), h)
            if cfg.dt_rel > 0:
                while 2 * dt <= cfg.dt_rel * (1 + t) and 2 * dt <= cfg.dt_max:
                    dt *= 2
            step = min(dt, target - t)
            if target - (t + step) < 1e-9 * step:
                step = target - t
            v = stepper.step(v, step, u)
            t = target if step == target - t else t + step
            if progress is not None:
                progress(t)
        u = stepper.physical(v)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite values at t = {t:.6g}", last_good)
        last_good = record_checkpoint(u, t)
    # final sample closes the dense series at t_end
    h = 2 * L / cfg.N
    run.series.append(t, u, -L + h * np.arange(cfg.N), h)
    run.wall_time = time.perf_counter() - start
    if out_dir is not None:
        run.write_manifest(out_dir)
    return run


def shell_ratio(u: np.ndarray) -> float:
    from .field import shell_max
    return shell_max(u) / max(float(np.abs(u).max()), 1e-300)


def pde_rhs(u: Field, a, nonlinearity: str = "squared") -> np.ndarray:
    """``Laplacian u + a . grad f(u)`` evaluated spectrally."""
    shape = u.values.shape
    k = wavenumbers(u.n, u.N, u.L)
    lap = -sum(kj * kj for kj in k)
    adv = 1j * sum(aj * kj for aj, kj in zip(a, k))
    f = u.values**2 if nonlinearity == "squared" else np.abs(u.values) * u.values
    return sfft.irfftn(lap * sfft.rfftn(u.values) + adv * sfft.rfftn(f), s=shape)


def residual_check(run: SolutionRun, t: float) -> float:
    """``||u_t - Laplacian u - a . grad f(u)||_{L^2}`` at checkpoint ``t``.

    ``u_t`` is the three-point finite difference over the neighbouring
    checkpoints (which may be unevenly spaced).
    """
    times = run.checkpoint_times
    key = run._key(t)
    i = times.index(key)
    if i == 0 or i == len(times) - 1:
        raise KeyError(f"checkpoint t = {t} needs a neighbour on each side")
    um, u, up = (run.checkpoint(times[j]) for j in (i - 1, i, i + 1))
    if not (um.L == u.L == up.L):
        raise ValueError("box changed between neighbouring checkpoints")
    for f in (um, u, up):
        if not np.all(np.isfinite(f.values)):
            raise SolverError(f"non-finite values in checkpoint t = {f.t}")
    h1, h2 = u.t - um.t, up.t - u.t
    ut = (-h2 / (h1 * (h1 + h2)) * um.values + (h2 - h1) / (h1 * h2) * u.values
          + h1 / (h2 * (h1 + h2)) * up.values)
    r = ut - pde_rhs(u, run.config.a, run.config.nonlinearity)
    return float(math.sqrt((r * r).sum() * u.cell_volume))


# ---------------------------------------------------------------------------
# initial data

def gaussian_data(n, N, L, M0=1.0, tau0=1.0, center=None) -> Field:
    from .kernel import KernelTerm, eval_terms
    coords = grid_coords(n, N, L)
    if center is not None:
        coords = [c - x0 for c, x0 in zip(coords, center)]
    vals = M0 * eval_terms([KernelTerm(1.0, (0,) * n)], tau0, coords)
    return Field(n, N, L, 0.0, np.broadcast_to(vals, (N,) * n).copy())


def dipole_data(n, N, L, amplitude=1.0, tau0=1.0, axis=0) -> Field:
    """``amplitude * d_axis G(tau0)``: zero mass, sign-changing."""
    from .kernel import KernelTerm, eval_terms, unit
    vals = amplitude * eval_terms([KernelTerm(1.0, unit(n, axis))], tau0, grid_coords(n, N, L))
    return Field(n, N, L, 0.0, np.broadcast_to(vals, (N,) * n).copy())
