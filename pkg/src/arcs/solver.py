"""Finite-volume IMEX integrator for the attraction-repulsion system.

    u_t = lap u - div(u chi(v) grad v) + div(u xi(w) grad w)
    v_t = lap v - v + u
    w_t = lap w - w + u

on a box with zero-flux boundaries.  Each step is a first-order splitting:
explicit upwind transport of u, backward-Euler diffusion of u, then
backward-Euler diffusion/decay of v and w with the source u taken explicitly.
Transport is written in telescoping flux form, so the discrete mass of u only
changes through the linear-solve residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .diagnostics import blowup_check
from .errors import LinearSolveDiverged
from .model import Grid, SensitivitySpec, SystemState, clamp_to_floor

COMPLETED = "Completed"
SUSPECTED_BLOWUP = "SuspectedBlowup"


@dataclass(frozen=True)
class SchemeConfig:
    t_end: float = 1.0
    dt: float | str = "auto"
    dt_max: float = 1e-2
    cfl: float = 0.5
    diffusion_mode: str = "implicit"
    linear_tol: float = 1e-10
    u_floor: float = 1e-12
    dt_min: float = 1e-12

    def __post_init__(self):
        if self.dt != "auto" and not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ValueError("dt must be positive or 'auto'")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must be in (0, 1]")
        if self.diffusion_mode not in ("implicit", "explicit"):
            raise ValueError("diffusion_mode must be 'implicit' or 'explicit'")
        if not self.dt_max > 0 or not self.linear_tol > 0 or not self.t_end >= 0:
            raise ValueError("dt_max, linear_tol must be positive and t_end >= 0")

    @property
    def auto(self) -> bool:
        return self.dt == "auto"


@dataclass
class StepReport:
    dt_used: float
    mass_drift: float
    positivity_violation: float
    min_u_raw: float
    max_u: float
    linear_iters: int
    clamped_evals: int = 0


# -- spatial operators -------------------------------------------------------

def laplacian_neumann(field, grid: Grid):
    """Second-order stencil with mirror ghost cells (zero normal flux)."""
    field = np.asarray(field, dtype=float)
    padded = np.pad(field, 1, mode="edge")
    out = np.zeros_like(field)
    for axis, h in enumerate(grid.h):
        lo = [slice(1, -1)] * grid.dim
        hi = [slice(1, -1)] * grid.dim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += (padded[tuple(hi)] - 2.0 * field + padded[tuple(lo)]) / h**2
    return out


def _faces(a, axis):
    n = a.shape[axis]
    left = np.take(a, np.arange(n - 1), axis=axis)
    right = np.take(a, np.arange(1, n), axis=axis)
    return left, right


def face_velocity(s, sens: SensitivitySpec, grid: Grid, axis: int):
    """sens(face average of s) * (two-point face gradient of s) on interior faces."""
    sl, sr = _faces(s, axis)
    sbar, n_clamped = clamp_to_floor(sens, 0.5 * (sl + sr))
    return sens.value(sbar) * (sr - sl) / grid.h[axis], n_clamped


def _transport(u, s, sens, grid, sign):
    out = np.zeros_like(u, dtype=float)
    n_clamped = 0
    for axis, h in enumerate(grid.h):
        vel, nc = face_velocity(s, sens, grid, axis)
        vel = sign * vel
        n_clamped += nc
        ul, ur = _faces(u, axis)
        flux = np.where(vel > 0, ul, ur) * vel
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        flux = np.pad(flux, pad)
        hi = np.take(flux, np.arange(1, flux.shape[axis]), axis=axis)
        lo = np.take(flux, np.arange(flux.shape[axis] - 1), axis=axis)
        out -= (hi - lo) / h
    return out, n_clamped


def chemo_flux_div(u, s, sens: SensitivitySpec, grid: Grid, sign: int):
    """Upwind transport rate of u along ``sign * sens(s) grad s``.

    ``sign=+1`` gives the attraction term ``-div(u chi(v) grad v)``,
    ``sign=-1`` the repulsion term ``+div(u xi(w) grad w)``.
    """
    return _transport(np.asarray(u, dtype=float), np.asarray(s, dtype=float),
                      sens, grid, sign)[0]


def max_face_speed(state: SystemState, chi, xi, grid: Grid) -> list:
    speeds = []
    for axis in range(grid.dim):
        a, _ = face_velocity(state.v, chi, grid, axis)
        b, _ = face_velocity(state.w, xi, grid, axis)
        speeds.append(float(np.max(np.abs(a) + np.abs(b))) if a.size else 0.0)
    return speeds


def dt_stable(state: SystemState, scheme: SchemeConfig, chi, xi, grid: Grid) -> float:
    """Advective CFL step, capped by dt_max (and the explicit diffusion limit).

    Axis contributions add: ``dt * sum_a vmax_a / h_a <= cfl``.
    """
    rate = sum(v / h for v, h in zip(max_face_speed(state, chi, xi, grid), grid.h))
    dt = scheme.dt_max if rate == 0 else min(scheme.dt_max, scheme.cfl / rate)
    if scheme.diffusion_mode == "explicit":
        dt = min(dt, 0.5 / sum(1.0 / h**2 for h in grid.h))
    return dt


# -- implicit solves ---------------------------------------------------------

def laplacian_matrix(grid: Grid):
    mats = []
    for n, h in zip(grid.cells, grid.h):
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        mats.append(sp.diags([off, main, off], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return mats[0].tocsr()
    I0, I1 = sp.identity(grid.cells[0]), sp.identity(grid.cells[1])
    return (sp.kron(mats[0], I1) + sp.kron(I0, mats[1])).tocsr()


class DiffusionSolver:
    """Solves ``(a I - dt L) x = b`` for the Neumann Laplacian L.

    Factorisations are cached per ``(a, dt)``; the residual is checked against
    ``tol * ||b||`` and reduced by iterative refinement if needed.
    """

    def __init__(self, grid: Grid, cache_size: int = 4):
        self.grid = grid
        self.L = laplacian_matrix(grid)
        self.N = self.L.shape[0]
        self._cache = {}
        self._order = []
        self.cache_size = cache_size

    def _factor(self, a, dt):
        key = (a, dt)
        if key not in self._cache:
            A = (a * sp.identity(self.N, format="csr") - dt * self.L).tocsc()
            self._cache[key] = (A, splu(A))
            self._order.append(key)
            if len(self._order) > self.cache_size:
                self._cache.pop(self._order.pop(0))
        return self._cache[key]

    def solve(self, a, dt, b, tol):
        A, lu = self._factor(a, dt)
        rhs = np.asarray(b, dtype=float).ravel()
        bnorm = np.linalg.norm(rhs)
        x = lu.solve(rhs)
        iters = 1
        max_iters = 10 * self.N
        while True:
            r = rhs - A @ x
            if np.linalg.norm(r) <= tol * bnorm or not np.all(np.isfinite(x)):
                break
            if iters >= max_iters:
                raise LinearSolveDiverged(
                    f"residual {np.linalg.norm(r):.3e} > {tol:.1e}*||b|| after {iters} iterations")
            x = x + lu.solve(r)
            iters += 1
        return x.reshape(self.grid.shape), iters


# -- time stepping -----------------------------------------------------------

def step(state: SystemState, scheme: SchemeConfig, chi, xi, grid: Grid,
         dt: float | None = None, solver: DiffusionSolver | None = None):
    if dt is None:
        dt = dt_stable(state, scheme, chi, xi, grid) if scheme.auto else float(scheme.dt)
    if solver is None and scheme.diffusion_mode == "implicit":
        solver = DiffusionSolver(grid)
    u, v, w = state.u, state.v, state.w

    attract, n1 = _transport(u, v, chi, grid, +1)
    repel, n2 = _transport(u, w, xi, grid, -1)
    u_star = u + dt * (attract + repel)

    iters = 0
    tol = scheme.linear_tol
    if scheme.diffusion_mode == "implicit":
        u_new, k = solver.solve(1.0, dt, u_star, tol)
        iters += k
        v_new, k = solver.solve(1.0 + dt, dt, v + dt * u, tol)
        iters += k
        w_new, k = solver.solve(1.0 + dt, dt, w + dt * u, tol)
        iters += k
    else:
        u_new = u_star + dt * laplacian_neumann(u_star, grid)
        v_new = v + dt * (laplacian_neumann(v, grid) - v + u)
        w_new = w + dt * (laplacian_neumann(w, grid) - w + u)

    m_old = float(np.sum(u))
    m_new = float(np.sum(u_new))
    drift = (m_new - m_old) / m_old if m_old != 0 else m_new
    u_min = float(np.min(u_new))
    u_max = float(np.max(u_new))
    violation = 0.0
    if u_min < 0:
        violation = -u_min
        u_new = np.maximum(u_new, 0.0)

    report = StepReport(dt_used=dt, mass_drift=drift, positivity_violation=violation,
                        min_u_raw=u_min, max_u=u_max, linear_iters=iters,
                        clamped_evals=n1 + n2)
    return SystemState(state.t + dt, u_new, v_new, w_new), report


@dataclass
class RunResult:
    status: str
    state: SystemState
    n_steps: int = 0
    reason: str = ""
    max_step_drift: float = 0.0
    total_mass_drift: float = 0.0
    worst_positivity: float = 0.0
    clamped_evals: int = 0
    linear_iters: int = 0
    reports: list = field(default_factory=list, repr=False)


def run(config, observer=None, step_observer=None, keep_reports=False) -> RunResult:
    """Advance ``config.initial_state()`` to ``config.scheme.t_end``.

    ``config`` needs ``grid``, ``chi``, ``xi``, ``scheme``, ``output_interval``,
    ``blowup_cap`` and ``initial_state()``.  ``observer(state)`` is called at
    t = 0, at every output time and on early termination.
    """
    grid, chi, xi, scheme = config.grid, config.chi, config.xi, config.scheme
    state = config.initial_state()
    state.check(grid)
    cap = config.blowup_cap
    interval = config.output_interval or scheme.t_end
    solver = DiffusionSolver(grid) if scheme.diffusion_mode == "implicit" else None

    m0 = float(np.sum(state.u))
    result = RunResult(status=COMPLETED, state=state)

    def notify(s):
        if observer is not None:
            observer(s)

    notify(state)
    if blowup_check(state, cap):
        result.status, result.reason = SUSPECTED_BLOWUP, "initial data exceed cap"
        return result

    t_end = scheme.t_end
    k_out = 1
    eps_t = 1e-12 * max(1.0, t_end)
    while state.t < t_end - eps_t:
        target = min(k_out * interval, t_end)
        if scheme.auto:
            with np.errstate(all="ignore"):
                dt = dt_stable(state, scheme, chi, xi, grid)
            if not math.isfinite(dt) or dt < scheme.dt_min:
                result.status = SUSPECTED_BLOWUP
                result.reason = f"time step collapsed to {dt:.3e}"
                notify(state)
                break
        else:
            dt = float(scheme.dt)
        hit = dt >= target - state.t - eps_t
        if hit:
            dt = target - state.t
        with np.errstate(all="ignore"):
            new_state, rep = step(state, scheme, chi, xi, grid, dt=dt, solver=solver)
        if hit:
            new_state = SystemState(target, new_state.u, new_state.v, new_state.w)
        state = new_state
        result.n_steps += 1
        result.max_step_drift = max(result.max_step_drift, abs(rep.mass_drift))
        ratio = rep.min_u_raw / max(1.0, rep.max_u)
        result.worst_positivity = min(result.worst_positivity, ratio)
        result.clamped_evals += rep.clamped_evals
        result.linear_iters += rep.linear_iters
        if keep_reports:
            result.reports.append(rep)
        if step_observer is not None:
            step_observer(state, rep)
        if blowup_check(state, cap):
            result.status = SUSPECTED_BLOWUP
            result.reason = f"||u||_inf exceeded cap {cap:.3e} or non-finite values at t={state.t:.6g}"
            notify(state)
            break
        if hit:
            notify(state)
            k_out += 1

    result.state = state
    if m0 != 0:
        result.total_mass_drift = (float(np.sum(state.u)) - m0) / m0
    return result


# -- analytic decay check ----------------------------------------------------

@dataclass
class _DecayRun:
    grid: Grid
    chi: SensitivitySpec
    xi: SensitivitySpec
    scheme: SchemeConfig
    output_interval: float
    blowup_cap: float = math.inf

    def initial_state(self):
        x = self.grid.centers()[0]
        s = np.cos(math.pi * x / self.grid.lengths[0])
        return SystemState(0.0, np.zeros_like(s), s.copy(), s.copy())


def decay_error(cells: int, dt: float | None = None, t_end: float = 0.1) -> dict:
    """Max error against v = w = exp(-(1 + pi^2) t) cos(pi x), u = 0 on [0, 1].

    With u = 0 the transport terms vanish and only the Neumann diffusion and
    decay are exercised.  ``dt`` defaults to about 0.25 h^2, adjusted to land
    exactly on ``t_end``.
    """
    grid = Grid(1, (1.0,), (cells,))
    h = grid.h[0]
    if dt is None:
        dt = t_end / math.ceil(t_end / (0.25 * h * h))
    scheme = SchemeConfig(t_end=t_end, dt=dt, dt_max=dt)
    sens = SensitivitySpec.constant(1.0)  # transport vanishes since u = 0
    cfg = _DecayRun(grid, sens, sens,
                    scheme, t_end)
    res = run(cfg)
    x = grid.centers()[0]
    exact = math.exp(-(1 + math.pi**2) * t_end) * np.cos(math.pi * x)
    err = max(float(np.max(np.abs(res.state.v - exact))),
              float(np.max(np.abs(res.state.w - exact))))
    return {"cells": cells, "h": h, "dt": dt, "error": err}


def decay_study(cells, dt: float | None = None, t_end: float = 0.1) -> list:
    return [decay_error(c, dt, t_end) for c in cells]
