"""Monitored functionals along a run.

Everything here is a pure reduction over a state snapshot.  :class:`Monitor`
bundles them into an observer for :func:`arcs.solver.run` that appends one
:class:`DiagnosticsRecord` per output time.
"""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
import math

import numpy as np

from .certifier import quadratic_form
from .errors import InsufficientSamples
from .model import Grid, SensitivitySpec, SystemState, clamp_to_floor

SERIES_COLUMNS = ("t", "mass_u", "linf_u", "linf_v", "linf_w", "min_v", "min_w",
                  "grad_linf_v", "grad_linf_w", "energy_p", "f_min", "f_max", "Q_max",
                  "excluded_cells", "blowup")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    linf_u: float
    linf_v: float
    linf_w: float
    min_v: float
    min_w: float
    grad_linf_v: float
    grad_linf_w: float
    energy_p: float
    f_min: float
    f_max: float
    Q_max: float
    excluded_cells: int
    blowup: bool

    def to_row(self) -> list:
        row = []
        for f, val in zip(fields(self), astuple(self)):
            if f.name == "excluded_cells":
                row.append(str(int(val)))
            elif f.name == "blowup":
                row.append("true" if val else "false")
            else:
                row.append(format(float(val), ".17g"))
        return row

    @classmethod
    def from_row(cls, row) -> "DiagnosticsRecord":
        vals = []
        for f, raw in zip(fields(cls), row):
            if f.name == "excluded_cells":
                vals.append(int(raw))
            elif f.name == "blowup":
                if raw not in ("true", "false"):
                    raise ValueError(f"bad blowup flag {raw!r}")
                vals.append(raw == "true")
            else:
                vals.append(float(raw))
        return cls(*vals)


def write_series(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_COLUMNS)
        for rec in records:
            writer.writerow(rec.to_row())


def read_series(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SERIES_COLUMNS:
            raise ValueError(f"unexpected series header {header}")
        return [DiagnosticsRecord.from_row(row) for row in reader]


# -- fields ------------------------------------------------------------------

def weight_field(state: SystemState, chi: SensitivitySpec, xi: SensitivitySpec,
                 r: float, sigma: float, return_clamped=False):
    """exp(-r * int_{eta1}^{v} chi - sigma * int_{eta2}^{w} xi), pointwise.

    Signals below their floor are clamped to it before integrating.
    """
    v, n1 = clamp_to_floor(chi, state.v)
    w, n2 = clamp_to_floor(xi, state.w)
    expo = np.zeros_like(v, dtype=float)
    if r:
        expo -= r * chi.antiderivative(v)
    if sigma:
        expo -= sigma * xi.antiderivative(w)
    f = np.exp(expo)
    if return_clamped:
        return f, n1 + n2
    return f


def weighted_energy(state: SystemState, p: float, f_field, grid: Grid) -> float:
    return float(np.sum(state.u**p * f_field) * grid.cell_volume)


def central_gradient(field, grid: Grid) -> list:
    """Cell gradients by central differences; boundary cells use mirror ghosts."""
    padded = np.pad(np.asarray(field, dtype=float), 1, mode="edge")
    comps = []
    for axis, h in enumerate(grid.h):
        lo = [slice(1, -1)] * grid.dim
        hi = [slice(1, -1)] * grid.dim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        comps.append((padded[tuple(hi)] - padded[tuple(lo)]) / (2 * h))
    return comps


def gradient_magnitude(field, grid: Grid):
    return np.sqrt(sum(g * g for g in central_gradient(field, grid)))


def xyz_fields(state: SystemState, chi, xi, grid: Grid, u_floor: float = 1e-12):
    """x = |grad u|/u, y = chi(v)|grad v|, z = xi(w)|grad w|.

    Returns ``(x, y, z, excluded)``; ``excluded`` marks cells with
    ``u < u_floor * max u`` where x is set to 0 and Q is not evaluated.
    """
    u = state.u
    umax = float(np.max(u)) if u.size else 0.0
    excluded = ~(u >= u_floor * umax) | (u <= 0)
    safe_u = np.where(excluded, 1.0, u)
    x = np.where(excluded, 0.0, gradient_magnitude(u, grid) / safe_u)
    v, _ = clamp_to_floor(chi, state.v)
    w, _ = clamp_to_floor(xi, state.w)
    y = chi.value(v) * gradient_magnitude(state.v, grid)
    z = xi.value(w) * gradient_magnitude(state.w, grid)
    return x, y, z, excluded


def form_scale(coeffs, x, y, z, mask=None) -> float:
    """max|a_i| times the largest squared (x, y, z) radius (at least 1)."""
    r2 = x * x + y * y + z * z
    if mask is not None:
        r2 = r2[~mask]
    rmax = float(np.max(r2)) if np.size(r2) else 0.0
    return max(abs(c) for c in coeffs) * max(1.0, rmax)


def quadratic_form_max(coeffs, xyz, mask=None) -> float:
    """Largest value of the gradient form over included cells (0 if none)."""
    x, y, z = xyz
    q = quadratic_form(coeffs, x, y, z)
    if mask is not None:
        q = q[~mask]
    return float(np.max(q)) if np.size(q) else 0.0


def blowup_check(state: SystemState, cap: float, t: float | None = None) -> bool:
    """Finite-threshold stand-in for blow-up: ||u||_inf > cap or non-finite data."""
    for arr in (state.u, state.v, state.w):
        if not np.all(np.isfinite(arr)):
            return True
    return bool(np.max(state.u) > cap)


def bounds_check(record: DiagnosticsRecord, aux, grid_tol: float | None = None) -> list:
    """Compare a record with the lower bounds eta1, eta2, c4 and with f <= 1.

    Without ``grid_tol`` the slack is 5% of eta for the signals and 1e-12 for f.
    """
    tol_v = 0.05 * aux.eta1 if grid_tol is None else grid_tol
    tol_w = 0.05 * aux.eta2 if grid_tol is None else grid_tol
    tol_f = 1e-12 if grid_tol is None else grid_tol
    out = []
    t = record.t
    if record.min_v < aux.eta1 - tol_v:
        out.append(f"t={t:.6g}: min_v={record.min_v:.6g} < eta1={aux.eta1:.6g}")
    if record.min_w < aux.eta2 - tol_w:
        out.append(f"t={t:.6g}: min_w={record.min_w:.6g} < eta2={aux.eta2:.6g}")
    if record.f_min < aux.c4 - tol_f:
        out.append(f"t={t:.6g}: f_min={record.f_min:.6g} < c4={aux.c4:.6g}")
    if record.f_max > 1 + 1e-12:
        out.append(f"t={t:.6g}: f_max={record.f_max:.17g} > 1")
    return out


@dataclass(frozen=True)
class MonitorReport:
    max_energy: float
    final_over_max: float
    plateau: bool
    theta: float
    n_samples: int

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("max_energy", "final_over_max", "plateau", "theta", "n_samples")}


def energy_monitor(series, theta: float) -> MonitorReport:
    """Summarise a weighted-energy time series.

    ``plateau`` is true when the last quarter of the samples spans less than
    1% of its largest magnitude.  No attempt is made to fit the constants of
    the underlying differential inequality.
    """
    series = list(series)
    if len(series) < 3:
        raise InsufficientSamples(f"need >= 3 samples, got {len(series)}")
    e = np.array([s[1] for s in series], dtype=float)
    emax = float(np.max(e))
    tail = e[-max(2, int(math.ceil(len(e) / 4))):]
    spread = float(np.max(tail) - np.min(tail))
    ref = float(np.max(np.abs(tail)))
    plateau = spread <= 0.01 * ref if ref > 0 else True
    return MonitorReport(max_energy=emax,
                         final_over_max=float(e[-1] / emax) if emax > 0 else 1.0,
                         plateau=bool(plateau), theta=float(theta), n_samples=len(e))


class Monitor:
    """Observer collecting one record per output time."""

    def __init__(self, grid, chi, xi, p, r, sigma, coeffs=None, u_floor=1e-12, cap=math.inf):
        self.grid, self.chi, self.xi = grid, chi, xi
        self.p, self.r, self.sigma = p, r, sigma
        self.coeffs = coeffs
        self.u_floor = u_floor
        self.cap = cap
        self.records = []
        self.q_scales = []
        self.clamped = 0

    def record(self, state: SystemState) -> DiagnosticsRecord:
        grid = self.grid
        with np.errstate(all="ignore"):
            f, nc = weight_field(state, self.chi, self.xi, self.r, self.sigma,
                                 return_clamped=True)
            self.clamped += nc
            x, y, z, excl = xyz_fields(state, self.chi, self.xi, grid, self.u_floor)
            if self.coeffs is not None:
                q_max = quadratic_form_max(self.coeffs, (x, y, z), excl)
                self.q_scales.append(form_scale(self.coeffs, x, y, z, excl))
            else:
                q_max = math.nan
                self.q_scales.append(math.nan)
            rec = DiagnosticsRecord(
                t=float(state.t),
                mass_u=grid.integrate(state.u),
                linf_u=float(np.max(np.abs(state.u))),
                linf_v=float(np.max(np.abs(state.v))),
                linf_w=float(np.max(np.abs(state.w))),
                min_v=float(np.min(state.v)),
                min_w=float(np.min(state.w)),
                grad_linf_v=float(np.max(gradient_magnitude(state.v, grid))),
                grad_linf_w=float(np.max(gradient_magnitude(state.w, grid))),
                energy_p=weighted_energy(state, self.p, f, grid),
                f_min=float(np.min(f)),
                f_max=float(np.max(f)),
                Q_max=q_max,
                excluded_cells=int(np.count_nonzero(excl)),
                blowup=blowup_check(state, self.cap),
            )
        self.records.append(rec)
        return rec

    __call__ = record

    def energy_series(self):
        return [(r.t, r.energy_p) for r in self.records]
