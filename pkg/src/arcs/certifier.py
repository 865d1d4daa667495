"""Parameter algebra behind the boundedness result.

Given the dimension ``n`` and the Riccati constants ``alpha`` (attractant) and
``beta`` (repellent), :func:`certify` decides whether some ``delta`` in the open
interval ``J(n, beta)`` makes ``alpha`` exceed the threshold.  :func:`find_witness`
then searches for energy weights ``(p, r, sigma)`` and a slack ``eps0`` such that
the gradient quadratic form

    a1(eps) x^2 + a2 xy + a3 xz + a4 y^2 + a5 yz + a6 z^2

is negative definite (checked through the leading minors and, independently,
the eigenvalues of its symmetric matrix in the variable order ``(x, z, y)``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy.sparse.linalg import splu

from .errors import (BetaInfeasible, DenominatorNonpositive, Infeasible,
                     NegativeDiscriminant, NotFound)
from .model import Grid, SensitivitySpec

DELTA_GRID = 2048
GOLDEN_TOL = 1e-10

P_OFFSETS = np.geomspace(1e-3, 4.0, 32)
RS_VALUES = np.geomspace(1e-2, 1e2, 48)


@dataclass(frozen=True)
class Certificate:
    n: int
    alpha: float
    beta: float
    delta_star: float
    threshold_star: float
    feasible: bool
    J: tuple

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Witness:
    p: float
    r: float
    sigma: float
    eps0: float
    A1: float
    A2: float
    eigenvalues: tuple
    coefficients: tuple

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AuxConstants:
    eta1: float
    eta2: float
    c0: float
    c4: float
    theta: float
    c0_estimated: bool = True

    def as_dict(self):
        return asdict(self)


# -- condition on (alpha, beta) --------------------------------------------

def beta_feasible(n: int, beta: float) -> bool:
    return beta > n + math.sqrt(n / 2)


def interval_J(n: int, beta: float) -> tuple:
    b = beta - n
    rad = b * b - n / 2
    if not (b > 0 and rad > 0):
        raise BetaInfeasible(f"beta={beta} <= n + sqrt(n/2) for n={n}")
    root = math.sqrt(rad)
    return b - root, b + root


def discriminant_D(n: int, beta: float, delta: float) -> float:
    d = delta
    lead = n * d / 2 * (2 * beta + (2 * n - 1) * d)
    bracket = 2 * d * (beta - n) + n / 2 * (2 * n * (d + 1) ** 2 - (2 * d + 1) ** 2)
    return lead * bracket


def alpha_threshold(n: int, beta: float, delta: float) -> float:
    """Right-hand side of the alpha condition at a given delta."""
    d = delta
    denom = 2 * d * (beta - n) - d * d - n / 2
    if not denom > 0:
        raise DenominatorNonpositive(f"delta={delta} outside J(n={n}, beta={beta})")
    D = discriminant_D(n, beta, d)
    if D < 0:
        raise NegativeDiscriminant(f"D={D} < 0 at delta={delta}")
    num = n / 2 * (2 * d + 1) * ((n - 1) * d + n) + math.sqrt(D)
    return num / denom


def _golden_min(f, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def certify(n: int, alpha: float, beta: float, grid_points: int = DELTA_GRID) -> Certificate:
    """Minimise the alpha threshold over J and compare with ``alpha``.

    Dense uniform grid over the open interval, then golden-section refinement on
    the bracket around the best grid point.  One delta serves both clauses.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    if n < 2:
        raise ValueError("n must be >= 2")
    lo, hi = interval_J(n, beta)
    width = hi - lo
    deltas = lo + width * (np.arange(grid_points) + 0.5) / grid_points
    vals = np.array([alpha_threshold(n, beta, d) for d in deltas])
    i = int(np.argmin(vals))
    a = deltas[i - 1] if i > 0 else lo + 1e-3 * width / grid_points
    b = deltas[i + 1] if i < grid_points - 1 else hi - 1e-3 * width / grid_points
    d_star, t_star = _golden_min(lambda d: alpha_threshold(n, beta, d), a, b, GOLDEN_TOL)
    if vals[i] < t_star:
        d_star, t_star = float(deltas[i]), float(vals[i])
    return Certificate(n=n, alpha=float(alpha), beta=float(beta), delta_star=float(d_star),
                       threshold_star=float(t_star), feasible=bool(alpha > t_star),
                       J=(lo, hi))


# -- quadratic form ----------------------------------------------------------

def coefficients(p, r, sigma, alpha, beta, eps=0.0):
    a1 = -(1 - eps) * p * (p - 1)
    a2 = p * (p + 2 * r - 1)
    a3 = p * (p + 2 * sigma - 1)
    a4 = -r * (p + r + alpha)
    a5 = p * r + p * sigma + 2 * r * sigma
    a6 = -sigma * (-p + sigma + beta)
    return a1, a2, a3, a4, a5, a6


def form_matrix(a1, a2, a3, a4, a5, a6) -> np.ndarray:
    """Symmetric matrix of the form in the variable order (x, z, y)."""
    return np.array([[a1, a3 / 2, a2 / 2],
                     [a3 / 2, a6, a5 / 2],
                     [a2 / 2, a5 / 2, a4]], dtype=float)


def minors(a1, a2, a3, a4, a5, a6):
    """Leading principal minors of order 2 and 3 (works elementwise on arrays)."""
    A1 = a1 * a6 - (a3 / 2) ** 2
    A2 = (a1 * (a6 * a4 - (a5 / 2) ** 2)
          - (a3 / 2) * ((a3 / 2) * a4 - (a5 / 2) * (a2 / 2))
          + (a2 / 2) * ((a3 / 2) * (a5 / 2) - a6 * (a2 / 2)))
    return A1, A2


def quadratic_form(coeffs, x, y, z):
    a1, a2, a3, a4, a5, a6 = coeffs
    return a1 * x * x + a2 * x * y + a3 * x * z + a4 * y * y + a5 * y * z + a6 * z * z


def _margin(p, r, sigma, alpha, beta, eps=0.0):
    # scale-free margin: positive iff A1 > 0 and A2 < 0
    a = coefficients(p, r, sigma, alpha, beta, eps)
    scale = np.max(np.abs(np.stack(np.broadcast_arrays(*a))), axis=0)
    A1, A2 = minors(*a)
    return np.minimum(A1 / scale**2, -A2 / scale**3)


def _refine(x0, fun, lower, upper, tol=1e-8):
    """Coordinate pattern search inside a box (maximises ``fun``)."""
    x = np.array(x0, dtype=float)
    best = fun(x)
    step = 0.25
    while step > tol:
        improved = False
        for i in range(len(x)):
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] = min(max(trial[i] + sign * step, lower[i]), upper[i])
                if trial[i] == x[i]:
                    continue
                val = fun(trial)
                if val > best:
                    x, best, improved = trial, val, True
                    break
        if not improved:
            step /= 2
    return x, best


def find_witness(n: int, alpha: float, beta: float) -> Witness:
    cert = certify(n, alpha, beta)
    if not cert.feasible:
        raise Infeasible(f"alpha={alpha} does not exceed threshold {cert.threshold_star:.6g}")

    P = n / 2 + P_OFFSETS
    p, r, s = np.meshgrid(P, RS_VALUES, RS_VALUES, indexing="ij")
    margin = _margin(p, r, s, alpha, beta)
    # row-major argmax = lexicographically smallest (p, r, sigma) among the best
    idx = np.unravel_index(int(np.argmax(margin)), margin.shape)
    best_margin = float(margin[idx])
    box = {"p": (float(P[0]), float(P[-1])), "r": (1e-2, 1e2), "sigma": (1e-2, 1e2)}
    if not best_margin > 0:
        raise NotFound(f"no (p, r, sigma) in search box satisfies A1 > 0, A2 < 0 "
                       f"(best margin {best_margin:.3g}); box={box}",
                       best_margin=best_margin, box=box)

    # log-parametrise so that p > n/2 and r, sigma > 0 are kept during refinement
    def unpack(z):
        return n / 2 + math.exp(z[0]), math.exp(z[1]), math.exp(z[2])

    def fun(z):
        a = coefficients(*unpack(z), alpha, beta)
        scale = max(abs(c) for c in a)
        A1, A2 = minors(*a)
        return min(A1 / scale**2, -A2 / scale**3)

    z0 = (math.log(p[idx] - n / 2), math.log(r[idx]), math.log(s[idx]))
    lower = (math.log(P_OFFSETS[0]), math.log(RS_VALUES[0]), math.log(RS_VALUES[0]))
    upper = (math.log(P_OFFSETS[-1]), math.log(RS_VALUES[-1]), math.log(RS_VALUES[-1]))
    z, _ = _refine(z0, fun, lower, upper)
    pw, rw, sw = unpack(z)

    try:
        return verify_weights(pw, rw, sw, alpha, beta)
    except NotFound as exc:
        raise NotFound(str(exc), best_margin=best_margin, box=box) from None


def slack_eps0(p, r, sigma, alpha, beta, tol=1e-6) -> float:
    """0.9 times the largest eps in (0, 1) keeping A1(eps) > 0 and A2(eps) < 0."""
    def ok(eps):
        A1, A2 = minors(*coefficients(p, r, sigma, alpha, beta, eps))
        return A1 > 0 and A2 < 0

    if not ok(0.0):
        raise NotFound(f"minors fail at eps=0 for p={p}, r={r}, sigma={sigma}")
    if ok(1.0 - tol):
        return 0.9
    lo, hi = 0.0, 1.0
    while hi - lo > tol or lo == 0.0:
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.9 * lo


def verify_weights(p, r, sigma, alpha, beta) -> Witness:
    """Build a Witness for given weights, cross-checking minors against eigenvalues."""
    eps0 = slack_eps0(p, r, sigma, alpha, beta)
    a = coefficients(p, r, sigma, alpha, beta, eps0)
    A1, A2 = minors(*a)
    eig = np.linalg.eigvalsh(form_matrix(*a))
    scale = max(abs(c) for c in a)
    if not (A1 > 0 and A2 < 0 and np.all(eig < -1e-12 * scale)):
        raise NotFound(f"weights fail verification at eps0={eps0}: A1={A1:.3g}, "
                       f"A2={A2:.3g}, eigenvalues={eig}")
    return Witness(p=float(p), r=float(r), sigma=float(sigma), eps0=eps0,
                   A1=float(A1), A2=float(A2),
                   eigenvalues=tuple(float(e) for e in eig),
                   coefficients=tuple(float(c) for c in a))


# -- auxiliary constants -----------------------------------------------------

def eta_bound(z0_min: float, m: float, c0: float, rtol: float = 1e-12) -> float:
    """Lower bound for the signal: sup over tau of min(e^-2tau z0, c0 m (1 - e^-tau)).

    With q = e^-tau the two branches cross where z0 q^2 = c0 m (1 - q).  The
    crossing is bisected in p = 1 - q, which keeps relative accuracy when
    c0 m >> z0, and the lower end of the bracket is returned so the value
    stays a valid lower bound.
    """
    if z0_min <= 0:
        return 0.0
    K = c0 * m
    lo, hi = 0.0, 1.0
    while hi - lo > rtol * hi:
        p = (lo + hi) / 2
        if z0_min * (1 - p) ** 2 > K * p:
            lo = p
        else:
            hi = p
    return K * lo


def _source_cells(grid: Grid) -> list:
    # corners, edge midpoints and centre, deduplicated
    picks = [(0, n // 2, n - 1) for n in grid.cells]
    if grid.dim == 1:
        return [(i,) for i in dict.fromkeys(picks[0])]
    out = []
    for i in picks[0]:
        for j in picks[1]:
            if (i, j) not in out:
                out.append((i, j))
    return out


def kernel_c0_estimate(grid: Grid, tau: float = 1.0, steps: int = 64) -> float:
    """Estimate a floor for the Neumann kernel of phi_t = lap(phi) - phi.

    A unit-mass datum in one cell is evolved by backward Euler to time tau;
    the smallest value over all cells and all sampled sources is returned.
    """
    import scipy.sparse as sp
    from .solver import laplacian_matrix

    N = int(np.prod(grid.cells))
    dt = tau / steps
    A = (1 + dt) * sp.identity(N, format="csc") - dt * laplacian_matrix(grid)
    lu = splu(A.tocsc())
    c0 = math.inf
    for src in _source_cells(grid):
        phi = np.zeros(grid.cells)
        phi[src] = 1.0 / grid.cell_volume
        phi = phi.ravel()
        for _ in range(steps):
            phi = lu.solve(phi)
        c0 = min(c0, float(phi.min()))
    return c0


def c4_bound(chi: SensitivitySpec, xi: SensitivitySpec, r: float, sigma: float) -> float:
    """Uniform lower bound of the energy weight, exp(-r T_chi - sigma T_xi)."""
    expo = 0.0
    if r != 0:
        expo += r * float(chi.tail(chi.eta_floor))
    if sigma != 0:
        expo += sigma * float(xi.tail(xi.eta_floor))
    return math.exp(-expo)


def theta_exponent(p: float, n: int) -> float:
    return (p * n / 2 - n / 2) / (p * n / 2 + 1 - n / 2)
