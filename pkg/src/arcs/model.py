"""Domain geometry, field state and signal-dependent sensitivity functions.

A sensitivity function (the attractant's chi or the repellent's xi) is a
positive, decreasing, integrable function on ``[eta_floor, inf)``.  The built-in
family is the power law ``chat * (1 + s)**(-k)`` whose derivative, tail and
antiderivative are all closed form; ``const`` exists for exploratory runs with
constant sensitivities and ``table`` is an escape hatch for user data.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
import math

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DivergentTail, DomainError, Unsupported

FAMILIES = ("pow", "const", "table")

# hypothesis sampling: the floor plus 511 geometric offsets up to 1e6
N_HYPOTHESIS_SAMPLES = 512
HYPOTHESIS_SPAN = 1e6


@dataclass(frozen=True)
class Grid:
    """Cell-centred structured grid on the box ``[0, L_1] x ... x [0, L_dim]``."""

    dim: int
    lengths: tuple
    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.cells) != self.dim:
            raise ValueError("lengths and cells need one entry per axis")
        if any(c < 4 for c in self.cells):
            raise ValueError("at least 4 cells per axis")
        if any(not (L > 0 and math.isfinite(L)) for L in self.lengths):
            raise ValueError("lengths must be positive and finite")

    @property
    def h(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def centers(self) -> tuple:
        """1D arrays of cell-centre coordinates, one per axis."""
        return tuple((np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.h))

    def mesh(self) -> tuple:
        return np.meshgrid(*self.centers(), indexing="ij")

    def integrate(self, field) -> float:
        return float(np.sum(field) * self.cell_volume)


@dataclass(frozen=True)
class SystemState:
    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def check(self, grid: Grid):
        for name in ("u", "v", "w"):
            arr = getattr(self, name)
            if arr.shape != grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, grid is {grid.shape}")

    def copy(self) -> "SystemState":
        return SystemState(self.t, self.u.copy(), self.v.copy(), self.w.copy())


@dataclass(frozen=True)
class SensitivitySpec:
    """A sensitivity function together with its hypothesis constants.

    ``alpha_like`` is the Riccati constant (alpha for chi, beta for xi) and
    ``c_bound`` the bound on ``s * value(s)``; both are optional metadata that
    validation fills in.  ``holder`` records the assumed Hoelder exponent of
    the derivative; it is never checked numerically.
    """

    kind: str = "pow"
    chat: float = 1.0
    k: float = 2.0
    eta_floor: float = 0.0
    alpha_like: float | None = None
    c_bound: float | None = None
    holder: float | None = None
    table_s: tuple = ()
    table_values: tuple = ()

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown sensitivity family {self.kind!r}")
        if not self.eta_floor >= 0:
            raise ValueError("eta_floor must be >= 0")
        if self.kind in ("pow", "const") and not self.chat > 0:
            raise ValueError("chat must be positive")
        if self.kind == "pow" and not self.k > 0:
            raise ValueError("k must be positive")
        if self.kind == "table":
            s = np.asarray(self.table_s, dtype=float)
            vals = np.asarray(self.table_values, dtype=float)
            if s.ndim != 1 or s.size < 3 or s.shape != vals.shape:
                raise ValueError("table needs >= 3 matching (s, value) nodes")
            if np.any(np.diff(s) <= 0) or np.any(vals <= 0):
                raise ValueError("table nodes must increase and values be positive")
            if s[0] > self.eta_floor:
                raise ValueError("table must cover eta_floor")
            object.__setattr__(self, "table_s", tuple(s.tolist()))
            object.__setattr__(self, "table_values", tuple(vals.tolist()))

    @classmethod
    def power(cls, chat=1.0, k=2.0, eta_floor=0.0, **kw):
        return cls(kind="pow", chat=chat, k=k, eta_floor=eta_floor, **kw)

    @classmethod
    def constant(cls, value, eta_floor=0.0, **kw):
        return cls(kind="const", chat=value, k=0.0, eta_floor=eta_floor, **kw)

    @classmethod
    def tabulated(cls, s, values, eta_floor=None, **kw):
        s = tuple(float(x) for x in s)
        return cls(kind="table", chat=float(values[0]), k=0.0,
                   eta_floor=s[0] if eta_floor is None else eta_floor,
                   table_s=s, table_values=tuple(float(x) for x in values), **kw)

    def with_floor(self, eta_floor) -> "SensitivitySpec":
        return replace(self, eta_floor=float(eta_floor))

    # -- tabulated internals ------------------------------------------------
    @cached_property
    def _pchip(self):
        return PchipInterpolator(np.asarray(self.table_s), np.asarray(self.table_values),
                                 extrapolate=False)

    @cached_property
    def _pchip_anti(self):
        return self._pchip.antiderivative()

    @cached_property
    def _tail_exponent(self):
        # power-law decay rate fitted to the last two nodes, used past the table
        s, v = self.table_s, self.table_values
        return -math.log(v[-1] / v[-2]) / math.log((1 + s[-1]) / (1 + s[-2]))

    # -- vectorised evaluation (no domain checks) ---------------------------
    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "pow":
            return self.chat * (1.0 + s) ** (-self.k)
        if self.kind == "const":
            return np.full_like(s, self.chat)
        s_end, v_end, q = self.table_s[-1], self.table_values[-1], self._tail_exponent
        inside = s <= s_end
        tail = v_end * ((1.0 + s) / (1.0 + s_end)) ** (-q)
        return np.where(inside, self._pchip(np.minimum(s, s_end)), tail)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "pow":
            return -self.k * self.chat * (1.0 + s) ** (-self.k - 1.0)
        if self.kind == "const":
            return np.zeros_like(s)
        s_end, v_end, q = self.table_s[-1], self.table_values[-1], self._tail_exponent
        inside = s <= s_end
        tail = -q * v_end / (1.0 + s_end) * ((1.0 + s) / (1.0 + s_end)) ** (-q - 1.0)
        return np.where(inside, self._pchip(np.minimum(s, s_end), 1), tail)

    def tail(self, s):
        """Integral of the sensitivity over ``[s, inf)``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "pow":
            if self.k <= 1:
                raise DivergentTail(f"power family with k={self.k} <= 1 is not integrable")
            return self.chat * (1.0 + s) ** (1.0 - self.k) / (self.k - 1.0)
        if self.kind == "const":
            raise DivergentTail("constant sensitivity is not integrable on a half line")
        q = self._tail_exponent
        if q <= 1:
            raise DivergentTail(f"tabulated tail decays like s^-{q:.3g}, not integrable")
        s_end, v_end = self.table_s[-1], self.table_values[-1]
        far = v_end * (1.0 + s_end) / (q - 1.0)
        past = far * ((1.0 + s) / (1.0 + s_end)) ** (1.0 - q)
        anti = self._pchip_anti
        inside = anti(s_end) - anti(np.minimum(s, s_end)) + far
        return np.where(s <= s_end, inside, past)

    def antiderivative(self, s):
        """Integral of the sensitivity over ``[eta_floor, s]``."""
        s = np.asarray(s, dtype=float)
        eta = self.eta_floor
        if self.kind == "pow":
            if self.k == 1:
                return self.chat * np.log((1.0 + s) / (1.0 + eta))
            return self.chat * ((1.0 + eta) ** (1.0 - self.k)
                                - (1.0 + s) ** (1.0 - self.k)) / (self.k - 1.0)
        if self.kind == "const":
            return self.chat * (s - eta)
        s_end = self.table_s[-1]
        anti = self._pchip_anti
        inside = anti(np.minimum(s, s_end)) - anti(eta)
        q = self._tail_exponent
        v_end = self.table_values[-1]
        if q == 1:
            extra = v_end * (1 + s_end) * np.log((1.0 + s) / (1.0 + s_end))
        else:
            extra = v_end * (1 + s_end) / (1 - q) * (((1.0 + s) / (1.0 + s_end)) ** (1 - q) - 1)
        return np.where(s <= s_end, inside, anti(s_end) - anti(eta) + extra)


def clamp_to_floor(spec: SensitivitySpec, s):
    """Clamp ``s`` up to the admissible floor; returns (clamped, n_clamped)."""
    s = np.asarray(s, dtype=float)
    below = s < spec.eta_floor
    n = int(np.count_nonzero(below))
    if n:
        s = np.where(below, spec.eta_floor, s)
    return s, n


def sensitivity_eval(spec: SensitivitySpec, s: float):
    """Return ``(value, derivative, tail)`` at a scalar ``s >= eta_floor``."""
    s = float(s)
    if s < spec.eta_floor:
        raise DomainError(f"s={s} below eta_floor={spec.eta_floor}")
    tail = float(spec.tail(s))
    return float(spec.value(s)), float(spec.derivative(s)), tail


def max_alpha(spec: SensitivitySpec) -> float:
    """Largest alpha with ``chi' + alpha*chi**2 <= 0`` on ``[eta_floor, inf)``.

    For the power family the inequality reduces to
    ``alpha * chat <= k * (1+s)**(k-1)`` whose right side is smallest at the floor.
    """
    if spec.kind != "pow":
        raise Unsupported(f"max_alpha has no closed form for {spec.kind!r}; "
                          "use validate_hypotheses")
    if spec.k < 1:
        raise ValueError("max_alpha needs k >= 1")
    return spec.k * (1.0 + spec.eta_floor) ** (spec.k - 1.0) / spec.chat


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""
    worst_s: float | None = None


@dataclass(frozen=True)
class HypothesisReport:
    alpha_like: float
    c_bound: float
    checks: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "alpha_like": self.alpha_like,
            "c_bound": self.c_bound,
            "passed": self.passed,
            "checks": {c.name: {"passed": c.passed, "detail": c.detail, "worst_s": c.worst_s}
                       for c in self.checks},
        }


def hypothesis_samples(spec: SensitivitySpec) -> np.ndarray:
    eta = spec.eta_floor
    offsets = np.geomspace(1e-6, HYPOTHESIS_SPAN, N_HYPOTHESIS_SAMPLES - 1)
    s = eta + np.concatenate(([0.0], offsets))
    if spec.kind == "pow" and spec.k > 1:
        # analytic maximiser of s*chi(s)
        s_star = 1.0 / (spec.k - 1.0)
        if s_star > eta:
            s = np.sort(np.append(s, s_star))
    return s


def validate_hypotheses(spec: SensitivitySpec, alpha_like: float) -> HypothesisReport:
    """Check positivity, integrability, ``s*chi(s)`` bound and the Riccati inequality.

    Every check is sampled on :func:`hypothesis_samples`.  The product bound is
    declared unbounded when ``s*value(s)`` still grows by more than 50% over the
    final decade of the sample.  Failures are recorded, never raised.
    """
    s = hypothesis_samples(spec)
    val = spec.value(s)
    der = spec.derivative(s)
    checks = [HypothesisCheck("regularity", True, "Hoelder exponent recorded, not checked")]

    bad = ~(val > 0)
    checks.append(HypothesisCheck(
        "positive", not bad.any(),
        "value > 0 on sample" if not bad.any() else "value <= 0",
        float(s[bad][0]) if bad.any() else None))

    try:
        t = float(spec.tail(spec.eta_floor))
        ok = math.isfinite(t)
        checks.append(HypothesisCheck("integrable_tail", ok, f"tail(eta_floor) = {t:.6g}"))
    except DivergentTail as exc:
        checks.append(HypothesisCheck("integrable_tail", False, str(exc)))

    g = s * val
    i_max = int(np.argmax(g))
    s_end = s[-1]
    g_end = float(s_end * spec.value(s_end))
    g_dec = float(s_end / 10 * spec.value(s_end / 10))
    growing = g_end > 1.5 * g_dec
    c_bound = 1.01 * float(g[i_max])
    checks.append(HypothesisCheck(
        "product_bound", not growing,
        f"sup s*value = {g[i_max]:.6g}" + (" (still growing)" if growing else ""),
        float(s[i_max])))

    resid = der + alpha_like * val**2
    scale = np.abs(der) + abs(alpha_like) * val**2
    viol = resid > 1e-12 * scale
    worst = int(np.argmax(np.where(scale > 0, resid / np.where(scale > 0, scale, 1), resid)))
    checks.append(HypothesisCheck(
        "riccati", not viol.any(),
        f"max chi'+alpha*chi^2 = {resid[worst]:.6g}",
        float(s[viol][0]) if viol.any() else float(s[worst])))

    return HypothesisReport(alpha_like=float(alpha_like), c_bound=c_bound, checks=tuple(checks))
