"""Run configuration: INI parsing, validation and resolution of ``auto`` fields.

Sections are ``[domain]``, ``[initial.u|v|w]``, ``[model]``, ``[model.chi]``,
``[model.xi]``, ``[weights]``, ``[time]`` and ``[output]``.  Every key is
optional; unknown sections or keys are rejected with their line number.

Resolution order matters because later quantities depend on earlier ones:
grid and initial data -> mass m0 and signal minima -> kernel floor c0 ->
eta1, eta2 -> sensitivity floors -> alpha, beta -> certificate -> weights ->
c4 and theta.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
import json
import re

import numpy as np

from . import certifier
from .certifier import AuxConstants
from .errors import (ArcsError, BetaInfeasible, DivergentTail, Infeasible, NotFound,
                     ParseError, ValidationError)
from .model import Grid, SensitivitySpec, SystemState, max_alpha, validate_hypotheses
from .snapshots import read_snapshot
from .solver import SchemeConfig

AUTO = "auto"


def _strip(raw):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


def _float(raw):
    return float(_strip(raw))


def _int(raw):
    val = float(_strip(raw))
    if val != int(val):
        raise ValueError(f"{raw!r} is not an integer")
    return int(val)


def _floats(raw):
    parts = [p for p in re.split(r"[,\s]+", _strip(raw).strip("[]")) if p]
    return tuple(float(p) for p in parts)


def _ints(raw):
    return tuple(_int(p) for p in re.split(r"[,\s]+", _strip(raw).strip("[]")) if p)


def _bool(raw):
    val = _strip(raw).lower()
    if val in ("true", "yes", "on", "1"):
        return True
    if val in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"{raw!r} is not a boolean")


def _or_auto(conv):
    def parse(raw):
        return AUTO if _strip(raw).lower() == AUTO else conv(raw)
    return parse


def _or_none(conv):
    def parse(raw):
        return None if _strip(raw).lower() in ("none", AUTO, "") else conv(raw)
    return parse


def _choice(*options):
    def parse(raw):
        val = _strip(raw)
        if val not in options:
            raise ValueError(f"expected one of {options}, got {val!r}")
        return val
    return parse


_INITIAL = {
    "kind": (_choice("constant", "cosine", "gaussian", "file"), None),
    "value": (_float, 1.0),
    "base": (_float, 0.0),
    "amplitude": (_float, 1.0),
    "center": (_floats, None),
    "width": (_float, 0.1),
    "path": (_strip, None),
}
_SENS = {
    "family": (_choice("pow", "const", "table"), "pow"),
    "chat": (_float, 1.0),
    "k": (_float, 2.0),
    "eta_floor": (_or_auto(_float), AUTO),
    "holder": (_or_none(_float), None),
    "s": (_floats, None),
    "values": (_floats, None),
}
SCHEMA = {
    "domain": {
        "dim": (_int, None),
        "lengths": (_floats, (1.0,)),
        "cells": (_ints, (64,)),
    },
    "initial.u": _INITIAL,
    "initial.v": _INITIAL,
    "initial.w": _INITIAL,
    "model": {
        "theorem_n": (_int, 2),
        "alpha": (_or_auto(_float), AUTO),
        "beta": (_or_auto(_float), AUTO),
        "c0_override": (_or_none(_float), None),
    },
    "model.chi": _SENS,
    "model.xi": _SENS,
    "weights": {
        "p": (_or_auto(_float), AUTO),
        "r": (_or_auto(_float), AUTO),
        "sigma": (_or_auto(_float), AUTO),
    },
    "time": {
        "t_end": (_float, 1.0),
        "dt": (_or_auto(_float), AUTO),
        "dt_max": (_float, 1e-2),
        "cfl": (_float, 0.5),
        "diffusion": (_choice("implicit", "explicit"), "implicit"),
        "linear_tol": (_float, 1e-10),
        "u_floor": (_float, 1e-12),
        "blowup_factor": (_float, 1e6),
    },
    "output": {
        "directory": (_strip, "arcs_out"),
        "interval": (_or_auto(_float), AUTO),
        "snapshots": (_bool, True),
    },
}

_DEFAULT_INITIAL = {
    "u": {"kind": "gaussian", "base": 1.0, "amplitude": 1.0},
    "v": {"kind": "constant", "value": 1.0},
    "w": {"kind": "constant", "value": 1.0},
}


def scalar_keys() -> list:
    """Dotted names of every config key (used by sweeps)."""
    return [f"{sec}.{key}" for sec, keys in SCHEMA.items() for key in keys]


# -- reading -----------------------------------------------------------------

def _line_map(text):
    lines = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", stripped)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), i)
    return lines


def read_ini(path):
    """Parse the file into a ConfigParser plus a (section, key) -> line map."""
    with open(path) as fh:
        text = fh.read()
    return read_ini_string(text)


def read_ini_string(text):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   strict=True, default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError(f"malformed line {exc.errors[0][1] if exc.errors else ''}",
                         lineno) from None
    lines = _line_map(text)
    for section in cp.sections():
        if section not in SCHEMA:
            raise ParseError(f"unknown section [{section}]", lines.get((section, None)))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", lines.get((section, key)))
    return cp, lines


def _typed(cp, lines):
    out = {}
    for section, keys in SCHEMA.items():
        vals = {}
        given = cp[section] if cp.has_section(section) else {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    vals[key] = conv(given[key])
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"bad value for {section}.{key}: {exc}",
                                     lines.get((section, key))) from None
            else:
                vals[key] = default
        vals["__given__"] = set(given)
        out[section] = vals
    return out


# -- resolution --------------------------------------------------------------

@dataclass
class RunConfig:
    theorem_n: int
    grid: Grid
    chi: SensitivitySpec
    xi: SensitivitySpec
    alpha: float
    beta: float
    p: float
    r: float
    sigma: float
    scheme: SchemeConfig
    initial: dict
    output_dir: str
    output_interval: float
    snapshots: bool
    blowup_factor: float
    c0_override: float | None
    force_params: bool
    m0: float
    aux: AuxConstants
    certificate: certifier.Certificate | None
    witness: certifier.Witness | None
    hypotheses: dict
    certified: bool
    derived: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    _state: SystemState | None = field(default=None, repr=False)

    def initial_state(self) -> SystemState:
        if self._state is None:
            self._state = build_initial_state(self.grid, self.initial)
        return self._state.copy()

    @property
    def blowup_cap(self) -> float:
        return self.blowup_factor * max(float(np.max(np.abs(self.initial_state().u))), 1e-300)

    @property
    def coefficients(self):
        return None if self.witness is None else self.witness.coefficients

    def resolved_dict(self) -> dict:
        def spec(s):
            d = {"family": s.kind, "chat": s.chat, "eta_floor": s.eta_floor, "holder": s.holder}
            if s.kind == "pow":
                d["k"] = s.k
            if s.kind == "table":
                d["s"] = list(s.table_s)
                d["values"] = list(s.table_values)
            return d

        sch = self.scheme
        return {
            "domain": {"dim": self.grid.dim, "lengths": list(self.grid.lengths),
                       "cells": list(self.grid.cells)},
            "initial": self.initial,
            "model": {"theorem_n": self.theorem_n, "alpha": self.alpha, "beta": self.beta,
                      "c0": self.aux.c0, "c0_estimated": self.aux.c0_estimated,
                      "chi": spec(self.chi), "xi": spec(self.xi)},
            "weights": {"p": self.p, "r": self.r, "sigma": self.sigma},
            "time": {"t_end": sch.t_end, "dt": sch.dt if not sch.auto else "cfl",
                     "dt_max": sch.dt_max, "cfl": sch.cfl, "diffusion": sch.diffusion_mode,
                     "linear_tol": sch.linear_tol, "u_floor": sch.u_floor,
                     "blowup_factor": self.blowup_factor, "blowup_cap": self.blowup_cap},
            "output": {"directory": self.output_dir, "interval": self.output_interval,
                       "snapshots": self.snapshots},
            "m0": self.m0,
            "aux": self.aux.as_dict(),
            "certificate": None if self.certificate is None else self.certificate.as_dict(),
            "witness": None if self.witness is None else self.witness.as_dict(),
            "hypotheses": {k: v.as_dict() for k, v in self.hypotheses.items()},
            "certified": self.certified,
            "force_params": self.force_params,
            "derived_fields": self.derived,
            "warnings": self.warnings,
        }

    def write_resolved(self, path):
        with open(path, "w") as fh:
            json.dump(self.resolved_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_initial_state(grid: Grid, initial: dict) -> SystemState:
    fields = {}
    coords = grid.mesh()
    for name in ("u", "v", "w"):
        g = initial[name]
        kind = g["kind"]
        if kind == "constant":
            arr = np.full(grid.shape, float(g["value"]))
        elif kind == "cosine":
            prod = np.ones(grid.shape)
            for x, L in zip(coords, grid.lengths):
                prod = prod * np.cos(np.pi * x / L)
            arr = g["base"] + g["amplitude"] * prod
        elif kind == "gaussian":
            r2 = sum((x - c) ** 2 for x, c in zip(coords, g["center"]))
            arr = g["base"] + g["amplitude"] * np.exp(-r2 / (2 * g["width"] ** 2))
        else:
            arr = read_snapshot(g["path"])
            if arr.shape != grid.shape:
                raise ValidationError(f"initial.{name}.path",
                                      f"snapshot shape {arr.shape} != grid {grid.shape}")
        fields[name] = arr
    return SystemState(0.0, fields["u"], fields["v"], fields["w"])


def _grid(d):
    cells = d["cells"]
    lengths = d["lengths"]
    dim = d["dim"] if d["dim"] is not None else max(len(cells), len(lengths), 1)
    if dim not in (1, 2):
        raise ValidationError("domain.dim", "only 1 or 2 supported")
    if len(cells) == 1:
        cells = cells * dim
    if len(lengths) == 1:
        lengths = lengths * dim
    try:
        return Grid(dim, lengths, cells)
    except ValueError as exc:
        raise ValidationError("domain", str(exc)) from None


def _initial(typed, grid):
    out = {}
    for name in ("u", "v", "w"):
        sec = typed[f"initial.{name}"]
        given = sec["__given__"]
        g = dict(_DEFAULT_INITIAL[name]) if "kind" not in given else {"kind": sec["kind"]}
        kind = g["kind"]
        allowed = {"constant": ("value",), "cosine": ("base", "amplitude"),
                   "gaussian": ("base", "amplitude", "center", "width"),
                   "file": ("path",)}[kind]
        for key in given - {"kind"}:
            if key not in allowed:
                raise ValidationError(f"initial.{name}.{key}", f"not used by kind {kind!r}")
        for key in allowed:
            if key in given:
                g[key] = sec[key]
            elif key not in g:
                g[key] = _INITIAL[key][1]
        if kind == "gaussian":
            if g.get("center") is None:
                g["center"] = tuple(L / 2 for L in grid.lengths)
            if len(g["center"]) != grid.dim:
                raise ValidationError(f"initial.{name}.center", "needs one entry per axis")
            g["center"] = list(g["center"])
            if not g["width"] > 0:
                raise ValidationError(f"initial.{name}.width", "must be positive")
        if kind == "file" and not g.get("path"):
            raise ValidationError(f"initial.{name}.path", "required for kind 'file'")
        out[name] = g
    return out


def _sensitivity(sec, name, eta):
    fam = sec["family"]
    floor = eta if sec["eta_floor"] == AUTO else sec["eta_floor"]
    field_ = f"model.{name}"
    try:
        if fam == "pow":
            if not sec["k"] > 1:
                raise ValidationError(f"{field_}.k",
                                      f"k={sec['k']} <= 1 makes the tail integral diverge")
            return SensitivitySpec.power(sec["chat"], sec["k"], floor, holder=sec["holder"])
        if fam == "const":
            return SensitivitySpec.constant(sec["chat"], floor, holder=sec["holder"])
        if sec["s"] is None or sec["values"] is None:
            raise ValidationError(f"{field_}.s", "table family needs s and values")
        floor = max(floor, sec["s"][0]) if sec["eta_floor"] == AUTO else floor
        return SensitivitySpec.tabulated(sec["s"], sec["values"], floor, holder=sec["holder"])
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(field_, str(exc)) from None


def resolve(typed, force_params=False, cache=None) -> RunConfig:
    derived = []
    warnings = []
    grid = _grid(typed["domain"])
    initial = _initial(typed, grid)
    state = build_initial_state(grid, initial)
    for name in ("u", "v", "w"):
        arr = getattr(state, name)
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"initial.{name}", "non-finite values")
    if np.any(state.u < 0):
        raise ValidationError("initial.u", "must be nonnegative")

    model = typed["model"]
    n = model["theorem_n"]
    if n < 2:
        raise ValidationError("model.theorem_n", "the boundedness theorem needs n >= 2")
    if grid.dim != n:
        warnings.append(f"mesh dimension {grid.dim} differs from theorem_n={n}: "
                        "outside theorem scope")
    warnings.append("box domain with corners; the theory assumes a smooth boundary")

    m0 = grid.integrate(state.u)
    if model["c0_override"] is not None:
        c0, c0_est = model["c0_override"], False
        if not c0 > 0:
            raise ValidationError("model.c0_override", "must be positive")
    else:
        key = ("c0", grid)
        if cache is not None and key in cache:
            c0 = cache[key]
        else:
            c0 = certifier.kernel_c0_estimate(grid)
            if cache is not None:
                cache[key] = c0
        c0_est = True
        derived.append("model.c0")
        warnings.append("c0 is a numerical stand-in for the Neumann kernel floor")
    eta1 = certifier.eta_bound(max(float(state.v.min()), 0.0), m0, c0)
    eta2 = certifier.eta_bound(max(float(state.w.min()), 0.0), m0, c0)

    chi = _sensitivity(typed["model.chi"], "chi", eta1)
    xi = _sensitivity(typed["model.xi"], "xi", eta2)
    for name, sec in (("chi", typed["model.chi"]), ("xi", typed["model.xi"])):
        if sec["eta_floor"] == AUTO:
            derived.append(f"model.{name}.eta_floor")

    consts = {}
    for key, spec in (("alpha", chi), ("beta", xi)):
        val = model[key]
        if val == AUTO:
            try:
                val = max_alpha(spec)
            except ArcsError as exc:
                raise ValidationError(f"model.{key}", f"auto needs the pow family ({exc})") from None
            derived.append(f"model.{key}")
        if not val > 0:
            raise ValidationError(f"model.{key}", "must be positive")
        consts[key] = val
    alpha, beta = consts["alpha"], consts["beta"]

    problems = []
    hyps = {"chi": validate_hypotheses(chi, alpha), "xi": validate_hypotheses(xi, beta)}
    for name, rep in hyps.items():
        for c in rep.failures():
            problems.append(f"{name}: hypothesis {c.name} fails ({c.detail})")

    cert = None
    try:
        cert = certifier.certify(n, alpha, beta)
        if not cert.feasible:
            problems.append(f"alpha={alpha:.6g} does not exceed threshold "
                            f"{cert.threshold_star:.6g} (beta={beta:.6g})")
    except BetaInfeasible as exc:
        problems.append(str(exc))

    weights = typed["weights"]
    witness = None
    p, r, sigma = weights["p"], weights["r"], weights["sigma"]
    autos = [k for k in ("p", "r", "sigma") if weights[k] == AUTO]
    try:
        if autos:
            if cert is None or not cert.feasible:
                raise Infeasible("no certificate, weights cannot be searched")
            found = certifier.find_witness(n, alpha, beta)
            p = found.p if p == AUTO else p
            r = found.r if r == AUTO else r
            sigma = found.sigma if sigma == AUTO else sigma
            derived.extend(f"weights.{k}" for k in autos)
        witness = certifier.verify_weights(p, r, sigma, alpha, beta)
    except (NotFound, Infeasible) as exc:
        problems.append(f"weights: {exc}")

    if witness is None:
        p = n / 2 + 1 if p == AUTO else p
        r = 0.0 if r == AUTO else r
        sigma = 0.0 if sigma == AUTO else sigma
    if not p > 1 or r < 0 or sigma < 0:
        raise ValidationError("weights", "need p > 1 and r, sigma >= 0")

    certified = not problems
    if not certified:
        if not force_params:
            raise ValidationError("model", "parameters not certified: " + "; ".join(problems)
                                  + " (use --force-params to run anyway)")
        warnings.extend(f"uncertified: {msg}" for msg in problems)

    try:
        c4 = certifier.c4_bound(chi, xi, r, sigma)
    except DivergentTail as exc:
        c4 = 0.0
        warnings.append(f"c4 set to 0: {exc}")
    aux = AuxConstants(eta1=eta1, eta2=eta2, c0=c0, c4=c4,
                       theta=certifier.theta_exponent(p, n), c0_estimated=c0_est)

    t = typed["time"]
    try:
        scheme = SchemeConfig(t_end=t["t_end"], dt=t["dt"], dt_max=t["dt_max"], cfl=t["cfl"],
                              diffusion_mode=t["diffusion"], linear_tol=t["linear_tol"],
                              u_floor=t["u_floor"])
    except ValueError as exc:
        raise ValidationError("time", str(exc)) from None
    if not t["blowup_factor"] > 0:
        raise ValidationError("time.blowup_factor", "must be positive")

    out = typed["output"]
    interval = out["interval"]
    if interval == AUTO:
        interval = scheme.t_end / 10 if scheme.t_end > 0 else 1.0
        derived.append("output.interval")
    if not interval > 0:
        raise ValidationError("output.interval", "must be positive")

    return RunConfig(theorem_n=n, grid=grid, chi=chi, xi=xi, alpha=alpha, beta=beta,
                     p=p, r=r, sigma=sigma, scheme=scheme, initial=initial,
                     output_dir=out["directory"], output_interval=interval,
                     snapshots=out["snapshots"], blowup_factor=t["blowup_factor"],
                     c0_override=model["c0_override"], force_params=force_params, m0=m0,
                     aux=aux, certificate=cert, witness=witness, hypotheses=hyps,
                     certified=certified, derived=derived, warnings=warnings, _state=state)


def parse_config(path, force_params=False, cache=None) -> RunConfig:
    cp, lines = read_ini(path)
    return resolve(_typed(cp, lines), force_params=force_params, cache=cache)


def parse_config_string(text, force_params=False, cache=None) -> RunConfig:
    cp, lines = read_ini_string(text)
    return resolve(_typed(cp, lines), force_params=force_params, cache=cache)
