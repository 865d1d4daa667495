import json

import numpy as np
import pytest

from arcs.config import parse_config, parse_config_string
from arcs.errors import ParseError, ValidationError
from arcs.snapshots import write_snapshot

BASE = """\
[domain]
dim = 2
lengths = 1.0, 1.0
cells = 16, 16

[initial.u]
kind = gaussian
base = 40.0
amplitude = 400.0
center = 0.5, 0.5
width = 0.1

[initial.v]
kind = constant
value = 65.0

[initial.w]
kind = constant
value = 65.0

[model]
theorem_n = 2
alpha = 20.0
beta = 4.0
c0_override = 0.37

[model.chi]
family = "pow"
chat = 1.0
k = 2.0

[model.xi]
family = "pow"
chat = 1.0
k = 2.0

[time]
t_end = 0.1
"""


def test_minimal_file_resolves():
    text = "[domain]\ncells = 8\n[model]\nc0_override = 0.3\n"
    with pytest.raises(ValidationError):
        parse_config_string(text)
    cfg = parse_config_string(text, force_params=True)
    assert cfg.grid.dim == 1 and cfg.grid.cells == (8,)
    assert cfg.alpha > 0 and cfg.scheme.auto
    assert any("theorem scope" in w for w in cfg.warnings)


def test_reference_style_config_is_certified():
    cfg = parse_config_string(BASE)
    assert cfg.certified and cfg.witness is not None
    assert cfg.aux.eta1 > 10 and 0 < cfg.aux.c4 <= 1
    assert cfg.chi.eta_floor == cfg.aux.eta1
    assert {"weights.p", "weights.r", "weights.sigma", "output.interval"} <= set(cfg.derived)
    assert cfg.output_interval == pytest.approx(0.01)


def test_auto_alpha_is_riccati_limit():
    cfg = parse_config_string(BASE.replace("alpha = 20.0", "alpha = auto"))
    assert cfg.alpha == pytest.approx(2 * (1 + cfg.aux.eta1))
    assert "model.alpha" in cfg.derived


def test_unknown_key_reports_line():
    text = BASE.replace("t_end = 0.1", "t_end = 0.1\nbogus = 3")
    with pytest.raises(ParseError) as info:
        parse_config_string(text)
    lineno = text.splitlines().index("bogus = 3") + 1
    assert info.value.lineno == lineno
    assert str(info.value).startswith(f"line {lineno}:")


@pytest.mark.parametrize("text", [
    "[nowhere]\nx = 1\n",
    "[domain]\ncells = eight\n",
    "[domain]\ncells = 8\ncells = 9\n",
    "[time]\ndiffusion = magic\n",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_config_string(text)


def test_k_below_one_is_rejected():
    with pytest.raises(ValidationError) as info:
        parse_config_string(BASE.replace("k = 2.0", "k = 0.5", 1))
    assert info.value.field == "model.chi.k"


def test_negative_u0_rejected():
    text = BASE.replace("base = 40.0", "base = -500.0")
    with pytest.raises(ValidationError) as info:
        parse_config_string(text)
    assert info.value.field == "initial.u"


def test_uncertified_needs_force():
    text = BASE.replace("alpha = 20.0", "alpha = 5.0")
    with pytest.raises(ValidationError):
        parse_config_string(text)
    cfg = parse_config_string(text, force_params=True)
    assert not cfg.certified and cfg.witness is None and cfg.coefficients is None
    assert cfg.p == 2.0 and cfg.r == 0.0 and cfg.sigma == 0.0
    assert any(w.startswith("uncertified: alpha") for w in cfg.warnings)


def test_resolved_dict_has_no_auto(tmp_path):
    cfg = parse_config_string(BASE)
    path = tmp_path / "resolved.json"
    cfg.write_resolved(path)
    text = path.read_text()
    assert '"auto"' not in text
    data = json.loads(text)
    assert data["time"]["dt"] == "cfl"
    assert data["certified"] is True


def test_c0_estimate_is_cached():
    cache = {}
    text = BASE.replace("c0_override = 0.37\n", "")
    a = parse_config_string(text, cache=cache)
    b = parse_config_string(text, cache=cache)
    assert len(cache) == 1 and a.aux.c0 == b.aux.c0 and a.aux.c0_estimated


def test_file_initial_data(tmp_path):
    arr = np.full((16, 16), 3.0)
    write_snapshot(tmp_path / "u0.bin", arr)
    ini = tmp_path / "c.ini"
    head, rest = BASE.split("[initial.u]")
    rest = rest[rest.index("[initial.v]"):]
    ini.write_text(f"{head}[initial.u]\nkind = file\npath = {tmp_path / 'u0.bin'}\n\n{rest}")
    cfg = parse_config(ini, force_params=True)
    assert np.array_equal(cfg.initial_state().u, arr)
