import pytest
from hypothesis import given, settings, strategies as st

from qbcharge.exceptions import ManifestError
from qbcharge.manifest import (ENV_OUTPUT_ROOT, ENV_THREADS, parse_manifest,
                               parse_manifest_text, serialize_manifest, with_overrides)

MINIMAL = """
[transmon]
ej_over_ec = 100
[sweep]
g = 4e-3
q = 0.5
"""

GRID = """
[run]
name = density
[sweep]
g = 4e-3, 8e-3   # two couplings
q = 0:1:0.05
tau = 1
c = 1
"""


def test_minimal_manifest_gets_defaults():
    m = parse_manifest_text(MINIMAL)
    assert m.product_size == 1
    assert m.transmon.battery_levels == 15
    assert m.transmon.charge_cutoff == 35
    assert m.transmon.ng == 0.0
    assert m.detuning == 0.0
    cfg = m.configs()[0]
    assert cfg.coupling_g == 4e-3 and cfg.tau == 1.0 and cfg.ancilla.c == 1.0


def test_grid_product_size():
    m = parse_manifest_text(GRID)
    assert len(m.q) == 21 and m.q[-1] == 1.0 and m.q[1] == 0.05
    assert m.product_size == 2 * 21
    assert len(m.configs()) == 42


def test_duplicate_key_names_key_and_line():
    text = MINIMAL + "g = 8e-3\n"
    with pytest.raises(ManifestError, match=r"'g'.*line 7"):
        parse_manifest_text(text)


@pytest.mark.parametrize("text, pattern", [
    ("[sweep]\ng = 4e-3\nfoo = 1\n", r"unknown key \[sweep\] foo \(line 3\)"),
    ("[sweep]\ng = 4e-3\n[bogus]\nx = 1\n", r"unknown section \[bogus\]"),
    ("[sweep]\ng =\n", r"\[sweep\] g \(line 2\): empty grid"),
    ("[sweep]\ng = 4e-3\nq = 1.5\n", r"\[sweep\] q \(line 3\).*\[0, 1\]"),
    ("[sweep]\ng = -1e-3\n", r"\[sweep\] g \(line 2\).*positive"),
    ("[sweep]\ng = 4e-3\nq = 1:0:0.1\n", r"\[sweep\] q.*range"),
    ("[sweep]\ng = 4e-3\n[protocol]\nn_collisions = 2.5\n", r"n_collisions \(line 4\).*int"),
    ("[sweep]\ng = abc\n", r"cannot parse"),
    ("[run]\nname = x\n", r"missing required key \[sweep\] g"),
    ("[sweep]\ng = 4e-3\n[protocol]\nframe = rotating\n", r"frame"),
])
def test_manifest_errors(text, pattern):
    with pytest.raises(ManifestError, match=pattern):
        parse_manifest_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ManifestError, match="does not exist"):
        parse_manifest(tmp_path / "nope.ini")


def test_overrides():
    m = parse_manifest_text(MINIMAL, ["g=1e-2,2e-2", "protocol.n_collisions=50", "ej_over_ec=80"])
    assert m.g == (1e-2, 2e-2)
    assert m.n_collisions == 50
    assert m.transmon.ej_over_ec == 80
    assert with_overrides(m, ["q=0.25"]).q == (0.25,)
    with pytest.raises(ManifestError, match="unknown key"):
        parse_manifest_text(MINIMAL, ["nope=1"])
    with pytest.raises(ManifestError, match="key=value"):
        parse_manifest_text(MINIMAL, ["g"])


def test_round_trip_identity():
    for text in (MINIMAL, GRID):
        m = parse_manifest_text(text)
        again = parse_manifest_text(serialize_manifest(m))
        assert again == m
        assert serialize_manifest(again) == serialize_manifest(m)


grids = st.lists(st.floats(1e-4, 0.5, allow_nan=False), min_size=1, max_size=4)
probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4)


@settings(max_examples=50, deadline=None)
@given(grids, probs, probs, st.integers(0, 10000), st.floats(1.0, 136.0))
def test_round_trip_property(g, q, c, n, ratio):
    fmt = lambda xs: ", ".join(repr(x) for x in xs)
    text = (f"[transmon]\nej_over_ec = {ratio!r}\n[sweep]\ng = {fmt(g)}\nq = {fmt(q)}\n"
            f"c = {fmt(c)}\n[protocol]\nn_collisions = {n}\n")
    m = parse_manifest_text(text)
    assert parse_manifest_text(serialize_manifest(m)) == parse_manifest_text(serialize_manifest(
        parse_manifest_text(serialize_manifest(m))))
    assert m.product_size == len(g) * len(q) * len(c)


def test_environment_overrides(tmp_path, monkeypatch):
    m = parse_manifest_text(MINIMAL + "[output]\ndirectory = here\nworkers = 3\n")
    monkeypatch.delenv(ENV_OUTPUT_ROOT, raising=False)
    monkeypatch.delenv(ENV_THREADS, raising=False)
    assert str(m.resolved_output()) == "here" and m.resolved_workers() == 3
    monkeypatch.setenv(ENV_OUTPUT_ROOT, str(tmp_path))
    monkeypatch.setenv(ENV_THREADS, "2")
    assert m.resolved_output() == tmp_path and m.resolved_workers() == 2
