import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionjunction import cli, radial, scales
from ionjunction.cache import BasisCache, BasisSpec
from ionjunction.config import ConfigError, default_config_text, load_config, parse_angle
from ionjunction.output import read_csv, write_table

A = scales.default_scales().mass_ratio
SMALL = ["--set", "basis.K=80", "--set", "basis.l_max=6"]


# configuration


@pytest.mark.parametrize("text,value", [("-pi/4", -math.pi / 4), ("pi", math.pi), ("2*pi/3", 2 * math.pi / 3),
                                        ("-0.5pi", -math.pi / 2), ("0.3", 0.3), (" -1e-2 ", -0.01)])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, abs=1e-15)


def test_parse_angle_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_angle("pie")


def test_defaults_and_overrides():
    cfg = load_config()
    assert cfg.get("trap.alpha") == 10.0 and cfg.get("phases.phi_up") == pytest.approx(-math.pi / 4)
    assert cfg["trap"]["omega_hz"] is None and cfg["twomode"]["N"] == [20, 100]
    cfg2 = load_config(overrides=["trap.alpha=0.026", "phases.scan=-pi/3, 0.1"])
    assert cfg2.get("trap.alpha") == 0.026 and cfg2.get("phases.scan") == pytest.approx([-math.pi / 3, 0.1])
    assert cfg2.hash() != cfg.hash()


def test_default_config_round_trips(tmp_path):
    p = tmp_path / "default.ini"
    p.write_text(default_config_text())
    assert load_config(p).hash() == load_config().hash()


@pytest.mark.parametrize("body", ["[trap]\nbogus = 1\n", "[nowhere]\nx = 1\n", "[trap]\nq_min = 3\nq_max = 2\n",
                                  "[trap]\nalpha = -1\n", "[trap]\nalpha = nan\n", "[basis]\nK = ten\n",
                                  "[sequence]\nq_far = 2.0\nq_near = 2.1\n", "not an ini file"])
def test_invalid_config_rejected(tmp_path, body):
    p = tmp_path / "bad.ini"
    p.write_text(body)
    with pytest.raises(ConfigError):
        load_config(p)


def test_bad_override_rejected():
    for ov in ("alpha=1", "trap.nothing=1", "trap.K=3"):
        with pytest.raises(ConfigError):
            load_config(overrides=[ov])


# tables


@given(rows=st.lists(st.tuples(st.floats(allow_nan=False), st.integers(-10**6, 10**6),
                               st.text(st.characters(blacklist_categories=["Cs", "Cc"]), max_size=8)),
                     max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("csv")
    p = write_table(d / "t", ["x", "n", "s"], rows, {"alpha": 10.0, "note": "a, b"})
    meta, cols, body = read_csv(p)
    assert meta == {"alpha": 10.0, "note": "a, b"} and cols == ["x", "n", "s"]
    assert [(float(a), int(b), c) for a, b, c in body] == [tuple(r) for r in rows]


def test_numpy_scalars_are_written_plainly(tmp_path):
    p = write_table(tmp_path / "t", ["x", "n"], [[np.float64(0.1), np.int64(3)], [math.nan, 1]], {})
    assert p.read_text().splitlines()[1:] == ["0.1,3", "nan,1"]
    with pytest.raises(ValueError):
        write_table(tmp_path / "t", ["x"], [[1, 2]], {})


def test_json_table(tmp_path):
    p = write_table(tmp_path / "t", ["x"], [[np.float64(1.5)]], {"k": math.inf}, fmt="json")
    d = json.loads(p.read_text())
    assert d["rows"] == [[1.5]] and d["metadata"]["k"] is None


# cache


@pytest.fixture()
def tiny_spec():
    return BasisSpec(10.0, -math.pi / 4, A, l_max=2, K=30)


def test_cache_hit_and_identity(tmp_path, tiny_spec):
    c = BasisCache(tmp_path)
    b1 = c.get(tiny_spec)
    b2 = BasisCache(tmp_path).get(tiny_spec)
    assert c.misses == 1
    assert b1.content_hash() == b2.content_hash()
    assert np.array_equal(b1.u, b2.u) and np.array_equal(b1.energies, b2.energies)


def test_cache_checksum_mismatch_rebuilds(tmp_path, tiny_spec):
    BasisCache(tmp_path).get(tiny_spec)
    npz = tmp_path / f"{tiny_spec.key}.npz"
    raw = bytearray(npz.read_bytes())
    raw[-100] ^= 0xFF
    npz.write_bytes(bytes(raw))
    c = BasisCache(tmp_path)
    c.get(tiny_spec)
    assert c.events == [{"key": tiny_spec.key, "hit": False}]
    c.get(tiny_spec)
    assert c.events[-1]["hit"]


def test_cache_format_version_bump_is_a_miss(tmp_path, tiny_spec, monkeypatch):
    BasisCache(tmp_path).get(tiny_spec)
    meta = tmp_path / f"{tiny_spec.key}.json"
    d = json.loads(meta.read_text())
    d["format_version"] = radial.FORMAT_VERSION - 1
    meta.write_text(json.dumps(d))
    c = BasisCache(tmp_path)
    c.get(tiny_spec)
    assert not c.events[0]["hit"]
    old = tiny_spec.key
    monkeypatch.setattr(radial, "FORMAT_VERSION", radial.FORMAT_VERSION + 1)
    assert tiny_spec.key != old


def test_disabled_cache_writes_nothing(tmp_path, tiny_spec):
    c = BasisCache(None)
    c.get(tiny_spec)
    c.get(tiny_spec)
    assert c.misses == 2 and not any(tmp_path.iterdir())


# command line


def _run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path), "--no-cache"])


def test_emit_default_config(capsys):
    assert cli.main(["--emit-default-config"]) == 0
    assert capsys.readouterr().out == default_config_text()


def test_usage_errors(tmp_path, capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert _run(tmp_path, "coupling", "--set", "trap.q_min=4") == cli.EXIT_USAGE
    assert _run(tmp_path, "coupling", "--config", str(tmp_path / "missing.ini")) == cli.EXIT_USAGE
    assert _run(tmp_path, "sequence", "--set", "trap.no_ion=true") == cli.EXIT_USAGE
    assert _run(tmp_path, "channels", "--set", "channels.states=1 2 2 2") == cli.EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_numeric_and_validation_exit_codes(tmp_path, monkeypatch):
    def boom(run):
        raise radial.RadialError("no convergence")

    def fails(run):
        run.manifest.check("always", False)

    monkeypatch.setitem(cli.COMMANDS, "cache", boom)
    assert _run(tmp_path, "cache") == cli.EXIT_NUMERIC
    m = json.loads((tmp_path / "manifest_cache.json").read_text())
    assert "no convergence" in m["failures"][0]["error"]
    monkeypatch.setitem(cli.COMMANDS, "cache", fails)
    assert _run(tmp_path, "cache") == cli.EXIT_VALIDATION


def test_channels_command(tmp_path, capsys):
    assert _run(tmp_path, "channels", "--set", "channels.states=1 1 2 2; 0 0 2 2") == 0
    _, cols, rows = read_csv(tmp_path / "channels.csv")
    stretched = [r for r in rows if r[0] == "|1,1,2,2>"]
    assert len(stretched) == 1 and stretched[0][cols.index("S")] == "1.0"
    assert float(stretched[0][cols.index("amplitude_squared")]) == 1.0
    mixing = json.loads((tmp_path / "channels_mixing.json").read_text())
    assert mixing["|1,1,2,2>"] == []
    assert "|0,0,2,2>" in capsys.readouterr().out


def test_twomode_command(tmp_path):
    assert _run(tmp_path, "twomode", "--set", "twomode.N=20", "--set", "twomode.t_max_ms=10") == 0
    _, cols, rows = read_csv(tmp_path / "twomode_N20.csv")
    assert {r[cols.index("spin_label")] for r in rows} == {"up", "down"}
    cls = json.loads((tmp_path / "twomode_classification.json").read_text())
    assert cls["20"]["up"]["self_trapped"] and not cls["20"]["down"]["self_trapped"]


def test_coupling_command_small_basis(tmp_path):
    args = ["coupling", *SMALL, "--set", "phases.scan=0.3", "--format", "csv"]
    assert _run(tmp_path / "a", *args) == 0
    assert _run(tmp_path / "b", *args, "--threads", "2") == 0
    body = [(tmp_path / d / "coupling.csv").read_text() for d in "ab"]
    assert body[0] == body[1]
    meta, cols, rows = read_csv(tmp_path / "a" / "coupling.csv")
    phis = [float(r[0]) for r in rows]
    assert phis == sorted(phis) and len(phis) == 3
    s = json.loads((tmp_path / "a" / "coupling_summary.json").read_text())
    assert set(s["branches"]) == {"up", "down"}
    assert s["branches"]["up"]["J_hz"] == pytest.approx(float(rows[1][cols.index("J_hz")]), rel=1e-12)
    m = json.loads((tmp_path / "a" / "manifest_coupling.json").read_text())
    assert isinstance(m["checks"]["basis_convergence_up"]["delta"], float)
    # three phases at K, the two named ones again at 1.25 K
    assert sorted(e["K"] for e in m["basis_cache"]) == [80, 80, 80, 100, 100]


def test_spectrum_command_no_ion(tmp_path):
    assert _run(tmp_path, "spectrum", *SMALL, "--set", "trap.no_ion=true", "--set", "trap.q_points=3") == 0
    meta, cols, rows = read_csv(tmp_path / "spectrum_none.csv")
    assert cols == ["q_rstar", "level_index", "energy_estar", "parity"] and len(rows) == 3 * 8
    _, _, d = read_csv(tmp_path / "doublet_none.csv")
    assert len(d) == 3
