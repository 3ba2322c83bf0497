import json
import math

import pytest

from qpergodic.cli import main, parse_eps
from qpergodic.fieldfile import load_field
from qpergodic.render import decode_ppm

SWING = {
    "name": "tiny",
    "model": {"name": "swing", "modes": [1]},
    "integrator": {"steps_per_period": 16, "periods": 5},
    "domain": {"axes": [{"coordinate": "delta", "lo": 1.0, "hi": 2.0, "n": 2},
                        {"coordinate": "omega", "lo": -0.1, "hi": 0.1, "n": 2}]},
    "observables": ["sin_2delta", "cos_delta"],
    "escape": {},
}

DISS = {
    "name": "diss",
    "model": {"name": "dissipative", "frequencies": [math.sqrt(2)], "amplitudes": [1.0]},
    "integrator": {"h": 0.1, "t_ex": 200.0},
    "domain": {"axes": [{"coordinate": "m", "lo": -1.0, "hi": 1.0, "n": 3},
                        {"coordinate": "theta1", "lo": 0.0, "hi": 4.0, "n": 3}]},
    "observables": ["m_squared"],
}


def _cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_sweep_writes_fields_and_manifest(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sweep", _cfg(tmp_path, SWING), "--out", str(out), "--render", "--quiet"]) == 0
    f = load_field(out / "tiny.sin_2delta.qpf")
    assert f.shape == (2, 2) and f.values.size == 4
    assert f.metadata["config"]["name"] == "tiny"
    assert load_field(out / "tiny.cos_delta.qpf").observable_id == "cos_delta"
    man = json.loads((out / "tiny.manifest.json").read_text())
    assert [e["observable"] for e in man["fields"]] == ["sin_2delta", "cos_delta"]
    assert man["config"]["model"]["name"] == "swing"
    assert decode_ppm((out / "tiny.sin_2delta.ppm").read_bytes()).shape == (2, 2, 3)
    assert (out / "tiny.sin_2delta.ppm.legend.txt").exists()


def test_sweep_is_byte_identical_across_runs_and_workers(tmp_path):
    cfg = _cfg(tmp_path, SWING)
    main(["sweep", cfg, "--out", str(tmp_path / "a"), "--quiet"])
    main(["sweep", cfg, "--out", str(tmp_path / "b"), "--quiet", "--workers", "2"])
    for obs in ("sin_2delta", "cos_delta"):
        a = (tmp_path / "a" / f"tiny.{obs}.qpf").read_bytes()
        b = (tmp_path / "b" / f"tiny.{obs}.qpf").read_bytes()
        assert a == b


def test_sweep_figures(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", _cfg(tmp_path, DISS), "--out", str(out), "--figures", "--quiet"]) == 0
    assert (out / "diss.m_squared.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


@pytest.mark.parametrize("patch", [
    {"model": {"name": "harmonic", "frequencies": [-1.0], "amplitudes": [1.0]}},
    {"extra": True},
    {"observables": ["nope"]},
])
def test_invalid_config_exits_1_and_writes_nothing(tmp_path, patch):
    out = tmp_path / "out"
    assert main(["sweep", _cfg(tmp_path, SWING | patch), "--out", str(out)]) == 1
    assert not out.exists()


def test_unknown_preset_exits_1(tmp_path):
    assert main(["sweep", "no_such_preset", "--out", str(tmp_path)]) == 1


def test_partition_report(tmp_path, capsys):
    out = tmp_path / "out"
    main(["sweep", _cfg(tmp_path, SWING), "--out", str(out), "--quiet"])
    fields = [str(out / "tiny.sin_2delta.qpf"), str(out / "tiny.cos_delta.qpf")]
    assert main(["partition", *fields, "--eps", "auto,0.05", "--out", str(tmp_path / "p"), "--render"]) == 0
    rep = json.loads((tmp_path / "p" / "report.json").read_text())
    assert sum(e["count"] for e in rep["labels"]) == 4
    text = (tmp_path / "p" / "report.txt").read_text()
    assert "joint level sets of: sin_2delta, cos_delta" in text
    assert "bounded-slice cell fraction" in text
    assert (tmp_path / "p" / "partition.ppm").exists()
    part = json.loads((tmp_path / "p" / "partition.json").read_text())
    assert part["sources"] == ["tiny.sin_2delta.qpf", "tiny.cos_delta.qpf"]


@pytest.mark.parametrize("eps", ["0", "-1", "nan", "x", "0.1,0.1"])
def test_partition_rejects_bad_eps(tmp_path, eps):
    out = tmp_path / "out"
    main(["sweep", _cfg(tmp_path, DISS), "--out", str(out), "--quiet"])
    assert main(["partition", str(out / "diss.m_squared.qpf"), "--eps", eps, "--out", str(tmp_path / "p")]) == 1
    assert not (tmp_path / "p").exists()


def test_parse_eps():
    assert parse_eps("auto", 2) == [None, None]
    assert parse_eps("0.5", 2) == [0.5, 0.5]
    assert parse_eps("auto,0.1", 2) == [None, 0.1]


def test_render_and_io_errors(tmp_path):
    out = tmp_path / "out"
    main(["sweep", _cfg(tmp_path, DISS), "--out", str(out), "--quiet"])
    src = out / "diss.m_squared.qpf"
    assert main(["render", str(src), str(tmp_path / "r.ppm"), "--figure", str(tmp_path / "r.png")]) == 0
    assert decode_ppm((tmp_path / "r.ppm").read_bytes()).shape == (3, 3, 3)
    assert (tmp_path / "r.png").exists()
    assert main(["render", str(tmp_path / "missing.qpf"), str(tmp_path / "x.ppm")]) == 3
    bad = tmp_path / "bad.qpf"
    data = bytearray(src.read_bytes())
    data[-1] ^= 1
    bad.write_bytes(bytes(data))
    assert main(["render", str(bad), str(tmp_path / "x.ppm")]) == 3
    assert not (tmp_path / "x.ppm").exists()
    assert main(["partition", str(tmp_path / "missing.qpf"), "--out", str(tmp_path / "p")]) == 3


def test_render_partition_file(tmp_path):
    out = tmp_path / "out"
    main(["sweep", _cfg(tmp_path, DISS), "--out", str(out), "--quiet"])
    main(["partition", str(out / "diss.m_squared.qpf"), "--eps", "0.05", "--out", str(tmp_path / "p")])
    assert main(["render", str(tmp_path / "p" / "partition.json"), str(tmp_path / "p.ppm")]) == 0
    assert main(["render", str(tmp_path / "p" / "partition.json"), str(tmp_path / "q.ppm"),
                 "--figure", str(tmp_path / "q.png")]) == 1


def _tsv(path):
    lines = path.read_text().splitlines()
    head = lines[0].split("\t")
    return [dict(zip(head, ln.split("\t"))) for ln in lines[1:]]


def test_phases_single_k(tmp_path):
    out = tmp_path / "out"
    assert main(["phases", _cfg(tmp_path, SWING), "--k", "0", "--out", str(out), "--quiet"]) == 0
    rows = _tsv(out / "tiny.phases.tsv")
    assert len(rows) == 1 and rows[0]["k"] == "0"
    assert (out / "tiny.phases.png").exists()


def test_phases_dissipative_overlap_is_one(tmp_path):
    out = tmp_path / "out"
    assert main(["phases", _cfg(tmp_path, DISS), "--k", "0,3", "--out", str(out), "--quiet", "--no-figure"]) == 0
    rows = _tsv(out / "diss.phases.tsv")
    assert [r["k"] for r in rows] == ["0", "3"]
    assert all(float(r["overlap_k0"]) == 1.0 and float(r["overlap_k3"]) == 1.0 for r in rows)
    assert not (out / "diss.phases.png").exists()


@pytest.mark.parametrize("k", ["", "a,b"])
def test_phases_bad_k(tmp_path, k):
    assert main(["phases", _cfg(tmp_path, DISS), "--k", k, "--out", str(tmp_path / "o")]) == 1


def test_verify_exit_codes(monkeypatch, capsys):
    from qpergodic import cli
    from qpergodic.verify import Check

    monkeypatch.setitem(cli.SUITES, "dissipative", lambda: [Check("x", 0.1, 0.5, True)])
    assert main(["verify", "dissipative"]) == 0
    assert "PASS" in capsys.readouterr().out
    monkeypatch.setitem(cli.SUITES, "dissipative", lambda: [Check("x", 1.0, 0.5, False)])
    assert main(["verify", "dissipative"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    names = capsys.readouterr().out.split()
    assert "csi_fig1_a_desk" in names and "harmonic_fig1_a" in names


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == "qpergodic 0.1.0"
