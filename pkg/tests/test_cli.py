"""End-to-end CLI behavior: exit codes, artifacts, caching, determinism."""

import json
import xml.etree.ElementTree as ET

import pytest

from carleman_lab import cli


TMPL = """
[geometry]
outer = rect -1.0 1.0 -1.0 1.0
interface = {interface}

[physics]
a1 = {a1}
a2 = {a2}
p = {p}
y0 = {y0}
h = initial
T = 0.1
nx = 9
dt = 0.05

[carleman]
s = {s}
lambda = 1
M2 = {M2}
n_fields = 2
n_half = 4
seed = 0

[inverse]
beta = 1e-6
max_iter = 2
n_perturbations = 3
amplitudes = 1e-2 1e-1
seed = 7
noise = 0.0
q0 = constant 1.3
r_lower = {r_lower}

[output]
directory = {directory}
formats = csv json svg
"""

DEFAULTS = dict(
    interface="disk 0.5", a1="2.0", a2="1.0", p="sine 1.0 0.4",
    y0="cosine 2.0 0.5", s="10 20", M2="1.0", r_lower="0.5",
    directory="outrel",
)


def write_cfg(tmp_path, name="exp.ini", **overrides):
    values = dict(DEFAULTS)
    values.update(overrides)
    path = tmp_path / name
    path.write_text(TMPL.format(**values))
    return path


def load_json(path):
    return json.loads(path.read_text())


class TestParser:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([])

    def test_flags_parse(self):
        args = cli.build_parser().parse_args(
            ["stability", "--config", "x.ini", "--seed", "3", "--n", "5"]
        )
        assert args.subcommand == "stability"
        assert args.seed == 3 and args.n == 5


class TestErrorPaths:
    def test_missing_config_file(self, tmp_path, capsys):
        code = cli.main(["geometry-check", "--config", str(tmp_path / "no.ini")])
        assert code == 2
        assert "file not found" in capsys.readouterr().err

    def test_schema_error_carries_field_path(self, tmp_path, capsys):
        path = tmp_path / "bad.ini"
        path.write_text(TMPL.format(**DEFAULTS).replace("T = 0.1\n", ""))
        code = cli.main(["geometry-check", "--config", str(path)])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("config error: physics.T")

    def test_negative_n_override(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        code = cli.main(["stability", "--config", str(cfg), "--n", "-2"])
        assert code == 2
        assert "--n" in capsys.readouterr().err

    def test_library_valueerror_maps_to_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, y0="cosine 0.4 0.1")  # |y0| < r_lower
        out = tmp_path / "out"
        code = cli.main(["invert", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 2
        assert "config error:" in capsys.readouterr().err


class TestGeometryCheck:
    def test_disk_curvature_and_artifact(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["geometry-check", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 0
        assert "geometry-check:" in capsys.readouterr().out
        doc = load_json(out / "geometry_check.json")
        assert abs(doc["min_curvature"] - 2.0) < 1e-8  # disk radius 0.5
        assert doc["ok"] is True
        assert doc["_meta"]["subcommand"] == "geometry-check"

    def test_nonconvex_interface_exits_3(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, interface="fourier 0.5 7:0.04")
        out = tmp_path / "out"
        code = cli.main(["geometry-check", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 3
        assert "certification failure" in capsys.readouterr().err
        doc = load_json(out / "certification_failure.json")
        assert doc["report"]["ok"] is False


class TestWeightVerify:
    def test_valid_weight_passes(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["weight-verify", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 0
        doc = load_json(out / "weight_verify.json")
        assert doc["all_ok"] is True
        assert all(rec["ok"] for rec in doc["records"].values())

    def test_wrong_jump_fails_h2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, a1="1.0", a2="2.0")
        out = tmp_path / "out"
        code = cli.main(["weight-verify", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 3
        assert "certification failure" in capsys.readouterr().err
        doc = load_json(out / "certification_failure.json")
        records = doc["report"]["records"]
        assert records["H2"]["ok"] is False
        assert records["H2"]["margin"] < 0.0


class TestSolveForward:
    def test_artifacts_cache_and_determinism(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["solve-forward", "--config", str(cfg),
                         "--output-dir", str(out)]) == 0
        first = load_json(out / "forward_summary.json")
        assert first["cached"] is False
        assert first["n_steps"] == 2
        trace_a = (out / "forward_trace.csv").read_bytes()
        assert trace_a.startswith(b"# config_hash=")

        assert cli.main(["solve-forward", "--config", str(cfg),
                         "--output-dir", str(out)]) == 0
        second = load_json(out / "forward_summary.json")
        assert second["cached"] is True
        assert (out / "forward_trace.csv").read_bytes() == trace_a
        assert second["final_l2"] == first["final_l2"]
        assert "cached=True" in capsys.readouterr().out

    def test_stale_cache_key_is_ignored(self, tmp_path):
        cfg_a = write_cfg(tmp_path, name="a.ini")
        out = tmp_path / "out"
        assert cli.main(["solve-forward", "--config", str(cfg_a),
                         "--output-dir", str(out)]) == 0
        cfg_b = write_cfg(tmp_path, name="b.ini", p="sine 1.0 0.2")
        assert cli.main(["solve-forward", "--config", str(cfg_b),
                         "--output-dir", str(out)]) == 0
        doc = load_json(out / "forward_summary.json")
        assert doc["cached"] is False  # different forward hash, fresh solve


class TestOutputResolution:
    def test_env_root_anchors_relative_directory(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path, directory="nested/out")
        root = tmp_path / "root"
        monkeypatch.setenv(cli.ENV_OUTPUT, str(root))
        assert cli.main(["geometry-check", "--config", str(cfg)]) == 0
        assert (root / "nested/out/geometry_check.json").exists()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path)
        monkeypatch.setenv(cli.ENV_OUTPUT, str(tmp_path / "envroot"))
        out = tmp_path / "flagged"
        assert cli.main(["geometry-check", "--config", str(cfg),
                         "--output-dir", str(out)]) == 0
        assert (out / "geometry_check.json").exists()
        assert not (tmp_path / "envroot").exists()

    def test_absolute_config_directory_ignores_env(self, tmp_path, monkeypatch):
        target = tmp_path / "absolute"
        cfg = write_cfg(tmp_path, directory=str(target))
        monkeypatch.setenv(cli.ENV_OUTPUT, str(tmp_path / "envroot"))
        assert cli.main(["geometry-check", "--config", str(cfg)]) == 0
        assert (target / "geometry_check.json").exists()


class TestCarlemanSweep:
    def test_small_sweep_artifacts(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, a1="0.1", a2="0.05", M2="0.05")
        out = tmp_path / "out"
        code = cli.main(["carleman-sweep", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 0
        assert "carleman-sweep:" in capsys.readouterr().out
        doc = load_json(out / "carleman_summary.json")
        assert doc["n_fields"] == 2
        assert doc["sup_ratio"] >= 0.0
        assert isinstance(doc["stabilized"], bool)
        assert doc["q_inf"] > 0.0
        assert set(doc["certificates"]) == {"w1", "w2"}
        header = (out / "carleman_rows.csv").read_text().splitlines()[4]
        assert header == "field_id,s,lambda,lhs,rhs_residual,rhs_boundary,ratio"
        svg = (out / "carleman_ratios.svg").read_text()
        ET.fromstring(svg[svg.index("<svg"):])

    def test_wrong_jump_sign_exits_3(self, tmp_path):
        cfg = write_cfg(tmp_path, a1="0.05", a2="0.1", M2="0.05")
        out = tmp_path / "out"
        code = cli.main(["carleman-sweep", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 3
        doc = load_json(out / "certification_failure.json")
        assert doc["report"]["a1"] == 0.05


class TestInvert:
    def test_invert_artifacts(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["invert", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 0
        assert "invert:" in capsys.readouterr().out
        doc = load_json(out / "invert.json")
        assert doc["iterations"] >= 0
        assert isinstance(doc["stalled"], bool)
        assert doc["final_misfit"] <= doc["initial_misfit"]
        rows = (out / "invert.csv").read_text().splitlines()
        assert rows[4].count(",") == 8  # one data row, nine columns


class TestStability:
    def test_deterministic_and_seed_sensitive(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        out_c = tmp_path / "c"
        for out in (out_a, out_b):
            assert cli.main(["stability", "--config", str(cfg),
                             "--output-dir", str(out)]) == 0
        records_a = (out_a / "stability_records.csv").read_bytes()
        assert records_a == (out_b / "stability_records.csv").read_bytes()
        summary_a = (out_a / "stability_summary.json").read_bytes()
        assert summary_a == (out_b / "stability_summary.json").read_bytes()

        assert cli.main(["stability", "--config", str(cfg), "--seed", "9",
                         "--output-dir", str(out_c)]) == 0
        assert records_a != (out_c / "stability_records.csv").read_bytes()

    def test_n_override_controls_record_count(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["stability", "--config", str(cfg), "--n", "2",
                         "--output-dir", str(out)]) == 0
        lines = (out / "stability_records.csv").read_text().splitlines()
        assert len(lines) == 4 + 1 + 2  # meta comments, header, two records
        svg = (out / "stability_scatter.svg").read_text()
        ET.fromstring(svg[svg.index("<svg"):])

    def test_negative_control_reports_uncertified(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, a1="1.0", a2="2.0")
        out = tmp_path / "out"
        code = cli.main(["stability", "--config", str(cfg),
                         "--output-dir", str(out)])
        assert code == 0  # sweep still runs; certification is reported
        assert "certified=False" in capsys.readouterr().out
        doc = load_json(out / "stability_summary.json")
        assert doc["certified"] is False
        assert doc["hypothesis_report"]["records"]["H2"]["ok"] is False
