"""Config layer and command-line entry point: precedence rules, hashing,
file formats, reproducibility, and error reporting."""

import csv
import io
import json
import math
import sys
import textwrap

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import jacobi_spectra as js
from jacobi_spectra import cli
from jacobi_spectra.config import (
    ConfigError,
    ExperimentConfig,
    GridSpec,
    config_hash,
    distribution_from_config,
    dumps_toml,
    resolve_seed,
)

TWO_ATOM_TOML = """\
[experiment]
seed = 5

[distribution]
variant = "atoms"
probabilities = [0.5, 0.5]

[[distribution.atoms]]
a = [1.0, 0.0]
b = [0.5, 0.3]
c = [1.0, 0.0]

[[distribution.atoms]]
a = [1.0, 0.0]
b = [-0.5, -0.3]
c = [1.0, 0.0]
"""

HERMITIAN_TOML = """\
[distribution]
variant = "atoms"
probabilities = [0.5, 0.5]

[[distribution.atoms]]
a = [1.0, 0.0]
b = [0.7, 0.0]
c = [1.0, 0.0]

[[distribution.atoms]]
a = [1.0, 0.0]
b = [-0.7, 0.0]
c = [1.0, 0.0]
"""

HN_TOML = """\
[distribution]
variant = "hatano_nelson"

[distribution.b_law]
kind = "uniform"
low = -1.0
high = 1.0

[distribution.ratio_law]
kind = "constant"
value = 4.0

[distribution.c_mag_law]
kind = "constant"
value = 0.5
"""

DIVERGENT_TOML = """\
[distribution]
variant = "hatano_nelson"

[distribution.b_law]
kind = "lognormal"
mean = 0.0
std = 50.0

[distribution.ratio_law]
kind = "constant"
value = 2.0

[distribution.c_mag_law]
kind = "constant"
value = 1.0
"""

CONSTANT_TOML = """\
[distribution]
variant = "constant"
a = 1.0
b = [0.0, 0.4]
c = 1.0
"""


@pytest.fixture(autouse=True)
def _clean_seed_env(monkeypatch):
    monkeypatch.delenv("JACOBI_SPECTRA_SEED", raising=False)


@pytest.fixture()
def two_atom_cfg(tmp_path):
    p = tmp_path / "two_atom.toml"
    p.write_text(TWO_ATOM_TOML)
    return str(p)


def read_ndjson(path):
    lines = path.read_text().splitlines()
    return json.loads(lines[0]), [json.loads(x) for x in lines[1:]]


def read_csv(path):
    lines = path.read_text().splitlines()
    meta = [x for x in lines if x.startswith("# ")]
    data = [x for x in lines if not x.startswith("# ")]
    rows = list(csv.DictReader(io.StringIO("\n".join(data))))
    return meta, rows


class TestConfigPrimitives:
    def test_seed_precedence(self, monkeypatch):
        assert resolve_seed(None, None) == 0
        assert resolve_seed(None, 9) == 9
        assert resolve_seed(4, 9) == 4
        monkeypatch.setenv("JACOBI_SPECTRA_SEED", "7")
        assert resolve_seed(4, 9) == 7

    def test_seed_rejects_bad_values(self, monkeypatch):
        with pytest.raises(ConfigError):
            resolve_seed(-1, None)
        monkeypatch.setenv("JACOBI_SPECTRA_SEED", "x")
        with pytest.raises(ConfigError):
            resolve_seed(None, None)
        monkeypatch.setenv("JACOBI_SPECTRA_SEED", "-3")
        with pytest.raises(ConfigError):
            resolve_seed(None, None)

    def test_grid_parse(self):
        g = GridSpec.parse("-2, 2, -1, 1, 5, 4")
        assert (g.re0, g.re1, g.im0, g.im1, g.nx, g.ny) == (-2, 2, -1, 1, 5, 4)
        with pytest.raises(ConfigError):
            GridSpec.parse("1,2,3")
        with pytest.raises(ConfigError):
            GridSpec.parse("2,1,0,1,4,4")
        with pytest.raises(ConfigError):
            GridSpec.parse("0,1,0,1,1,4")

    def test_hash_ignores_execution_details(self, two_atom_cfg):
        dist = distribution_from_config(
            tomllib.loads(TWO_ATOM_TOML)["distribution"]
        )
        base = ExperimentConfig(
            subcommand="sample-spectrum", distribution=dist, seed=1, n=10,
            replicas=2, threads=1, out="a.ndjson",
        )
        moved = ExperimentConfig(
            subcommand="sample-spectrum", distribution=dist, seed=1, n=10,
            replicas=2, threads=16, out="elsewhere.ndjson",
        )
        reseeded = ExperimentConfig(
            subcommand="sample-spectrum", distribution=dist, seed=2, n=10,
            replicas=2, threads=1, out="a.ndjson",
        )
        assert base.hash() == moved.hash()
        assert base.hash() != reseeded.hash()
        assert len(base.hash()) == 12

    def test_hash_is_key_order_independent(self):
        a = {"x": 1, "y": [1, 2], "z": {"k": 3}}
        b = {"z": {"k": 3}, "y": [1, 2], "x": 1}
        assert config_hash(a) == config_hash(b)

    def test_constant_variant(self):
        d = distribution_from_config(tomllib.loads(CONSTANT_TOML)["distribution"])
        seq = js.sample_sequence(d, 4, seed=0)
        assert np.all(seq.b == 0.4j)

    def test_missing_variant_rejected(self):
        with pytest.raises(ConfigError):
            distribution_from_config({"probabilities": [1.0]})

    def test_dumps_toml_round_trip(self):
        data = {
            "experiment": {"seed": 3, "n": 100},
            "distribution": {
                "variant": "atoms",
                "probabilities": [0.25, 0.75],
                "atoms": [
                    {"a": [1.0, 0.0], "b": [0.5, 0.3], "c": [1.0, 0.0]},
                    {"a": [1.0, 0.0], "b": [-0.5, -0.3], "c": [1.0, 0.0]},
                ],
            },
            "output": {"path": "x.ndjson"},
        }
        text = dumps_toml(data)
        assert tomllib.loads(text) == data

    def test_dumps_toml_strings_escaped(self):
        text = dumps_toml({"t": {"s": 'he said "hi"\n'}})
        assert tomllib.loads(text) == {"t": {"s": 'he said "hi"\n'}}


class TestCliRuns:
    def test_sample_spectrum_round_trip(self, tmp_path, two_atom_cfg):
        out = tmp_path / "spectrum.ndjson"
        rc = cli.main([
            "sample-spectrum", "--dist", two_atom_cfg, "--n", "40",
            "--replicas", "2", "--out", str(out),
        ])
        assert rc == 0
        head, rows = read_ndjson(out)
        assert head["schema"] == "jacobi-spectra/sample-spectrum/v1"
        assert len(head["config_hash"]) == 12
        data_rows = [r for r in rows if "re" in r]
        assert len(data_rows) == 80
        assert {"replica", "re", "im"} <= set(data_rows[0])

    def test_rerun_is_byte_identical(self, tmp_path, two_atom_cfg):
        out1 = tmp_path / "a.ndjson"
        out2 = tmp_path / "b.ndjson"
        for out in (out1, out2):
            rc = cli.main([
                "sample-spectrum", "--dist", two_atom_cfg, "--n", "40",
                "--replicas", "2", "--out", str(out),
            ])
            assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_thread_count_does_not_change_bytes(self, tmp_path, two_atom_cfg):
        outs = []
        for t in ("1", "4"):
            out = tmp_path / f"map{t}.ndjson"
            rc = cli.main([
                "lyapunov-map", "--dist", two_atom_cfg,
                "--grid", "-2,2,-1,1,3,2", "--n", "2000", "--replicas", "2",
                "--threads", t, "--out", str(out),
            ])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_lyapunov_map_rows(self, tmp_path, two_atom_cfg):
        out = tmp_path / "map.ndjson"
        rc = cli.main([
            "lyapunov-map", "--dist", two_atom_cfg, "--grid", "-1,1,-1,1,2,2",
            "--n", "1000", "--replicas", "3", "--method", "pair",
            "--out", str(out),
        ])
        assert rc == 0
        head, rows = read_ndjson(out)
        assert len(rows) == 4
        for r in rows:
            assert {"re", "im", "gamma1", "gamma2", "stderr", "n",
                    "replicas"} <= set(r)
            assert r["n"] == 1000 and r["replicas"] == 3
            assert r["gamma1"] >= r["gamma2"]

    def test_lyapunov_map_grid_from_table(self, tmp_path):
        cfg = tmp_path / "with_grid.toml"
        cfg.write_text(TWO_ATOM_TOML + textwrap.dedent("""
            [grid]
            re0 = -1.0
            re1 = 1.0
            im0 = -0.5
            im1 = 0.5
            nx = 2
            ny = 2
        """))
        out = tmp_path / "map.ndjson"
        rc = cli.main([
            "lyapunov-map", "--dist", str(cfg), "--n", "500",
            "--replicas", "2", "--out", str(out),
        ])
        assert rc == 0
        _, rows = read_ndjson(out)
        assert len(rows) == 4

    def test_lyapunov_map_needs_some_grid(self, tmp_path, two_atom_cfg, capsys):
        rc = cli.main([
            "lyapunov-map", "--dist", two_atom_cfg, "--out",
            str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert err["error"] == "ConfigError"

    def test_manifest_sidecar(self, tmp_path, two_atom_cfg):
        out = tmp_path / "spectrum.ndjson"
        cli.main([
            "sample-spectrum", "--dist", two_atom_cfg, "--n", "30",
            "--replicas", "1", "--out", str(out),
        ])
        head, rows = read_ndjson(out)
        man = json.loads((tmp_path / "spectrum.ndjson.manifest.json").read_text())
        assert man["schema"] == "jacobi-spectra/manifest/v1"
        assert man["subcommand"] == "sample-spectrum"
        assert man["config_hash"] == head["config_hash"]
        assert man["out"] == "spectrum.ndjson"
        assert man["rows"] == len(rows)
        assert man["wall_time_s"] >= 0
        assert man["version"].startswith("v")
        assert man["backend"] in ("numba", "python")

    def test_env_seed_overrides_flag(self, tmp_path, two_atom_cfg, monkeypatch):
        out_flag = tmp_path / "f.ndjson"
        cli.main(["sample-spectrum", "--dist", two_atom_cfg, "--n", "30",
                  "--seed", "7", "--out", str(out_flag)])
        out_env = tmp_path / "e.ndjson"
        monkeypatch.setenv("JACOBI_SPECTRA_SEED", "7")
        cli.main(["sample-spectrum", "--dist", two_atom_cfg, "--n", "30",
                  "--seed", "3", "--out", str(out_env)])
        assert out_flag.read_bytes() == out_env.read_bytes()
        monkeypatch.delenv("JACOBI_SPECTRA_SEED")
        out_three = tmp_path / "t.ndjson"
        cli.main(["sample-spectrum", "--dist", two_atom_cfg, "--n", "30",
                  "--seed", "3", "--out", str(out_three)])
        assert out_three.read_bytes() != out_env.read_bytes()

    def test_hermitian_spectrum_is_real(self, tmp_path):
        cfg = tmp_path / "herm.toml"
        cfg.write_text(HERMITIAN_TOML)
        out = tmp_path / "herm.ndjson"
        rc = cli.main([
            "sample-spectrum", "--dist", str(cfg), "--n", "200",
            "--replicas", "2", "--out", str(out),
        ])
        assert rc == 0
        _, rows = read_ndjson(out)
        ims = [abs(r["im"]) for r in rows if "im" in r]
        assert max(ims) <= 1e-8

    def test_thouless_check_residual_small(self, tmp_path, two_atom_cfg):
        out = tmp_path / "thouless.csv"
        rc = cli.main([
            "thouless-check", "--dist", two_atom_cfg, "--n", "1000",
            "--steps", "40000", "--replicas", "16", "--points", "8",
            "--out", str(out),
        ])
        assert rc == 0
        meta, rows = read_csv(out)
        assert any(x.startswith("# schema: jacobi-spectra/thouless-check/v1")
                   for x in meta)
        live = [float(r["residual"]) for r in rows if r["skipped"] == "false"]
        assert live and max(abs(v) for v in live) <= 5e-2

    def test_holder_profile_output(self, tmp_path, two_atom_cfg):
        out = tmp_path / "holder.csv"
        rc = cli.main([
            "holder-profile", "--dist", two_atom_cfg, "--n", "300",
            "--points", "3", "--deltas", "0.5,0.25", "--out", str(out),
        ])
        assert rc == 0
        meta, rows = read_csv(out)
        assert len(rows) == 6
        assert all(r["bound_ok"] == "true" for r in rows)
        assert {"z0_re", "z0_im", "delta", "mass", "c_value"} <= set(rows[0])

    def test_convergence_study_output(self, tmp_path, two_atom_cfg):
        out = tmp_path / "conv.csv"
        rc = cli.main([
            "convergence-study", "--dist", two_atom_cfg,
            "--sizes", "100,200,400", "--out", str(out),
        ])
        assert rc == 0
        meta, rows = read_csv(out)
        assert len(rows) == 2
        assert [int(r["n_small"]) for r in rows] == [100, 200]
        for r in rows:
            assert float(r["sigma"]) > 0

    def test_convergence_study_rejects_unsorted_sizes(
        self, tmp_path, two_atom_cfg, capsys
    ):
        rc = cli.main([
            "convergence-study", "--dist", two_atom_cfg,
            "--sizes", "400,200", "--out", str(tmp_path / "x.csv"),
        ])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert err["error"] == "ConfigError"

    def test_hn_demo_spectra(self, tmp_path):
        cfg = tmp_path / "hn.toml"
        cfg.write_text(HN_TOML)
        out = tmp_path / "hn.ndjson"
        rc = cli.main([
            "hn-demo", "--dist", str(cfg), "--n", "64", "--replicas", "2",
            "--out", str(out),
        ])
        assert rc == 0
        head, rows = read_ndjson(out)
        summary = [r for r in rows if "dirichlet_max_abs_im" in r]
        assert summary and summary[0]["dirichlet_max_abs_im"] <= 1e-8

    def test_hn_demo_rejects_complex_b(self, tmp_path, two_atom_cfg, capsys):
        rc = cli.main([
            "hn-demo", "--dist", two_atom_cfg, "--n", "32",
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert err["error"] == "ConfigError"

    def test_tail_bounds_table(self, tmp_path, two_atom_cfg):
        out = tmp_path / "tails.csv"
        rc = cli.main([
            "tail-bounds", "--dist", two_atom_cfg, "--n", "60",
            "--replicas", "3", "--out", str(out),
        ])
        assert rc == 0
        meta, rows = read_csv(out)
        assert len(rows) == 3 * 3 * 2  # replicas x deltas x radii
        assert all(r["tau1_ok"] == "true" for r in rows)
        assert all(r["tauR_ok"] == "true" for r in rows)


class TestCliErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = cli.main([
            "sample-spectrum", "--dist", str(tmp_path / "nope.toml"),
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert err["error"] == "ConfigError"
        assert "not found" in err["message"]

    def test_config_without_distribution(self, tmp_path, capsys):
        cfg = tmp_path / "empty.toml"
        cfg.write_text("[experiment]\nseed = 1\n")
        rc = cli.main([
            "sample-spectrum", "--dist", str(cfg),
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2
        assert "distribution" in capsys.readouterr().err

    def test_invalid_toml_syntax(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[distribution\nvariant=oops")
        rc = cli.main([
            "sample-spectrum", "--dist", str(cfg),
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2

    def test_nonpositive_n(self, tmp_path, two_atom_cfg, capsys):
        rc = cli.main([
            "sample-spectrum", "--dist", two_atom_cfg, "--n", "0",
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2

    def test_missing_out(self, two_atom_cfg, capsys):
        rc = cli.main(["sample-spectrum", "--dist", two_atom_cfg])
        assert rc == 2
        assert "out" in capsys.readouterr().err

    def test_diverging_moments_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "heavy.toml"
        cfg.write_text(DIVERGENT_TOML)
        rc = cli.main([
            "sample-spectrum", "--dist", str(cfg), "--n", "20",
            "--out", str(tmp_path / "x.ndjson"),
        ])
        assert rc == 2
        err = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert "moment" in err["message"]

    def test_degenerate_support_warns_but_runs(self, tmp_path, capsys):
        cfg = tmp_path / "const.toml"
        cfg.write_text(CONSTANT_TOML)
        out = tmp_path / "const.ndjson"
        rc = cli.main([
            "sample-spectrum", "--dist", str(cfg), "--n", "30",
            "--out", str(out),
        ])
        assert rc == 0
        warn = json.loads(capsys.readouterr().err.splitlines()[-1])
        assert warn["warning"] == "degenerate-support"
        assert out.exists()
