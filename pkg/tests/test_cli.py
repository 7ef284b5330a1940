import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylab import cli
from cylab.config import ConfigError, ExperimentConfig, NoiseSpec, dump_config, parse_config
from cylab.scenarios import SCENARIOS, list_scenarios

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, cfg: ExperimentConfig, name="c.ini"):
    p = tmp_path / name
    p.write_text(dump_config(cfg))
    return p


def small(name, tmp_path, **kw):
    base = SCENARIOS[name].defaults
    kw.setdefault("output_dir", str(tmp_path / "out"))
    return base.with_overrides(**kw)


# ------------------------------------------------------------------ config


def test_list_scenarios():
    names = [n for n, _ in list_scenarios()]
    assert len(names) >= 3 and len(set(names)) == len(names)
    assert {"heat_alpha_stable", "heat_brownian_additive", "pure_drift"} <= set(names)
    assert all(desc for _, desc in list_scenarios())


@pytest.mark.parametrize("name", SCENARIOS)
def test_scenario_round_trip(name):
    cfg = SCENARIOS[name].defaults
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 32), st.integers(1, 32), st.integers(1, 512),
       st.floats(0.01, 100, allow_nan=False),
       st.lists(st.floats(1e-6, 10, allow_nan=False), min_size=1, max_size=4),
       st.integers(0, 2**40), st.sampled_from(["brownian", "alpha_stable", "compound_poisson"]),
       st.floats(0.1, 1.99))
def test_config_round_trip(dH, dU, n, T, eps, seed, kind, alpha):
    cfg = ExperimentConfig("pure_drift", d_H=dH, d_U=dU, n_steps=n, T=T, epsilon_list=tuple(eps),
                           seed_base=seed, noise=NoiseSpec(kind, alpha=alpha))
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    assert dump_config(parse_config(text)) == text


@pytest.mark.parametrize("text", [
    "not an ini file",
    "[experiment]\nd_H = 3\n",
    "[experiment]\nscenario = pure_drift\nd_H = three\n",
    "[experiment]\nscenario = pure_drift\nT = -1\n",
    "[experiment]\nscenario = pure_drift\nbogus = 1\n",
    "[experiment]\nscenario = pure_drift\n[noise]\nkind = gamma\n",
    "[experiment]\nscenario = pure_drift\nepsilon_list = 0.1, 0\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_shipped_configs_parse():
    files = sorted(CONFIGS.glob("*.ini"))
    assert files
    for f in files:
        cfg = parse_config(f.read_text())
        assert cfg.scenario in SCENARIOS


# ------------------------------------------------------------------- run


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[[[")
    out = tmp_path / "never"
    assert cli.run("solve", bad, out=str(out)) == cli.EXIT_CONFIG
    assert cli.run("solve", tmp_path / "missing.ini", out=str(out)) == cli.EXIT_CONFIG
    unknown = write_cfg(tmp_path, ExperimentConfig("no_such_scenario", output_dir=str(out)))
    assert cli.run("solve", unknown) == cli.EXIT_SCENARIO
    mismatch = write_cfg(tmp_path, small("heat_alpha_stable", tmp_path, d_U=3, output_dir=str(out)))
    assert cli.run("solve", mismatch) == cli.EXIT_DIMENSION
    assert not out.exists()
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 4 and all(line.startswith("error:") for line in err)


def test_main_parses_flags(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small("pure_drift", tmp_path))
    out = tmp_path / "o"
    code = cli.main(["solve", "--config", str(cfg), "--seed", "5", "--out", str(out), "--paths", "3"])
    assert code == 0
    man = json.loads((out / "solve" / "manifest.json").read_text())
    assert man["seeds"] == {"seed_base": 5, "n_paths": 3}
    assert cli.main(["list-scenarios"]) == 0
    assert "pure_drift" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_solve_manifest(tmp_path):
    cfg = write_cfg(tmp_path, small("heat_alpha_stable", tmp_path, n_paths=10))
    assert cli.run("solve", cfg) == 0
    out = tmp_path / "out" / "solve"
    man = json.loads((out / "manifest.json").read_text())
    assert man["summary"]["residual_max"] < 0.05
    assert man["config"] == cfg.read_text()
    assert str(tmp_path) not in (out / "solve_summary.csv").read_text()
    for name, digest in man["artifacts"].items():
        assert cli.blob_sha1((out / name).read_bytes()) == digest


def test_blob_hash_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert cli.blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


@pytest.mark.parametrize("cmd,name,paths", [
    ("noise-check", "heat_alpha_stable", 20_000),
    ("calculus-check", "contractive_brownian", 20),
    ("metrics", "contractive_brownian", 10),
    ("converge", "contractive_brownian", 10),
    ("uniqueness", "contractive_brownian", 5),
    ("gronwall", "pure_drift", 500),
])
def test_subcommands_run(cmd, name, paths, tmp_path):
    cfg = write_cfg(tmp_path, small(name, tmp_path, n_paths=paths))
    assert cli.run(cmd, cfg) == 0
    man = json.loads((tmp_path / "out" / cmd / "manifest.json").read_text())
    assert man["passed"] and man["subcommand"] == cmd


def test_gronwall_default_reports_no_violations(tmp_path):
    cfg = write_cfg(tmp_path, small("pure_drift", tmp_path, n_paths=2000))
    assert cli.run("gronwall", cfg) == 0
    rep = json.loads((tmp_path / "out" / "gronwall" / "gronwall.json").read_text())
    assert rep["violations"] == 0 and rep["schema_version"] == cli.SCHEMA_VERSION


def test_determinism_and_worker_independence(tmp_path):
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        cfg = write_cfg(tmp_path, small("contractive_brownian", tmp_path, n_paths=6, workers=workers,
                                        output_dir=str(tmp_path / f"o{i}")), f"c{i}.ini")
        assert cli.run("solve", cfg) == 0
        outs.append(tmp_path / f"o{i}" / "solve")
    for name in ("solve_summary.csv", "solve_path.csv"):
        texts = {(o / name).read_bytes() for o in outs}
        assert len(texts) == 1
