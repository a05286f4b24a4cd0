import json
from importlib import resources

import numpy as np
import pytest

from rabicat.cache import ArrayCache, cached_spectrum, key_for
from rabicat.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from rabicat.config import EXPERIMENTS, PRESETS, load_config, preset_config
from rabicat.errors import ParseError, ValidationError
from rabicat.runner import run
from rabicat.semiclassical import ModelParams


def _write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_toy_config_takes_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, "[run]\nexperiment = toy\n[toy]\nb = 1\nc = 0\n"))
    assert cfg.params == {"b": [1.0], "c": 0.0}
    assert cfg.preset == "desk"


@pytest.mark.parametrize("text,key", [
    ("[run]\nexperiment = flow\n[model]\nomega0 = -5\n", "model.omega0"),
    ("[run]\nexperiment = toy\n[toy]\nbogus = 1\n", "toy.bogus"),
    ("[run]\nexperiment = toy\n[flow]\nn_g = 3\n", "flow"),
    ("[run]\nexperiment = crossing\n[crossing]\nlz_p_nd = 1.5\n", "crossing.lz_p_nd"),
    ("[run]\nexperiment = quench\n[quench]\nsnapshots = 0.5\n", "quench.snapshots"),
])
def test_invalid_values_name_their_key(tmp_path, text, key):
    with pytest.raises(ValidationError) as exc:
        load_config(_write(tmp_path, text))
    assert key in str(exc.value)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ParseError):
        load_config(tmp_path / "nope.cfg")
    with pytest.raises(ParseError):
        load_config(_write(tmp_path, "no section header\n"))


@pytest.mark.parametrize("experiment", EXPERIMENTS)
@pytest.mark.parametrize("preset", PRESETS)
def test_every_shipped_preset_validates(experiment, preset):
    cfg = preset_config(experiment, preset)
    assert cfg.experiment == experiment


def test_fig11_preset_file():
    path = resources.files("rabicat").joinpath("presets", "paper_fig11.cfg")
    cfg = load_config(path)
    assert cfg.model["omega0"] == 100.0 and cfg.model["alpha"] == 0.5
    assert cfg.params["delta_g"] == 2e-5 and cfg.params["tau"] == 1e6 and cfg.params["n_ph"] == 1900


def test_hash_ignores_key_order(tmp_path):
    a = load_config(_write(tmp_path, "[run]\nexperiment = toy\n[toy]\nb = 1\nc = 0.5\n", "a.cfg"))
    b = load_config(_write(tmp_path, "[toy]\nc = 0.5\nb = 1\n[run]\nexperiment = toy\n", "b.cfg"))
    assert a.hash() == b.hash()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["toy", "--set", "model.omega0=-5"]) == EXIT_CONFIG
    assert main(["toy", "--scan-b", "1:2"]) == EXIT_CONFIG
    out = tmp_path / "out"
    assert main(["toy", "--b", "-3", "--c", "0.8", "--output-dir", str(out)]) == EXIT_OK
    assert (out / "toy" / "manifest.json").is_file()
    # an out-of-range phase-space quadrature request fails numerically, not as a config error
    bad = _write(tmp_path, "[run]\nexperiment = transient\n[transient]\n"
                 "omega0_values = 8, 10\nn_ph_per_omega0 = 10\neps_anchor = -50\n"
                 "g_min_over_gstar = 1.6\ng_max_over_gstar = 1.61\nn_g = 3\n")
    assert main(["run", str(bad), "--output-dir", str(out)]) == EXIT_NUMERICAL
    capsys.readouterr()


def test_dry_run_prints_plan(capsys):
    assert main(["quench", "--dry-run"]) == EXIT_OK
    plan = json.loads(capsys.readouterr().out)
    assert plan["diagonalizations"] > 1000
    assert plan["dimension"] == 2 * (800 + 1)
    assert plan["estimated_memory_bytes"] > 0


def test_scan_b_expands_to_list(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["toy", "--scan-b", "-3:1:5", "--c", "0", "--output-dir", str(out)]) == EXIT_OK
    capsys.readouterr()
    rows = (out / "toy" / "toy.csv").read_text().splitlines()[1:]
    assert sorted({float(r.split(",")[0]) for r in rows}) == [-3.0, -2.0, -1.0, 0.0, 1.0]


def test_cache_detects_corruption(tmp_path):
    cache = ArrayCache(tmp_path)
    p = ModelParams(6.0, 1.0, 0.5)
    first = cached_spectrum(cache, p, 40)
    (entry,) = tmp_path.glob("*.npz")
    entry.write_bytes(entry.read_bytes()[:100])  # truncated
    assert cache.get(entry.stem) is None
    again = cached_spectrum(cache, p, 40)
    assert np.array_equal(first.energies, again.energies)
    assert cache.get(entry.stem) is not None
    assert cache.get(key_for(kind="absent")) is None


def _small_quench(tmp_path):
    text = ("[run]\nexperiment = quench\n[model]\nomega0 = 6\n[quench]\nn_ph = 150\n"
            "delta_g = 0.05\neps_cut = 50\nsnapshots = 1.05, 1.2\n")
    cfg = load_config(_write(tmp_path, text, "q.cfg"),
                      {"run.output_dir": str(tmp_path / "out"), "run.cache_dir": str(tmp_path / "cache")})
    return cfg


def _artifacts(tmp_path):
    d = tmp_path / "out" / "quench"
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_rerun_is_byte_identical_and_survives_cache_poisoning(tmp_path):
    cfg = _small_quench(tmp_path)
    m1 = run(cfg)
    a1 = _artifacts(tmp_path)
    m2 = run(cfg)
    assert _artifacts(tmp_path) == a1
    assert m1["config_hash"] == m2["config_hash"]
    for entry in (tmp_path / "cache").glob("*.npz"):
        entry.write_bytes(entry.read_bytes()[:-50])
    run(cfg)
    assert _artifacts(tmp_path) == a1
    manifest = json.loads((tmp_path / "out" / "quench" / "manifest.json").read_text())
    assert {f["name"] for f in manifest["files"]} >= set(a1)
