import json
import os

import numpy as np
import pytest

from radcal.errors import InvalidInputError
from radcal.experiments import EXPERIMENTS, run_experiment
from radcal.harness import (
    ExperimentConfig,
    RunManifest,
    Table,
    derive_seed,
    dumps_json,
    emit,
    parse_config,
    run_trials,
    seed_fingerprint,
    table_csv,
)


def _square(i):
    return i * i


def test_derived_streams_are_reproducible_and_distinct():
    a = derive_seed(42, 3, "x").random(4)
    np.testing.assert_array_equal(a, derive_seed(42, 3, "x").random(4))
    assert derive_seed(42, 4, "x").random() != a[0]
    assert derive_seed(42, 3, "y").random() != a[0]
    assert derive_seed(43, 3, "x").random() != a[0]


def test_no_fingerprint_collisions_in_a_million_streams():
    prints = {seed_fingerprint(7, i) for i in range(1_000_000)}
    assert len(prints) == 1_000_000


def test_config_parsing():
    cfg = parse_config(
        """
        # comment line
        experiment = sdp-vs-newton
        n = 3   # trailing comment
        noise = uniform
        noise_level = 1e-4
        full_scale = yes
        a = 0.75
        b = 1.25
        """
    )
    assert cfg.experiment == "sdp-vs-newton"
    assert cfg.n == 3 and cfg.noise_level == 1e-4 and cfg.full_scale
    assert not cfg.box_is_default and cfg.a == 0.75
    assert parse_config("").box_is_default


@pytest.mark.parametrize(
    "text",
    ["bogus = 1", "n = three", "just a line", "noise = loud", "noise = uniform", "a = 2\nb = 1", "full_scale = maybe", "seed = -1"],
)
def test_config_errors(text):
    with pytest.raises(InvalidInputError):
        parse_config(text)


def test_config_layering():
    base = parse_config("seed = 9\ntrials = 5")
    cfg = parse_config("trials = 7", base=base)
    assert cfg.seed == 9 and cfg.trials == 7
    assert cfg.trials_or(100) == 7
    assert ExperimentConfig().trials_or(100, 1000) == 100
    assert ExperimentConfig(full_scale=True).trials_or(100, 1000) == 1000


def test_json_and_csv_formatting():
    text = dumps_json({"b": np.float64(0.1), "a": [np.int64(2), float("nan")], "c": np.array([1.5])})
    assert json.loads(text) == {"a": [2, None], "b": 0.1, "c": [1.5]}
    assert text.index('"a"') < text.index('"b"')
    t = Table(["x", "y"])
    t.add(x=1 / 3, y=np.int64(4))
    assert table_csv(t) == "x,y\n0.3333333333333333,4\n"
    assert table_csv(Table(["x", "y"])) == "x,y\n"


def test_emit_writes_files_and_timings_apart(tmp_path):
    man = RunManifest({"experiment": "demo"})
    man.table("empty", ["a", "b"])
    man.timings["stage"] = 1.25
    paths = emit(man, tmp_path / "out")
    names = sorted(os.path.basename(p) for p in paths)
    assert names == ["empty.csv", "manifest.json", "timings.json"]
    assert (tmp_path / "out" / "empty.csv").read_text() == "a,b\n"
    assert "stage" not in (tmp_path / "out" / "manifest.json").read_text()
    emit(man, tmp_path / "json", fmt="json")
    assert json.loads((tmp_path / "json" / "empty.json").read_text()) == {"columns": ["a", "b"], "rows": []}


def test_emit_reports_path_on_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit(RunManifest({}), blocker / "sub")


def test_run_trials_order_and_workers():
    assert run_trials(_square, 6) == [0, 1, 4, 9, 16, 25]
    assert run_trials(_square, 6, workers=2) == run_trials(_square, 6)


def _files(path):
    return {name: (path / name).read_bytes() for name in sorted(os.listdir(path)) if name != "timings.json"}


def test_rerun_is_byte_identical_for_any_worker_count(tmp_path):
    outs = []
    for label, workers in (("a", 1), ("b", 1), ("c", 2)):
        cfg = ExperimentConfig(experiment="error-per-annulus", n=4, trials=6, seed=11, out=str(tmp_path / label), workers=workers)
        emit(run_experiment(cfg), cfg.out)
        outs.append(_files(tmp_path / label))
    for other in outs[1:]:
        assert other.keys() == outs[0].keys()
        for name in other:
            if name == "manifest.json":
                a, b = json.loads(other[name]), json.loads(outs[0][name])
                for d in (a, b):
                    d["config"].pop("out")
                    d["config"].pop("workers")
                assert a == b
            else:
                assert other[name] == outs[0][name], name


def test_figures_are_deterministic(tmp_path):
    for label in ("a", "b"):
        cfg = ExperimentConfig(experiment="landscape-1d", out=str(tmp_path / label))
        emit(run_experiment(cfg), cfg.out)
    svgs = [n for n in os.listdir(tmp_path / "a") if n.endswith(".svg")]
    assert svgs
    for name in svgs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_experiment():
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(experiment="nope"))


@pytest.mark.parametrize("name", ["det-table", "random-guess", "implicit-curves", "mean-error-vs-n"])
def test_quick_experiments_run(tmp_path, name):
    cfg = ExperimentConfig(experiment=name, n=3 if name != "implicit-curves" else 0, trials=5, out=str(tmp_path), figures=False)
    man = run_experiment(cfg)
    assert man.config["experiment"] == name
    assert man.tables
    assert set(EXPERIMENTS) >= {name}
