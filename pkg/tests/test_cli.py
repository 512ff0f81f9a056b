import json
import types

import numpy as np
import pytest

from drasp import cli
from drasp import config as cfgmod
from drasp import experiments as ex
from drasp import metrics as mt
from drasp import synthbench as sb

TINY_CONF = """\
# small end-to-end configuration
bench.num_systems = 4
bench.clips_per_system = 10
bench.t_min = 12
bench.t_max = 24
bench.d_in = 4
bench.rate_range = 0.0, 1.0
model.d = 4
model.encoder_hidden = 6
model.d_attn = 4
model.attn_heads = 2
model.temperatures = 1, 3
model.head_hidden = 4
model.segment_size = 3
train.lr = 0.01
train.batch_size = 8
train.max_epochs = 2
experiment.seeds = 0, 1
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_CONF)
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def error_of(err):
    line = err.strip().splitlines()[-1]
    assert line.startswith("ERROR ")
    return json.loads(line[len("ERROR "):])


# config -------------------------------------------------------------------------


def test_config_parsing(conf):
    exp = cfgmod.load(conf)
    assert exp.bench.num_systems == 4 and exp.bench.rate_range == (0.0, 1.0)
    assert exp.model.temperatures == (1.0, 3.0)
    assert exp.seeds == (0, 1)
    assert len(exp.methods) == 8 and exp.split == "test"
    assert json.loads(exp.echo())["train"]["lr"] == 0.01


@pytest.mark.parametrize("text", ["bench.nope = 1", "widget.x = 2", "bench.seed 3",
                                  "bench.seed = 1\nbench.seed = 2", "experiment.methods = median",
                                  "experiment.save_checkpoints = maybe"])
def test_config_errors(text):
    with pytest.raises(ValueError):
        cfgmod.from_mapping(cfgmod.parse_lines(text.splitlines()))


def test_config_comments_and_bools():
    exp = cfgmod.from_mapping(cfgmod.parse_lines(
        ["# header", "experiment.save_checkpoints = false  # trailing", "", "train.optimizer = sgd"]))
    assert exp.save_checkpoints is False and exp.train.optimizer == "sgd"


# generate -----------------------------------------------------------------------


def test_generate_prints_checksum(tmp_path, conf, capsys):
    code, out, _ = run(["generate", "--config", conf, "--out", tmp_path / "a"], capsys)
    assert code == 0
    digest = out.split("sha256 ")[1].strip()
    exp = cfgmod.load(conf)
    assert digest == sb.checksum(sb.generate(exp.bench))
    assert sb.checksum(sb.load(tmp_path / "a" / "dataset")) == digest
    code, out2, _ = run(["generate", "--config", conf, "--out", tmp_path / "b"], capsys)
    assert out2.split("sha256 ")[1].strip() == digest


def test_generate_zero_systems_fails(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("bench.num_systems = 0\n")
    code, _, err = run(["generate", "--config", path, "--out", tmp_path], capsys)
    assert code == 1
    assert error_of(err)["command"] == "generate"


def test_output_directory_from_environment(tmp_path, conf, capsys, monkeypatch):
    monkeypatch.setenv("DRASP_OUT", str(tmp_path / "env"))
    assert run(["generate", "--config", conf], capsys)[0] == 0
    assert (tmp_path / "env" / "dataset" / "manifest.json").exists()


# compare / sweep / scatter -------------------------------------------------------


@pytest.fixture(scope="module")
def compared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cmp")
    conf = root / "tiny.conf"
    conf.write_text(TINY_CONF)
    outs = []
    for name in ("a", "b"):
        assert cli.main(["compare", "--config", str(conf), "--out", str(root / name)]) == 0
        outs.append(root / name)
    return conf, outs


def test_compare_rows_and_determinism(compared):
    conf, (a, b) = compared
    rows = ex.read_table(a / "compare.tsv")
    assert len(rows) == 8 * 2
    assert all(r["status"] == "ok" for r in rows)
    assert {r["method"] for r in rows} == set(cfgmod.ExperimentConfig().methods)
    for name in ("compare.tsv", "compare_summary.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "compare.tsv").read_text().splitlines()
    assert header[0] == "# drasp-compare v1" and header[1].startswith("# config: {")
    assert len(list((a / "checkpoints").glob("*.npz"))) == 16


def test_compare_summary_is_mean_over_seeds(compared):
    _, (a, _) = compared
    rows = ex.read_table(a / "compare.tsv")
    summary = {r["method"]: r for r in ex.read_table(a / "compare_summary.tsv")}
    for method, s in summary.items():
        vals = [float(r["srcc"]) for r in rows if r["method"] == method]
        assert float(s["srcc_mean"]) == pytest.approx(np.mean(vals), abs=1e-15)
        assert float(s["srcc_std"]) == pytest.approx(np.std(vals), abs=1e-15)
        assert int(s["runs_ok"]) == 2


def test_export_scatter_consistent_with_compare(compared, tmp_path, capsys):
    conf, (a, _) = compared
    ckpt = a / "checkpoints" / "drasp-seed1.npz"
    code, _, _ = run(["export-scatter", "--config", conf, "--checkpoint", ckpt, "--out", tmp_path], capsys)
    assert code == 0
    rows = ex.read_table(tmp_path / "scatter.tsv")
    assert len(rows) == 4
    pred = [float(r["predicted"]) for r in rows]
    truth = [float(r["truth"]) for r in rows]
    row = next(r for r in ex.read_table(a / "compare.tsv") if r["method"] == "drasp" and r["seed"] == "1")
    assert mt.srcc(pred, truth) == pytest.approx(float(row["srcc"]), abs=1e-12)


def test_export_scatter_missing_checkpoint(tmp_path, conf, capsys):
    code, _, err = run(["export-scatter", "--config", conf, "--checkpoint", tmp_path / "x.npz",
                        "--out", tmp_path], capsys)
    assert code == 1
    assert error_of(err)["error"] == "FileNotFoundError"


def test_scatter_of_perfect_model_on_identity_line(conf):
    dataset = sb.generate(cfgmod.load(conf).bench)
    truth_by_clip = {c.clip_id: c.true_mos for c in dataset.clips}
    oracle = types.SimpleNamespace(
        config=types.SimpleNamespace(heads=("mos",)),
        predict=lambda exs: {"mos": np.array([truth_by_clip[e.clip_id] for e in exs])},
    )
    rows = ex.scatter_rows(oracle, dataset, "test")
    assert len(rows) == 4
    for _, _, p, t in rows:
        assert p == pytest.approx(t, abs=1e-12)


def test_sweep_segment_rows(tmp_path, conf, capsys):
    code, _, _ = run(["sweep-segment", "--config", conf, "--out", tmp_path], capsys)
    assert code == 0
    rows = ex.read_table(tmp_path / "sweep.tsv")
    assert len(rows) == 5 * 2
    assert sorted({int(r["n"]) for r in rows}) == [1, 5, 10, 25, 50]
    code, _, _ = run(["sweep-segment", "--config", conf, "--seed", 3, "--n", "2,4",
                      "--out", tmp_path / "s"], capsys)
    rows = ex.read_table(tmp_path / "s" / "sweep.tsv")
    assert [(r["n"], r["seed"]) for r in rows] == [("2", "3"), ("4", "3")]


def test_failed_run_is_recorded_not_raised(conf):
    exp = cfgmod.load(conf)
    dataset = sb.generate(exp.bench)
    res = ex.run_one(dataset, exp, "drasp", 0, segment_size=0)
    assert res["status"].startswith("error: ValueError")
