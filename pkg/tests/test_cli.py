import hashlib
import json
from pathlib import Path

import jsonschema
import pytest

from latsel import cli
from latsel.dataset import load_dataset, read_header
from latsel.errors import NonFiniteLoss


@pytest.fixture(autouse=True)
def fake_clock_env(monkeypatch):
    monkeypatch.setenv("LATSEL_CLOCK", "fake:7")


def run(*argv):
    return cli.main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """bn and linear datasets plus LR/MEDN models, built once."""
    mp = pytest.MonkeyPatch()
    mp.setenv("LATSEL_CLOCK", "fake:7")
    mp.setenv("LATSEL_PROBE", "fake:8589934592:0.25")
    root = tmp_path_factory.mktemp("ws")
    (root / "data").mkdir()
    (root / "models").mkdir()
    assert run("generate", "--kinds", "bn,linear", "--count", 50, "--seed", 3, "--out", root / "data") == 0
    assert run("train", "--kinds", "bn,linear", "--roster", "LR,MEDN", "--epochs", 3,
               "--data", root / "data", "--models", root / "models") == 0
    mp.undo()
    return root


def test_generate_writes_counts(tmp_path, capsys):
    (tmp_path / "d").mkdir()
    assert run("generate", "--kinds", "bn", "--count", 25, "--seed", 1, "--out", tmp_path / "d") == 0
    assert len(load_dataset(tmp_path / "d" / "bn.csv")) == 25
    assert "bn: 25 samples, 0 probe failures" in capsys.readouterr().out


def test_generate_counts_probe_failures(tmp_path, capsys, monkeypatch):
    import latsel.dataset as ds
    from latsel.probe import FailingProbe

    monkeypatch.setattr(ds, "default_probe", lambda: FailingProbe())
    assert run("generate", "--kinds", "linear", "--count", 12, "--out", tmp_path) == 0
    assert "linear: 12 samples, 12 probe failures" in capsys.readouterr().out


def test_generate_dynamic_records_load(tmp_path):
    assert run("generate", "--kinds", "maxpool", "--count", 10, "--dynamic", "--out", tmp_path) == 0
    assert json.loads(read_header(tmp_path / "maxpool.csv")["load"])["enabled"] is True


def test_generate_missing_output_dir(tmp_path, capsys):
    assert run("generate", "--kinds", "bn", "--count", 5, "--out", tmp_path / "nope") == 3
    assert "does not exist" in capsys.readouterr().err


def test_bad_kind_and_roster_exit_2(tmp_path):
    assert run("generate", "--kinds", "conv3d", "--out", tmp_path) == 2
    assert run("train", "--roster", "XGB", "--data", tmp_path) == 2


def test_train_defaults():
    args = cli.parse_args(["train"])
    assert (args.epochs, args.lr) == (500, 0.005)
    assert [r.label for r in args.roster] == ["LR", "MLP", "RF", "MEDN"]


def test_train_lr_only_one_file_per_kind(workspace, tmp_path):
    models = tmp_path / "m"
    models.mkdir()
    assert run("train", "--kinds", "bn,linear", "--roster", "LR", "--data", workspace / "data", "--models", models) == 0
    files = sorted(p.relative_to(models).as_posix() for p in models.rglob("*.bin"))
    assert files == ["bn/LR.bin", "linear/LR.bin"]


def test_train_rerun_identical(workspace, tmp_path):
    models = tmp_path / "m"
    models.mkdir()
    assert run("train", "--kinds", "bn,linear", "--roster", "LR,MEDN", "--epochs", 3,
               "--data", workspace / "data", "--models", models) == 0
    for rel in ("bn/LR.bin", "bn/MEDN.bin", "linear/MEDN.bin", "bn/MEDN.loss.csv", "manifest.json"):
        assert digest(models / rel) == digest(workspace / "models" / rel), rel


def test_train_loss_csv(workspace):
    lines = (workspace / "models" / "bn" / "MEDN.loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,validation_loss"
    assert len(lines) == 1 + 4  # initial loss plus three epochs


def test_train_nonfinite_exit_4(workspace, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NonFiniteLoss("diverged")

    monkeypatch.setattr(cli, "fit_regressor", boom)
    assert run("train", "--kinds", "bn", "--roster", "MLP", "--data", workspace / "data", "--models", tmp_path) == 4


def test_train_missing_dataset_exit_3(tmp_path):
    assert run("train", "--kinds", "conv", "--data", tmp_path, "--models", tmp_path) == 3


@pytest.mark.parametrize("p10", [False, True])
def test_evaluate_report(workspace, tmp_path, p10):
    out = tmp_path / "eval.json"
    flags = ["--p10"] if p10 else []
    assert run("evaluate", *flags, "--data", workspace / "data", "--models", workspace / "models", "--out", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, cli.report_schema())
    assert len(doc["results"]) == 4
    for row in doc["results"]:
        assert {"acc", "r", "tps_ms", "size_kb"} <= set(row)
        assert ("acc10" in row) is p10
    assert set(doc["averages"]) == {"LR", "MEDN"}


def test_evaluate_empty_roster_and_missing_model(workspace, tmp_path):
    common = ["--data", workspace / "data", "--models", workspace / "models", "--out", tmp_path / "e.json"]
    assert run("evaluate", "--roster", "", *common) == 2
    assert run("evaluate", "--roster", "RF", *common) == 5
    assert run("evaluate", "--data", workspace / "data", "--models", tmp_path, "--out", tmp_path / "e.json") == 5


@pytest.fixture(scope="module")
def evaluation(workspace):
    out = workspace / "evaluation.json"
    assert run("evaluate", "--data", workspace / "data", "--models", workspace / "models", "--out", out) == 0
    return out


@pytest.mark.parametrize("objective, expected", [("both", ["time", "space"]), ("time", ["time"]), ("space", ["space"])])
def test_select_objectives(evaluation, tmp_path, objective, expected):
    out = tmp_path / "sel.json"
    assert run("select", "--objective", objective, "--report", evaluation, "--out", out) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, cli.report_schema())
    assert [s["objective"] for s in doc["selections"]] == expected
    for sel in doc["selections"]:
        assert set(sel["mapping"]) == {"bn", "linear"}
        assert set(sel["mapping"].values()) <= {"LR", "MEDN"}
        assert sel["baseline_delta"]["skipped"] == []
    assert doc["config"]["epsilon_a"] == doc["config"]["epsilon_r"] == 0.05


def test_select_missing_or_wrong_report(tmp_path, workspace):
    assert run("select", "--report", tmp_path / "none.json", "--out", tmp_path / "s.json") == 5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "latsel-report", "version": 99, "command": "evaluate"}))
    assert run("select", "--report", bad, "--out", tmp_path / "s.json") == 5


def test_predict_with_model(workspace, capsys):
    model = workspace / "models" / "bn" / "MEDN.bin"
    assert run("predict", "--model", model, "kind=bn,N=2,L=14,C_i=32,M=4e9,U=0.3") == 0
    value = float(capsys.readouterr().out.split()[0])
    assert value > 0


def test_predict_routes_through_selection(workspace, evaluation, tmp_path, capsys):
    sel = tmp_path / "sel.json"
    assert run("select", "--objective", "space", "--report", evaluation, "--out", sel) == 0
    chosen = json.loads(sel.read_text())["selections"][0]["mapping"]["linear"]
    capsys.readouterr()
    assert run("predict", "--selection", sel, "--models", workspace / "models", "--probe", "fake:1000000:0.5",
               "kind=linear,N=4,C_i=64,C_o=32") == 0
    assert f"via {chosen}" in capsys.readouterr().out


def test_predict_probe_fills_measurables(workspace, monkeypatch):
    seen = {}
    real = cli.features_from_mapping

    def spy(values, schema):
        seen.update(values)
        return real(values, schema)

    monkeypatch.setattr(cli, "features_from_mapping", spy)
    model = workspace / "models" / "bn" / "LR.bin"
    assert run("predict", "--model", model, "--probe", "fake:123456:0.75", "kind=bn,N=2,L=14,C_i=32,M=1,U=0") == 0
    assert (seen["M"], seen["U"]) == (123456.0, 0.75)
    assert seen["N_d"] == 2 * 32 * 14 * 14 and seen["N_m"] == 64


def test_predict_errors(workspace):
    model = workspace / "models" / "bn" / "LR.bin"
    assert run("predict", "--model", model, "kind=conv9,N=1") == 2
    assert run("predict", "--model", model, "kind=bn,N=2,L=14") == 2
    assert run("predict", "--model", model, "kind=bn,N=2,L=x,C_i=3") == 2
    assert run("predict", "--model", model, "kind=linear,N=4,C_i=64,C_o=32,M=1,U=0") == 5
    assert run("predict", "--model", workspace / "nope.bin", "kind=bn,N=2,L=14,C_i=32") == 5


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[latsel]\nseed = 9\nepochs = 40\n[train]\nlr = 0.01\nroster = LR,RF\n")
    args = cli.parse_args(["--config", str(cfg), "train", "--epochs", "7"])
    assert (args.seed, args.epochs, args.lr) == (9, 7, 0.01)
    assert [r.label for r in args.roster] == ["LR", "RF"]
    cfg.write_text("[generate]\ndynamic = yes\ncount = 12\n")
    args = cli.parse_args(["--config", str(cfg), "generate"])
    assert args.dynamic is True and args.count == 12


def test_config_errors(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[latsel]\nepoch = 3\n")
    assert run("--config", cfg, "train") == 2
    cfg.write_text("[generate]\ndynamic = maybe\n")
    assert run("--config", cfg, "generate") == 2
    assert run("--config", tmp_path / "missing.ini", "train") == 3


def _pipeline(workdir):
    workdir.mkdir()
    return run("pipeline", "--kinds", "bn", "--count", 50, "--roster", "LR,MLP,RF,MEDN,MEDN-D",
               "--epochs", 5, "--trees", 10, "--workdir", workdir)


def test_pipeline_byte_identical_and_relocatable(tmp_path):
    assert _pipeline(tmp_path / "a") == 0
    assert _pipeline(tmp_path / "b") == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) >= 10
    for rel in files:
        assert digest(tmp_path / "a" / rel) == digest(tmp_path / "b" / rel), rel
    for name in ("evaluation.json", "selection.json"):
        text = (tmp_path / "a" / "reports" / name).read_text()
        assert str(tmp_path) not in text
        jsonschema.validate(json.loads(text), cli.report_schema())
