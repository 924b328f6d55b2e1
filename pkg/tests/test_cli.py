import csv
import json
import pytest

from agribench.cli import ConfigError, execute, main, parse_config_file

BUNDLE_CFG = """
# synthetic bundle for CLI tests
out_dir={out}
base_seed=12
synth.n_counties=14
synth.years=2019,2020
synth.fields_per_county=1
synth.tasks=yield,tillage_ratio,tillage_class
synth.label_r2_ceiling=0.9
"""


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "synth.cfg"
    out = root / "bundle"
    cfg.write_text(BUNDLE_CFG.format(out=out))
    assert main(["synth", "--config", str(cfg)]) == 0
    return out


def test_config_parse_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("out_dir=x\nmystery=1\n")
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'mystery'"):
        parse_config_file(cfg)


def test_config_parse_bad_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just words\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_file(cfg)


def test_unknown_key_exits_nonzero(bundle, capsys):
    status = execute("featurize", None, [f"bundle={bundle}", "bogus.key=1"])
    assert status == 1
    assert "bogus.key" in capsys.readouterr().err


def test_missing_bundle_reported(capsys):
    status = execute("featurize", None, ["bundle=/nonexistent", "task.name=yield"])
    assert status == 1
    err = capsys.readouterr().err
    assert err.startswith("error: featurize:")
    assert "\n" == err[err.index("\n"):]  # single line


def test_featurize_tillage_column_count(bundle, tmp_path):
    out = tmp_path / "feat"
    status = execute("featurize", None, [
        f"bundle={bundle}", "task.name=tillage_ratio", f"out_dir={out}",
    ])
    assert status == 0
    with open(out / "features.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["unit_id", "year", "label"]
    assert len(header) == 3 + 67
    assert (out / "features.csv.config").exists()


def test_flag_overrides_take_precedence(bundle, tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text(f"bundle={bundle}\ntask.name=yield\ntask.crop=corn\n"
                   f"task.feature_set=RS\nout_dir={tmp_path / 'a'}\n")
    assert execute("featurize", str(cfg), []) == 0
    assert execute("featurize", str(cfg), [
        "task.feature_set=AEF", f"out_dir={tmp_path / 'b'}",
    ]) == 0
    with open(tmp_path / "a" / "features.csv", newline="") as fh:
        wide = len(next(csv.reader(fh)))
    with open(tmp_path / "b" / "features.csv", newline="") as fh:
        narrow = len(next(csv.reader(fh)))
    assert wide == 3 + 90 and narrow == 3 + 64


def test_train_writes_model_and_importance(bundle, tmp_path):
    out = tmp_path / "train"
    status = execute("train", None, [
        f"bundle={bundle}", "task.name=yield", "task.crop=corn",
        "task.feature_set=AEF", "model.kind=RF", "model.n_trees=10",
        f"out_dir={out}",
    ])
    assert status == 0
    model = json.loads((out / "model.json").read_text())
    assert model["format"] == "agribench-model"
    assert len(model["trees"]) == 10
    with open(out / "importance.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 64
    assert abs(sum(float(r["importance"]) for r in rows) - 1.0) < 1e-9


def test_benchmark_report_five_seed_rows(bundle, tmp_path):
    out = tmp_path / "bm"
    status = execute("benchmark", None, [
        f"bundle={bundle}", "task.name=yield", "task.crop=corn",
        "task.feature_set=AEF", "model.n_trees=10", "scheme=group_cv",
        "scheme.k=3", f"out_dir={out}",
    ])
    assert status == 0
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for fold in ("fold0", "fold1", "fold2"):
        seeds = {r["seed"] for r in rows
                 if r["fold"] == fold and r["metric"] == "R2" and r["seed"] != "mean"}
        assert seeds == {"1", "2", "3", "4", "5"}
    assert (out / "report.json").exists()


def test_identical_configs_identical_outputs(bundle, tmp_path):
    args = [
        f"bundle={bundle}", "task.name=yield", "task.crop=corn",
        "task.feature_set=AEF", "model.n_trees=8", "scheme=yearly_cv",
        "n_repeats=2",
    ]
    assert execute("benchmark", None, args + [f"out_dir={tmp_path / 'a'}"]) == 0
    assert execute("benchmark", None, args + [f"out_dir={tmp_path / 'b'}"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == \
           (tmp_path / "b" / "report.csv").read_bytes()
    assert (tmp_path / "a" / "report.json").read_bytes() == \
           (tmp_path / "b" / "report.json").read_bytes()


def test_report_command_summarizes(bundle, tmp_path, capsys):
    out = tmp_path / "bm"
    execute("benchmark", None, [
        f"bundle={bundle}", "task.name=yield", "task.crop=corn",
        "task.feature_set=AEF", "model.n_trees=8", "scheme=yearly_cv",
        "n_repeats=2", f"out_dir={out}",
    ])
    capsys.readouterr()
    assert main(["report", str(out / "report.csv")]) == 0
    text = capsys.readouterr().out
    assert "yield" in text and "R2" in text and "2019" in text

    assert execute("report", None, [], report_paths=["/nope.csv"]) == 1


def test_report_shows_tillage_rmse_as_percent(bundle, tmp_path, capsys):
    out = tmp_path / "bm_till"
    execute("benchmark", None, [
        f"bundle={bundle}", "task.name=tillage_ratio", "task.feature_set=AEF",
        "model.n_trees=8", "scheme=group_cv", "scheme.k=3", "n_repeats=1",
        f"out_dir={out}",
    ])
    capsys.readouterr()
    assert main(["report", str(out / "report.csv")]) == 0
    assert "%" in capsys.readouterr().out


def test_config_hash_excludes_execution_keys(bundle, tmp_path):
    base = [
        f"bundle={bundle}", "task.name=yield", "task.crop=corn",
        "task.feature_set=AEF",
    ]
    execute("featurize", None, base + [f"out_dir={tmp_path / 'a'}", "threads=1"])
    execute("featurize", None, base + [f"out_dir={tmp_path / 'b'}", "threads=8"])
    hash_a = [l for l in (tmp_path / "a" / "features.csv.config").read_text().splitlines()
              if l.startswith("config_hash=")]
    hash_b = [l for l in (tmp_path / "b" / "features.csv.config").read_text().splitlines()
              if l.startswith("config_hash=")]
    assert hash_a == hash_b
