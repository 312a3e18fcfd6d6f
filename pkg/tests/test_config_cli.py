import json
import xml.etree.ElementTree as ET

import pytest

from ctxdet.cli import main
from ctxdet.config import ToolConfig, load_tool_config
from ctxdet.errors import DataError
from ctxdet.geometry import RelationConfig
from ctxdet.metrics import load_metrics_json
from ctxdet.network import TrainConfig, load_model, save_model
from ctxdet.pipelines import read_audit_log

TOML_DOC = """\
relabel_t = 0.35
detector_thresholds = [0.5, 0.6]

[relations]
central_form = "midpoint"
eps_scale = 0.1

[train]
hidden = 32
seed = 7

[paths]
workdir = "/tmp/ctxdet"
"""


class TestToolConfig:
    def test_defaults(self):
        cfg = ToolConfig()
        assert cfg.relations == RelationConfig()
        assert cfg.train == TrainConfig()
        assert cfg.detector_thresholds == (0.5, 0.6, 0.7)
        assert cfg.relabel_t == 0.4

    def test_load_toml(self, tmp_path):
        path = tmp_path / "tool.toml"
        path.write_text(TOML_DOC)
        cfg = load_tool_config(str(path))
        assert cfg.relabel_t == 0.35
        assert cfg.detector_thresholds == (0.5, 0.6)
        assert cfg.relations.central_form == "midpoint"
        assert cfg.relations.eps_scale == 0.1
        assert cfg.train.hidden == 32 and cfg.train.seed == 7
        assert cfg.paths == {"workdir": "/tmp/ctxdet"}

    def test_load_json(self, tmp_path):
        path = tmp_path / "tool.json"
        path.write_text(json.dumps({"relabel_t": 0.2, "train": {"hidden": 9}}))
        cfg = load_tool_config(str(path))
        assert cfg.relabel_t == 0.2
        assert cfg.train.hidden == 9
        assert cfg.relations == RelationConfig()  # untouched section keeps defaults

    def test_extensionless_file_accepts_either_format(self, tmp_path):
        path = tmp_path / "tool"
        path.write_text("relabel_t = 0.3\n")
        assert load_tool_config(str(path)).relabel_t == 0.3
        path.write_text('{"relabel_t": 0.25}')
        assert load_tool_config(str(path)).relabel_t == 0.25

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "tool.toml"
        path.write_text("bogus = 1\n")
        with pytest.raises(DataError, match="unknown config keys"):
            load_tool_config(str(path))
        path.write_text("[relations]\nbogus = true\n")
        with pytest.raises(DataError, match="relation config"):
            load_tool_config(str(path))
        path.write_text("[train]\nbogus = 1\n")
        with pytest.raises(DataError, match="train config"):
            load_tool_config(str(path))

    def test_malformed_documents_rejected(self, tmp_path):
        path = tmp_path / "tool.toml"
        path.write_text("= broken")
        with pytest.raises(DataError, match="TOML"):
            load_tool_config(str(path))
        path = tmp_path / "tool.json"
        path.write_text("{broken")
        with pytest.raises(DataError, match="JSON"):
            load_tool_config(str(path))

    def test_value_validation(self, tmp_path):
        path = tmp_path / "tool.toml"
        path.write_text("relabel_t = 1.0\n")
        with pytest.raises(DataError, match="relabel_t"):
            load_tool_config(str(path))
        path.write_text("detector_thresholds = []\n")
        with pytest.raises(DataError, match="detector_thresholds"):
            load_tool_config(str(path))

    def test_to_dict_is_json_serializable(self):
        json.dumps(ToolConfig().to_dict())


@pytest.fixture(scope="module")
def cli_world(tmp_path_factory, rule_model):
    """A small synthetic dataset on disk plus a trained model file."""
    root = tmp_path_factory.mktemp("cli_world")
    code = main(
        ["synth", "--out-dir", str(root), "--images", "60", "--seed", "5",
         "--log-level", "warning"]
    )
    assert code == 0
    model_path = root / "model.json"
    save_model(rule_model, str(model_path))
    return {
        "root": root,
        "annotations": str(root / "annotations.json"),
        "detections": str(root / "detections.json"),
        "model": str(model_path),
    }


def run(args):
    return main([*args, "--log-level", "warning"])


class TestCliUsageErrors:
    def test_no_command_exits_one(self, capsys):
        assert main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_flag_exits_one(self, capsys):
        assert main(["cooc", "--nope"]) == 1

    def test_missing_required_argument_exits_one(self, capsys):
        assert main(["cooc", "--out", "x.csv"]) == 1
        assert "--annotations" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out


class TestCliDataErrors:
    def test_missing_input_file_exits_two(self, tmp_path):
        code = run(
            ["cooc", "--annotations", str(tmp_path / "absent.json"),
             "--out", str(tmp_path / "out.csv")]
        )
        assert code == 2

    def test_malformed_annotations_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        code = run(["cooc", "--annotations", str(bad), "--out", str(tmp_path / "o.csv")])
        assert code == 2

    def test_bad_config_exits_two(self, tmp_path, cli_world):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("bogus = 1\n")
        code = run(
            ["cooc", "--annotations", cli_world["annotations"],
             "--out", str(tmp_path / "o.csv"), "--config", str(cfg)]
        )
        assert code == 2


class TestCliCommands:
    def test_cooc_writes_square_matrix(self, tmp_path, cli_world, capsys):
        out = tmp_path / "cooc.csv"
        assert run(["cooc", "--annotations", cli_world["annotations"],
                    "--out", str(out)]) == 0
        assert "6x6" in capsys.readouterr().out
        rows = out.read_text().splitlines()
        assert rows[0].startswith("class,class_00,")
        assert len(rows) == 7

    def test_features_writes_csv(self, tmp_path, cli_world, capsys):
        out = tmp_path / "features.csv"
        assert run(["features", "--annotations", cli_world["annotations"],
                    "--detections", cli_world["detections"], "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0].split(",")
        assert len(header) == 6 * 16 + 1 + 1  # features + confidence + label
        assert "feature rows" in capsys.readouterr().out

    def test_train_writes_model(self, tmp_path, cli_world, capsys):
        out = tmp_path / "model.json"
        code = run(
            ["train", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--out", str(out),
             "--hidden", "8", "--epochs", "40", "--seed", "1"]
        )
        assert code == 0
        model = load_model(str(out))
        assert model.hidden == 8
        assert model.vocabulary == tuple(f"class_{i:02d}" for i in range(6))
        assert model.relation_config == RelationConfig()
        assert "trained on" in capsys.readouterr().out

    def test_train_from_feature_csv_matches_direct_training(self, tmp_path, cli_world):
        features = tmp_path / "rows.csv"
        assert run(["features", "--annotations", cli_world["annotations"],
                    "--detections", cli_world["detections"],
                    "--out", str(features)]) == 0
        direct = tmp_path / "direct.json"
        reused = tmp_path / "reused.json"
        base = ["train", "--annotations", cli_world["annotations"],
                "--detections", cli_world["detections"],
                "--hidden", "6", "--epochs", "25", "--seed", "3"]
        assert run([*base, "--out", str(direct)]) == 0
        assert run([*base, "--out", str(reused), "--features", str(features)]) == 0
        assert direct.read_bytes() == reused.read_bytes()

    def test_train_rejects_feature_csv_with_wrong_width(self, tmp_path, cli_world):
        bad = tmp_path / "bad.csv"
        bad.write_text("f0,f1,label\n0.1,0.2,1\n0.3,0.4,0\n")
        code = run(
            ["train", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--out", str(tmp_path / "m.json"),
             "--features", str(bad)]
        )
        assert code == 2

    def test_rescore_writes_detections(self, tmp_path, cli_world, capsys):
        out = tmp_path / "rescored.json"
        code = run(
            ["rescore", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"],
             "--model", cli_world["model"], "--out", str(out)]
        )
        assert code == 0
        doc = json.loads(out.read_text())
        original = json.loads(open(cli_world["detections"]).read())
        assert len(doc) == len(original)
        assert any(
            rec["score"] != orig["score"] for rec, orig in zip(doc, original)
        )
        assert "rescored" in capsys.readouterr().out

    def test_relabel_writes_audit_log(self, tmp_path, cli_world, capsys):
        out = tmp_path / "relabel.json"
        audit = tmp_path / "audit.jsonl"
        code = run(
            ["relabel", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"],
             "--model", cli_world["model"], "--out", str(out),
             "--t", "0.4", "--audit", str(audit)]
        )
        assert code == 0
        entries = read_audit_log(str(audit))
        original = json.loads(open(cli_world["detections"]).read())
        assert len(entries) == len(original)  # one record per input detection
        statuses = {e["status"] for e in entries}
        assert statuses <= {"kept", "relabeled", "removed"}
        assert "relabeling at t=0.4" in capsys.readouterr().out

    def test_eval_detector_mode(self, tmp_path, cli_world, capsys):
        report_path = tmp_path / "report.json"
        code = run(
            ["eval", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--out", str(report_path)]
        )
        assert code == 0
        line = capsys.readouterr().out
        assert "mode=detector" in line and "auc=" in line
        report = load_metrics_json(str(report_path))
        assert 0.0 <= report["auc"] <= 1.0
        assert report["threshold"] == 0.0

    def test_eval_rescore_beats_detector(self, tmp_path, cli_world):
        detector_path = tmp_path / "detector.json"
        rescore_path = tmp_path / "rescore.json"
        base = ["eval", "--annotations", cli_world["annotations"],
                "--detections", cli_world["detections"]]
        assert run([*base, "--out", str(detector_path)]) == 0
        assert run([*base, "--mode", "rescore", "--model", cli_world["model"],
                    "--out", str(rescore_path)]) == 0
        detector = load_metrics_json(str(detector_path))
        rescored = load_metrics_json(str(rescore_path))
        assert rescored["auc"] > detector["auc"]

    def test_eval_relabel_mode_runs(self, tmp_path, cli_world, capsys):
        code = run(
            ["eval", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--mode", "relabel",
             "--model", cli_world["model"], "--t", "0.4"]
        )
        assert code == 0
        assert "mode=relabel" in capsys.readouterr().out

    def test_eval_model_modes_require_model(self, cli_world, capsys):
        code = run(
            ["eval", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--mode", "rescore"]
        )
        assert code == 1
        assert "--model is required" in capsys.readouterr().err

    def test_viz_writes_svg(self, tmp_path, cli_world):
        out = tmp_path / "scene.svg"
        code = run(
            ["viz", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"],
             "--image-id", "1", "--out", str(out)]
        )
        assert code == 0
        root = ET.fromstring(out.read_text())
        ns = "{http://www.w3.org/2000/svg}"
        assert len(root.findall(f"{ns}text")) >= 2

    def test_viz_unknown_image_exits_two(self, tmp_path, cli_world):
        code = run(
            ["viz", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"],
             "--image-id", "99999", "--out", str(tmp_path / "x.svg")]
        )
        assert code == 2

    def test_config_controls_training(self, tmp_path, cli_world):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text("[train]\nhidden = 5\nmax_epochs = 10\nseed = 2\n")
        out = tmp_path / "model.json"
        code = run(
            ["train", "--annotations", cli_world["annotations"],
             "--detections", cli_world["detections"], "--out", str(out),
             "--config", str(cfg)]
        )
        assert code == 0
        assert load_model(str(out)).hidden == 5

    def test_resolved_config_is_logged(self, tmp_path, cli_world, caplog):
        out = tmp_path / "cooc.csv"
        with caplog.at_level("INFO", logger="ctxdet"):
            code = main(
                ["cooc", "--annotations", cli_world["annotations"],
                 "--out", str(out), "--log-level", "info"]
            )
        assert code == 0
        assert any("resolved config" in r.getMessage() for r in caplog.records)
