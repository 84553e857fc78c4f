import hashlib
import json

import pytest

from interbench.blocks import param_count
from interbench.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, main, parse_experiment_file
from interbench.datagen import Term, default_spec, read_dataset
from interbench.harness import CSV_COLUMNS, read_json_reports
from interbench.presets import PRESETS

GOLDEN_HEADER = (
    "name,variant,hyperparams,seed,config_hash,baseline,hit3_save,hit3_rel_gain,auc,oracle_auc,"
    "peak_memory_pct,peak_bytes,latency_median_us,latency_p99_us,latency_rel,param_count,"
    "interaction_param_count,final_train_loss,nan_events,restarts,diverged,host"
)
FAST = ["--steps", "10", "--batch-size", "64", "--latency-batch", "32", "--budget-bytes", "100000000"]


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    spec = d / "spec.json"
    spec.write_text(json.dumps(default_spec(n_train_sessions=30, n_eval_sessions=8).to_dict()))
    out = d / "small.ibds"
    assert main(["generate-data", "--spec", str(spec), "--seed", "2", "--out", str(out)]) == EXIT_OK
    return out


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestGenerateData:
    def test_same_seed_same_file(self, data_file, tmp_path):
        again = tmp_path / "again.ibds"
        spec = data_file.parent / "spec.json"
        assert main(["generate-data", "--spec", str(spec), "--seed", "2", "--out", str(again)]) == EXIT_OK
        assert sha(again) == sha(data_file)
        assert len(read_dataset(again)) == 38 * 25

    @pytest.mark.parametrize("order, code", [(4, EXIT_OK), (6, EXIT_CONFIG)])
    def test_term_order_limit(self, tmp_path, capsys, order, code):
        spec = default_spec(terms=[[Term(1.0, [("dense", j) for j in range(order)])], []],
                            n_train_sessions=4, n_eval_sessions=2)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert main(["generate-data", "--spec", str(path), "--out", str(tmp_path / "d.ibds")]) == code
        if code == EXIT_CONFIG:
            assert "order 6 exceeds the maximum of 5" in capsys.readouterr().err

    def test_corrupt_dataset_exit_code(self, data_file, tmp_path):
        bad = tmp_path / "bad.ibds"
        bad.write_bytes(data_file.read_bytes()[:100])
        assert main(["bench", "--preset", "linear", "--data", str(bad), *FAST]) == EXIT_DATA


class TestBench:
    def test_self_baseline_zero_delta(self, data_file, tmp_path):
        out = tmp_path / "self"
        code = main(["bench", "--preset", "baseline-dcnv2x4", "--baseline", "self", "--data", str(data_file),
                     "--out", str(out), *FAST])
        assert code == EXIT_OK
        (rep,), (cfg,) = read_json_reports(out.with_suffix(".json"))
        assert rep.hit3_rel_gain == 0.0 and rep.latency_rel == 0.0
        assert out.with_suffix(".csv").read_text().splitlines()[0] == GOLDEN_HEADER
        assert "| baseline-dcnv2x4 |" in out.with_suffix(".md").read_text()
        assert cfg["name"] == "baseline-dcnv2x4"

    def test_sweep_table_rows(self, data_file, tmp_path):
        out = tmp_path / "sweep"
        code = main(["bench", "--sweep", "stack-d5..d8", "--baseline", "baseline-dcnv2x4",
                     "--data", str(data_file), "--out", str(out), *FAST])
        assert code == EXIT_OK
        reps, _ = read_json_reports(out.with_suffix(".json"))
        assert [r.name for r in reps] == ["stack-d5", "stack-d6", "stack-d7", "stack-d8"]
        assert all(r.baseline == "baseline-dcnv2x4" and r.hit3_rel_gain is not None for r in reps)

    def test_final_preset_param_count(self, data_file, tmp_path):
        out = tmp_path / "final"
        code = main(["bench", "--preset", "pinterest-final", "--data", str(data_file), "--out", str(out),
                     "--steps", "2", "--batch-size", "32", "--latency-batch", "8", "--budget-bytes", str(10**9)])
        assert code == EXIT_OK
        (rep,), _ = read_json_reports(out.with_suffix(".json"))
        cfg = PRESETS["pinterest-final"].model_config()
        assert rep.interaction_param_count == param_count(cfg.resolved_interaction())

    def test_diverged_exit_code(self, data_file, tmp_path, capsys):
        code = main(["bench", "--preset", "stability-probe", "--data", str(data_file), *FAST])
        assert code == EXIT_DIVERGED
        assert "diverged" in capsys.readouterr().out

    def test_missing_budget(self, data_file, monkeypatch, capsys):
        monkeypatch.delenv("IB_BUDGET_BYTES", raising=False)
        args = [a for a in FAST if a not in ("--budget-bytes", "100000000")]
        assert main(["bench", "--preset", "linear", "--data", str(data_file), *args]) == EXIT_CONFIG
        monkeypatch.setenv("IB_BUDGET_BYTES", "50000000")
        assert main(["bench", "--preset", "linear", "--data", str(data_file), *args]) == EXIT_OK
        capsys.readouterr()

    def test_all_errors_listed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("IB_BUDGET_BYTES", raising=False)
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"preset": "no-such-preset", "model": {}, "colour": 1,
                                    "run": {"steps": 5, "speed": 2}, "baseline": "nowhere.json"}))
        assert main(["bench", str(path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        for fragment in ("colour", "speed", "exactly one of", "dataset", "nowhere.json", "budget_bytes"):
            assert fragment in err

    def test_experiment_file(self, data_file, tmp_path):
        path = tmp_path / "exp.json"
        out = tmp_path / "fromfile"
        path.write_text(json.dumps({"dataset": str(data_file), "preset": "linear", "budget_bytes": 10**8,
                                    "run": {"steps": 5, "batch_size": 32, "seeds": [0, 1]},
                                    "output": str(out)}))
        assert main(["train", str(path)]) == EXIT_OK
        reps, _ = read_json_reports(out.with_suffix(".json"))
        assert [r.seed for r in reps] == [0, 1]


class TestConfigRoundTrip:
    def test_fixed_point(self, data_file, tmp_path):
        doc = {"dataset": str(data_file), "model": PRESETS["gdcn-3"].model_config().to_dict(),
               "run": {"steps": 7, "batch_size": 16, "seed": 3}, "budget_bytes": 12345, "name": "x"}
        path = tmp_path / "a.json"
        path.write_text(json.dumps(doc))
        first = parse_experiment_file(str(path)).experiments[0].to_dict()
        again = dict(doc, model=first["model"], run=first["run"])
        path.write_text(json.dumps(again))
        assert parse_experiment_file(str(path)).experiments[0].to_dict() == first


class TestReport:
    def _reports(self, data_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["bench", "--preset", "linear", "--data", str(data_file), "--out", str(a), *FAST]) == 0
        assert main(["bench", "--preset", "linear,gdcn-3", "--data", str(data_file), "--out", str(b), *FAST]) == 0
        return a.with_suffix(".json"), b.with_suffix(".json")

    def test_join_dedups_and_keeps_columns(self, data_file, tmp_path, capsys):
        a, b = self._reports(data_file, tmp_path)
        out = tmp_path / "joined"
        capsys.readouterr()
        assert main(["report", str(a), str(b), "--format", "csv", "--out", str(out)]) == EXIT_OK
        captured = capsys.readouterr()
        assert "duplicate report 'linear'" in captured.err
        lines = out.with_suffix(".csv").read_text().splitlines()
        assert lines[0] == GOLDEN_HEADER == ",".join(CSV_COLUMNS)
        assert [ln.split(",")[0] for ln in lines[1:]] == ["linear", "gdcn-3"]

    def test_disjoint_join_keeps_rows(self, data_file, tmp_path, capsys):
        a, b = self._reports(data_file, tmp_path)
        out = tmp_path / "j2"
        assert main(["report", str(b), "--out", str(out)]) == EXIT_OK
        assert len(read_json_reports(out.with_suffix(".json"))[0]) == 2
        capsys.readouterr()


class TestRepro:
    def test_one_seed_rejected(self, data_file, capsys):
        assert main(["repro", "--preset", "linear", "--seeds", "0", "--data", str(data_file)]) == EXIT_CONFIG
        assert "at least 3 seeds" in capsys.readouterr().err

    def test_identical_seeds(self, data_file, tmp_path):
        out = tmp_path / "rep"
        code = main(["repro", "--preset", "baseline-dcnv2x4", "--seeds", "1,1,1", "--steps", "10",
                     "--batch-size", "64", "--data", str(data_file), "--out", str(out)])
        assert code == EXIT_OK
        rep = json.loads(out.with_suffix(".json").read_text())["repro"][0]
        assert rep["std_dev"] == 0.0 and rep["per_seed_hit3"][0] == rep["per_seed_hit3"][2]

    def test_unknown_preset(self, capsys):
        assert main(["repro", "--preset", "nope", "--seeds", "0..2"]) == EXIT_CONFIG
