import csv
import json

import numpy as np
import pytest

from autoids.ensemble import predict_ensemble
from autoids.errors import ConfigError, DataError, PersistenceError, StageError
from autoids.fixtures import fixture_config, write_fixture
from autoids.persistence import file_digest, load_model
from autoids.pipeline import (ALPHA_RANGE, PipelineConfig, describe, evaluate, holdout_audit,
                              load_feature_table, predict_file, run_train, train_and_save)
from autoids.report import dumps_report, strip_wall_clock, validate_report
from conftest import TINY_COUNTS


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    from conftest import TINY_CONFIG
    from autoids.fixtures import write_fixture

    d = tmp_path_factory.mktemp("run")
    data = write_fixture(d / "flows.csv", 1, counts=TINY_COUNTS, n_features=12)
    cfg = PipelineConfig.from_dict(dict(TINY_CONFIG, data=str(data)))
    ens, report = train_and_save(cfg, d / "model.aids", d / "report.json")
    return ens, report, d


class TestRunTrain:
    def test_report_contract(self, trained):
        ens, report, d = trained
        validate_report(report)
        on_disk = json.loads((d / "report.json").read_text())
        assert on_disk == json.loads(dumps_report(report))
        ev = report["evaluation"]
        cm = np.array(ev["confusion_matrix"])
        assert ev["accuracy"] == np.trace(cm) / cm.sum()
        assert cm.sum(axis=1).tolist() == [c["support"] for c in ev["per_class"]]
        for agg, key in (("weighted_precision", "precision"), ("weighted_recall", "recall"), ("weighted_f1", "f1")):
            per = [c[key] for c in ev["per_class"]]
            assert min(per) - 1e-12 <= ev[agg] <= max(per) + 1e-12

    def test_stage_outputs(self, trained):
        ens, report, _ = trained
        assert len(report["cv_table"]) == 6 and len(report["top_families"]) == 3
        assert ens.base_families == [b["family"] for b in report["base_models"]] == report["top_families"]
        assert ens.meta_family == report["top_families"][0]
        n_sel = len(ens.selected_features.selected)
        assert all(m.n_features == n_sel for m in ens.base_models)
        assert ens.meta_model.n_features == 3 * len(ens.class_names)
        fs = report["feature_selection"]
        assert fs["cumulative"] >= fs["alpha"] or fs["fallback"]
        assert all(len(b["trials"]) == 3 for b in report["base_models"])
        assert len(report["meta_learner"]["trials"]) == 2

    def test_audits(self, trained):
        _, report, _ = trained
        assert report["holdout_audit"]["passed"]
        assert report["leakage_audit"]["out_of_fold_audit"] is True

    def test_balancing_only_touches_training_rows(self, trained):
        _, report, _ = trained
        before = report["balancing"]["counts_before"]
        assert sum(before) == report["data"]["n_train"]
        assert all(a >= b for a, b in zip(report["balancing"]["counts_after"], before))

    def test_model_file_matches_report(self, trained):
        ens, report, d = trained
        assert report["model_digest"] == file_digest(d / "model.aids")
        loaded = load_model(d / "model.aids")
        X = np.random.default_rng(0).normal(size=(50, 12))
        assert np.array_equal(predict_ensemble(loaded, X)[1], predict_ensemble(ens, X)[1])
        assert loaded.config["pipeline"]["seed"] == 0

    def test_literal_meta_feature_mode(self, tiny_config):
        _, report = run_train(PipelineConfig.from_dict(dict(tiny_config, meta_feature_mode="paper_literal")))
        assert report["mode"]["meta_feature_mode"] == "paper_literal"
        assert report["leakage_audit"]["out_of_fold_audit"] is None

    def test_tuned_alpha(self, tiny_config):
        _, report = run_train(PipelineConfig.from_dict(dict(tiny_config, tune_alpha=True)))
        fs = report["feature_selection"]
        assert ALPHA_RANGE[0] <= fs["alpha"] <= ALPHA_RANGE[1]
        assert len(fs["alpha_trials"]) == 3

    def test_small_class_stage_error(self, tmp_path):
        path = write_fixture(tmp_path / "f.csv", 1, counts=(300, 200, 100, 40, 3), n_features=12)
        from conftest import TINY_CONFIG

        with pytest.raises(StageError) as err:
            run_train(PipelineConfig.from_dict(dict(TINY_CONFIG, data=str(path), k=5)))
        assert err.value.stage == "split" and isinstance(err.value.cause, DataError)
        assert err.value.exit_code == DataError.exit_code

    def test_missing_data_path(self):
        with pytest.raises(StageError) as err:
            run_train(PipelineConfig())
        assert err.value.stage == "load"


def test_deterministic_across_thread_counts(tiny_config, tmp_path, monkeypatch):
    cfg = PipelineConfig.from_dict(tiny_config)
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("AUTOIDS_THREADS", threads)
        _, report = train_and_save(cfg, tmp_path / f"m{threads}.aids", tmp_path / f"r{threads}.json")
        outs.append(report)
    a, b = (dumps_report(strip_wall_clock(r)) for r in outs)
    assert a == b
    assert file_digest(tmp_path / "m1.aids") == file_digest(tmp_path / "m3.aids")


def test_failed_save_removes_partial_artifacts(tiny_config, tmp_path):
    model = tmp_path / "m.aids"
    with pytest.raises(PersistenceError):
        train_and_save(PipelineConfig.from_dict(tiny_config), model, tmp_path / "missing" / "r.json")
    assert not model.exists()


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"alpah": 0.8})

    @pytest.mark.parametrize("bad", [{"test_fraction": 1.0}, {"alpha": 0.0}, {"k": 1}, {"hpo_budget": 0},
                                     {"meta_feature_mode": "x"}, {"tpe_gamma": 1.5}, {"tvae": {"epochs": 0}},
                                     {"tvae": {"nope": 1}}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(bad)

    def test_json_round_trip(self, tmp_path):
        cfg = PipelineConfig.from_dict(fixture_config())
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert PipelineConfig.from_json(p) == cfg
        assert PipelineConfig.from_json(p, data="x.csv").data == "x.csv"

    def test_unreadable_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(p)
        with pytest.raises(ConfigError):
            PipelineConfig.from_json(tmp_path / "absent.json")


def test_holdout_audit_detects_leak():
    train, test = np.arange(0, 8), np.arange(8, 10)
    assert holdout_audit(10, train, test, {"hpo": train[:4]})["passed"]
    leaked = holdout_audit(10, train, test, {"hpo": np.array([1, 9])})
    assert not leaked["passed"]
    assert not holdout_audit(10, train, np.arange(7, 10), {})["passed"]


class TestScoring:
    def test_evaluate_file(self, trained, tiny_csv):
        ens, _, _ = trained
        out = evaluate(ens, tiny_csv)
        assert out["evaluation"]["n_samples"] == sum(TINY_COUNTS)
        validate_eval = out["evaluation"]
        assert 0 <= validate_eval["weighted_f1"] <= 1

    def test_predict_file(self, trained, tiny_csv, tmp_path):
        ens, _, _ = trained
        n = predict_file(ens, tiny_csv, tmp_path / "p.csv")
        with open(tmp_path / "p.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert n == len(rows) - 1 == sum(TINY_COUNTS)
        assert rows[0] == ["predicted_label"] + [f"confidence_{c}" for c in ens.class_names]
        assert all(r[0] in ens.class_names for r in rows[1:])
        assert all(abs(sum(map(float, r[1:])) - 1) < 1e-9 for r in rows[1:])

    def test_columns_by_name_and_imputation(self, trained, tmp_path):
        ens, _, _ = trained
        names = list(reversed(ens.feature_names))
        p = tmp_path / "x.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            w.writerow(["NaN"] + ["1.0"] * (len(names) - 1))
        X, y = load_feature_table(p, ens, require_labels=False)
        assert X.shape == (1, 12) and np.isfinite(X).all() and y is None
        assert X[0, 0] == 1.0

    def test_missing_columns(self, trained, tmp_path):
        ens, _, _ = trained
        p = tmp_path / "x.csv"
        p.write_text("f00,Label\n1,BENIGN\n")
        with pytest.raises(DataError):
            load_feature_table(p, ens, require_labels=True)

    def test_unknown_label(self, trained, tmp_path):
        ens, _, _ = trained
        p = tmp_path / "x.csv"
        p.write_text(",".join(ens.feature_names + ["Label"]) + "\n" + ",".join(["0"] * 12 + ["Worm"]) + "\n")
        with pytest.raises(DataError):
            evaluate(ens, p)

    def test_describe(self, trained):
        ens, _, _ = trained
        info = describe(ens)
        text = json.dumps(info)
        for fam in ens.base_families:
            assert fam in text
        assert ens.feature_names[ens.selected_features.selected[0]] in text
