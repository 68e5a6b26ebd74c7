import json
from pathlib import Path

import numpy as np
import pytest

from crowdkg.errors import ParseError, ValidationError
from crowdkg.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    canonical_mode,
    load_features,
    load_replay_dataset,
    parse_budget,
    rho_grid,
    rows_to_csv,
    rows_to_json,
    run_experiment,
    theta_grid,
    write_rows,
)

DATA = Path(__file__).parent / "data"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


GOLDEN_CONFIG = dict(K=4, budgets=[0, 6], policies=["optkg", "uniform"], replications=2, seed=123)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig().validate()
        assert cfg.mode == "binary"
        assert cfg.instance_prior == (1.0, 1.0)
        assert cfg.worker_prior == (4.0, 1.0)

    @pytest.mark.parametrize(
        "kwargs,field",
        [
            ({"replications": 0}, "replications"),
            ({"budgets": []}, "budgets"),
            ({"budgets": [-3]}, "budgets"),
            ({"budgets": ["x"]}, "budgets"),
            ({"policies": []}, "policies"),
            ({"policies": ["magic"]}, "magic"),
            ({"K": 0}, "K"),
            ({"C": 1}, "C"),
            ({"mode": "ternary"}, "mode"),
            ({"instance_prior": (0, 1)}, "instance_prior"),
            ({"worker_prior": "1"}, "worker_prior"),
            ({"seed": -1}, "seed"),
            ({"alpha": 0}, "alpha"),
            ({"theta": [1.5]}, "theta"),
            ({"mode": "hetero", "policies": ["dp"]}, "policies"),
        ],
    )
    def test_field_level_errors(self, kwargs, field):
        with pytest.raises(ValidationError, match=field):
            run_experiment(ExperimentConfig(**kwargs))

    def test_mode_aliases(self):
        assert canonical_mode("binary-homogeneous") == "binary"
        assert canonical_mode("binary-heterogeneous") == "hetero"

    def test_from_dict(self):
        cfg = ExperimentConfig.from_dict({"reps": 3, "instance-prior": [2, 2]})
        assert cfg.replications == 3
        with pytest.raises(ValidationError, match="bogus"):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_budget_suffix(self):
        assert parse_budget("5K", 21) == 105
        assert parse_budget("50K", 21) == 1050
        assert parse_budget(7, 21) == 7
        assert parse_budget("0.5K", 10) == 5

    def test_grids(self):
        t = theta_grid()
        assert len(t) == 21 and t[0] == 0 and t[10] == 0.5 and t[-1] == 1
        r = rho_grid()
        assert len(r) == 59
        np.testing.assert_allclose(r[:3], [0.1, 0.15, 0.2])
        np.testing.assert_allclose(r[8:11], [0.5, 0.505, 0.515])
        assert r[-1] == pytest.approx(0.995)


class TestRunExperiment:
    def test_zero_budget_is_prior_aggregation(self):
        cfg = ExperimentConfig(theta=[0.1, 0.7, 0.3, 0.9], budgets=[0], policies=["optkg"])
        (row,) = run_experiment(cfg)
        # uniform priors tie, so every instance is called positive
        assert row.accuracy == 0.5
        assert row.spent == 0

    def test_order_and_seeds(self):
        rows = run_experiment(ExperimentConfig(**GOLDEN_CONFIG))
        keys = [(r.policy, r.T, r.replication) for r in rows]
        assert keys == [(p, T, r) for p in ("optkg", "uniform") for T in (0, 6) for r in (0, 1)]
        assert [r.seed for r in rows[:2]] == [123, 122]

    def test_byte_identical(self):
        a = rows_to_csv(run_experiment(ExperimentConfig(**GOLDEN_CONFIG)))
        b = rows_to_csv(run_experiment(ExperimentConfig(**GOLDEN_CONFIG)))
        assert a == b

    def test_golden_file(self):
        text = rows_to_csv(run_experiment(ExperimentConfig(**GOLDEN_CONFIG)))
        assert text == (DATA / "golden_simulate.csv").read_text(encoding="utf-8")

    def test_columns(self):
        text = rows_to_csv(run_experiment(ExperimentConfig(K=2, budgets=[1])))
        assert text.splitlines()[0].split(",") == list(CSV_COLUMNS)

    def test_theta_grid_bookkeeping(self):
        cfg = ExperimentConfig(theta=theta_grid(), budgets=["50K"], policies=["optkg"])
        (row,) = run_experiment(cfg)
        assert row.T == 1050
        assert len(row.label_counts) == 21
        assert sum(row.label_counts) == 1050

    def test_common_draw_across_policies(self):
        cfg = ExperimentConfig(K=6, budgets=[0], policies=["optkg", "uniform"], replications=3, seed=9)
        rows = run_experiment(cfg)
        assert [r.accuracy for r in rows[:3]] == [r.accuracy for r in rows[3:]]

    def test_hetero_counts(self):
        cfg = ExperimentConfig(mode="binary-heterogeneous", K=5, M=4, budgets=[30], policies=["optkg", "uniform"])
        for row in run_experiment(cfg):
            assert sum(row.label_counts) == 30
            assert sum(row.worker_counts) == 30
            assert len(row.worker_counts) == 4

    def test_multiclass_and_contextual(self):
        rows = run_experiment(ExperimentConfig(mode="multiclass", K=3, C=3, budgets=[6], policies=["kg"]))
        assert rows[0].mode == "multiclass" and sum(rows[0].label_counts) == 6
        rows = run_experiment(ExperimentConfig(mode="contextual", K=4, p=2, budgets=[5], policies=["optkg"]))
        assert rows[0].mode == "contextual" and sum(rows[0].label_counts) == 5
        assert 0 <= rows[0].accuracy <= 1

    def test_timing(self):
        cfg = ExperimentConfig(K=5, budgets=[10, 40], policies=["optkg", "uniform"], timing=True)
        rows = run_experiment(cfg)
        assert all(isinstance(r.micros, int) and r.micros >= 0 for r in rows)
        lines = rows_to_csv(rows, timing=True).splitlines()
        assert lines[0].endswith(",micros")
        assert [ln.split(",")[1] for ln in lines[1:]] == ["optkg", "optkg", "uniform", "uniform"]
        assert "micros" not in rows_to_csv(rows).splitlines()[0]

    def test_json_and_writer(self, tmp_path):
        rows = run_experiment(ExperimentConfig(K=3, budgets=[4]), keep_traces=True)
        data = json.loads(rows_to_json(rows))
        assert len(data[0]["trace"]) == 4
        write_rows(rows, tmp_path / "r.json")
        write_rows(rows, tmp_path / "r.csv")
        assert json.loads((tmp_path / "r.json").read_text())[0]["T"] == 4
        assert (tmp_path / "r.csv").read_text().startswith("mode,policy")


REPLAY = "instance_id,worker_id,label,true_label\nx,w1,1,1\nx,w2,-1,1\ny,w1,-1,NA\n"


class TestLoadReplay:
    def test_counts(self, tmp_path):
        env = load_replay_dataset(write(tmp_path, "r.csv", REPLAY))
        assert (env.K, env.M) == (2, 2)
        assert env.pool_sizes() == [2, 1]
        assert env.truth == [1, None]
        assert env.truth_coverage() == 1
        assert env.instance_ids == ["x", "y"]

    def test_duplicates_kept(self, tmp_path):
        env = load_replay_dataset(write(tmp_path, "r.csv", REPLAY + "y,w1,-1,NA\n"))
        assert env.pool_sizes() == [2, 2]
        assert env.pair_remaining(1, 0) == 2

    def test_accuracy_over_known_truth(self, tmp_path):
        path = write(tmp_path, "r.csv", REPLAY + "z,w2,-1,-1\n")
        rows = run_experiment(ExperimentConfig(data=path, budgets=[10], policies=["uniform"]))
        assert rows[0].spent == 4 and rows[0].exhausted
        # x ends tied (positive, truth +1); z ends negative (truth -1); y has no truth
        assert rows[0].accuracy == 1.0

    @pytest.mark.parametrize(
        "text,line",
        [
            ("instance_id,worker_id,label,true_label\nx,w,1\n", 2),
            ("instance_id,worker_id,label,true_label\nx,w,1,1\nx,w,one,1\n", 3),
            ("instance_id,worker_id,label,true_label\nx,w,1,maybe\n", 2),
            ("instance_id,worker_id,label,true_label\n,w,1,1\n", 2),
            ("instance,worker,label\nx,w,1\n", 1),
            ("", 1),
        ],
    )
    def test_parse_errors(self, tmp_path, text, line):
        with pytest.raises(ParseError) as info:
            load_replay_dataset(write(tmp_path, "bad.csv", text))
        assert info.value.line == line
        assert f"line {line}" in str(info.value)

    def test_domain(self, tmp_path):
        with pytest.raises(ValidationError, match="outside"):
            load_replay_dataset(write(tmp_path, "r.csv", "instance_id,worker_id,label,true_label\nx,w,0,1\n"))
        env = load_replay_dataset(write(tmp_path, "m.csv", "instance_id,worker_id,label,true_label\nx,w,0,2\n"), classes=3)
        assert env.truth == [2] and env.classes == 3
        with pytest.raises(ValidationError, match="outside"):
            load_replay_dataset(write(tmp_path, "m.csv", "instance_id,worker_id,label,true_label\nx,w,3,1\n"), classes=3)

    def test_conflicting_truth(self, tmp_path):
        with pytest.raises(ValidationError, match="conflicting"):
            load_replay_dataset(write(tmp_path, "r.csv", "instance_id,worker_id,label,true_label\nx,a,1,1\nx,b,1,-1\n"))

    def test_empty_body(self, tmp_path):
        with pytest.raises(ValidationError):
            load_replay_dataset(write(tmp_path, "r.csv", "instance_id,worker_id,label,true_label\n"))

    def test_column_order_free(self, tmp_path):
        env = load_replay_dataset(write(tmp_path, "r.csv", "label,true_label,worker_id,instance_id\n-1,NA,w,q\n"))
        assert env.records == [(0, 0, -1)]


class TestLoadFeatures:
    def test_ok(self, tmp_path):
        ids, X = load_features(write(tmp_path, "f.csv", "instance_id,f0,f1\na,1,2\nb,-0.5,3e-1\n"))
        assert ids == ["a", "b"]
        np.testing.assert_array_equal(X, [[1, 2], [-0.5, 0.3]])

    @pytest.mark.parametrize(
        "text,exc",
        [
            ("instance_id,f1\na,1\n", ParseError),
            ("id,f0\na,1\n", ParseError),
            ("instance_id,f0\na,x\n", ParseError),
            ("instance_id,f0\na,1,2\n", ParseError),
            ("instance_id,f0\na,1\na,2\n", ValidationError),
            ("instance_id,f0\na,inf\n", ValidationError),
        ],
    )
    def test_errors(self, tmp_path, text, exc):
        with pytest.raises(exc):
            load_features(write(tmp_path, "f.csv", text))

    def test_replay_join(self, tmp_path):
        data = write(tmp_path, "r.csv", REPLAY)
        feats = write(tmp_path, "f.csv", "instance_id,f0\ny,-1\nx,2\n")
        rows = run_experiment(ExperimentConfig(data=data, features=feats, budgets=[2], policies=["optkg"]))
        assert rows[0].mode == "contextual" and rows[0].spent == 2
        missing = write(tmp_path, "g.csv", "instance_id,f0\nx,2\n")
        with pytest.raises(ValidationError, match="features"):
            run_experiment(ExperimentConfig(data=data, features=missing, budgets=[2]))

    def test_replay_multiclass_and_hetero(self, tmp_path):
        data = write(tmp_path, "m.csv", "instance_id,worker_id,label,true_label\nx,a,2,2\nx,b,0,2\ny,a,1,NA\n")
        rows = run_experiment(ExperimentConfig(data=data, classes=3, budgets=[5], policies=["optkg"]))
        assert rows[0].mode == "multiclass" and rows[0].spent == 3 and rows[0].exhausted
        data = write(tmp_path, "h.csv", REPLAY)
        rows = run_experiment(ExperimentConfig(data=data, mode="hetero", budgets=[5], policies=["optkg"]))
        assert rows[0].worker_counts == [2, 1]
