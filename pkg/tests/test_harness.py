import csv

import numpy as np
import pytest

from ube_tabular.agents import AgentConfig
from ube_tabular.harness import (
    CSV_COLUMNS,
    EnvConfig,
    ExperimentConfig,
    RegretCurve,
    curves_to_csv,
    export,
    learning_time,
    load_json,
    run_experiment,
)


def small(agent="exact_ube", episodes=5, seeds=(0, 1), **kw):
    return ExperimentConfig(
        env=EnvConfig("deep_sea", 4),
        agent=AgentConfig(agent, u_min=-0.05 if agent.startswith("exact") else 0.0),
        episodes=episodes,
        seeds=seeds,
        **kw,
    )


class TestLearningTime:
    def test_every_episode(self):
        assert learning_time([True] * 5) == 1

    def test_never(self):
        assert learning_time([False] * 50) is None

    def test_tenth_episode(self):
        assert learning_time([False] * 9 + [True] * 5) == 10

    def test_below_fraction(self):
        # one hit by episode 11 is 1/11 < 0.1
        assert learning_time([False] * 10 + [True] + [False] * 10) is None


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            small(episodes=0)
        with pytest.raises(ValueError):
            small(seeds=())
        with pytest.raises(ValueError):
            small(seeds=(1, 1))

    def test_round_trip(self):
        cfg = small()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"bogus": 1})


class TestRuns:
    def test_oracle_zero_regret(self):
        curves = run_experiment(small("oracle", episodes=3, seeds=(0,)))
        assert curves[0].regrets == pytest.approx([0.0] * 3, abs=1e-12)

    def test_never_right_regret(self):
        # ensemble_mean with no bonus never pays to go right on a fresh prior with zero reward means
        curves = run_experiment(
            ExperimentConfig(env=EnvConfig("deep_sea", 4), agent=AgentConfig("ensemble_mean", risk_gain=0.0), episodes=3, seeds=(0,))
        )
        c = curves[0]
        for ret, reg in zip(c.returns, c.regrets):
            assert reg == pytest.approx(0.99 - ret)

    def test_cum_regret(self):
        c = run_experiment(small(episodes=6, seeds=(3,)))[0]
        np.testing.assert_allclose(c.cum_regret, np.cumsum(c.regrets))
        assert all(r >= -1e-12 for r in c.regrets)

    def test_n_room_runs(self):
        cfg = ExperimentConfig(env=EnvConfig("n_room", None), agent=AgentConfig("psrl"), episodes=2, seeds=(0,))
        c = run_experiment(cfg)[0]
        assert len(c.returns) == 2

    def test_replan_each_step(self):
        c = run_experiment(small(episodes=2, seeds=(0,), replan_each_step=True))[0]
        assert len(c.returns) == 2


class TestExport:
    def test_csv_columns_and_rows(self, tmp_path):
        curves = run_experiment(small(episodes=3))
        export(curves, tmp_path / "r.csv")
        with open(tmp_path / "r.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) - 1 == 2 * 3

    def test_json_round_trip(self, tmp_path):
        cfg = small(episodes=3)
        curves = run_experiment(cfg)
        export(curves, tmp_path / "r.json", "json", cfg)
        doc, back = load_json(tmp_path / "r.json")
        assert [c.to_dict() for c in back] == [c.to_dict() for c in curves]
        assert ExperimentConfig.from_dict(doc) == cfg

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            export([], tmp_path / "x", "xml")

    def test_deterministic_bytes(self):
        a = curves_to_csv(run_experiment(small(episodes=4)))
        b = curves_to_csv(run_experiment(small(episodes=4)))
        assert a == b

    def test_parallel_matches_serial(self):
        a = curves_to_csv(run_experiment(small(episodes=3, seeds=(0, 1, 2))))
        b = curves_to_csv(run_experiment(small(episodes=3, seeds=(0, 1, 2), workers=3)))
        assert a == b

    def test_curve_dict(self):
        c = RegretCurve("r", "deep_sea", "psrl", 0, [1.0], [0.0], [True])
        assert RegretCurve.from_dict(c.to_dict()) == c
