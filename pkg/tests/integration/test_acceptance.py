"""
Desk-scale acceptance runs. These train every variant for tens of thousands of
episodes and take minutes per seed; run them with ``pytest --with-slow-integration``.
"""

import numpy as np
import pytest

from ptde.config import parse_config
from ptde.harness import Experiment

SEEDS = [0, 1, 2]

SECRET_SLOTS = {
    "env": {"name": "secret_slots", "n_agents": 3, "n_actions": 5, "noise_dims": 10},
    "nets": {"d_z": 8},
    "learner": {"total_episodes": 30_000, "eval_interval": 5_000, "eval_episodes": 200},
    "seeds": SEEDS,
}

GRID_CAPTURE = {
    "env": {"name": "grid_capture", "n_agents": 3, "grid_size": 7},
    "variant": "qmix_sgi",
    "learner": {"total_episodes": 20_000, "eval_interval": 2_000, "eval_episodes": 200},
    "distill": {"episodes": 100, "epochs": 20_000},
    "seeds": SEEDS,
}


def final_win_rates(base, variant, out_dir):
    """Centralized (and distilled, when present) win rate per seed."""
    config = parse_config({**base, "variant": variant})
    tables = [Experiment(config, seed, out_dir).pipeline() for seed in SEEDS]
    return {
        stage: np.array([t.loc[t["stage"] == stage, "eval_win_rate"].item() for t in tables])
        for stage in ("stage1", "stage2")
        if all((t["stage"] == stage).any() for t in tables)
    }


@pytest.mark.slow_integration_test
class TestSecretSlots:
    """Agent-specific global information versus unified and none."""

    @pytest.fixture(scope="class")
    def results(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("secret_slots")
        return {v: final_win_rates(SECRET_SLOTS, v, out)["stage1"].mean() for v in ("qmix_sgi", "qmix_ugi", "qmix")}

    def test_specialized_messages_solve_the_game(self, results):
        assert results["qmix_sgi"] >= 0.90

    def test_unified_messages_fall_short(self, results):
        assert results["qmix_ugi"] <= results["qmix_sgi"] - 0.15

    def test_no_messages_stay_near_chance(self, results):
        assert results["qmix"] <= 0.05

    @pytest.mark.parametrize("family", ["vdn", "ac"])
    def test_other_families_keep_the_ordering(self, family, tmp_path):
        specialized = final_win_rates(SECRET_SLOTS, f"{family}_sgi", tmp_path)["stage1"].mean()
        unified = final_win_rates(SECRET_SLOTS, f"{family}_ugi", tmp_path)["stage1"].mean()
        assert specialized >= unified + 0.10


@pytest.mark.slow_integration_test
class TestGridCapture:
    """Distilled local executors retain most of the centralized performance."""

    def test_performance_retention(self, tmp_path):
        config = parse_config(GRID_CAPTURE)
        prrs, mse_ratios = [], []
        for seed in SEEDS:
            experiment = Experiment(config, seed, tmp_path)
            experiment.train1()
            result = experiment.distill()
            table = experiment.evaluate()
            mse_ratios.append(result.heldout_mse / result.initial_heldout_mse)
            prrs.append(table.loc[table["stage"] == "stage2", "prr"].item())
        assert np.mean(prrs) >= 0.70
        assert max(mse_ratios) <= 0.25
