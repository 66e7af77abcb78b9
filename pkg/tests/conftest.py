"""Shared desk-scale fixtures: a small synthetic split and trained models."""

import numpy as np
import pytest

from rulattack import data, models

M_SMALL = 12


@pytest.fixture(scope="session")
def small_split():
    train, test, ruls = data.make_synth_split(6, 3, 6, seed=31, n_constant=2, noise=0.02)
    stats = data.fit_norm(train)
    train_w = data.make_windows(train, stats, M_SMALL)
    test_w = data.make_windows(test, stats, M_SMALL, final_ruls=ruls)
    return {
        "train_series": train,
        "test_series": test,
        "final_ruls": ruls,
        "stats": stats,
        "train_windows": train_w.windows,
        "test_windows": test_w.windows,
    }


@pytest.fixture(scope="session")
def trained_lstm(small_split):
    params = models.init_params("lstm", len(small_split["stats"].retained), 12, seed=5)
    trained, _ = models.train(
        params, small_split["train_windows"], models.TrainConfig(epochs=40, seed=9)
    )
    return trained


@pytest.fixture(scope="session")
def trained_gru(small_split):
    params = models.init_params("gru", len(small_split["stats"].retained), 12, seed=6)
    trained, _ = models.train(
        params, small_split["train_windows"], models.TrainConfig(epochs=40, seed=10)
    )
    return trained
