from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import settings

import gce
from gce.groups import (
    Grouping,
    assign_groups,
    calibrate_epsilon,
    default_epsilon_grid,
    group_stats,
)
from gce.models import forward_batch
from gce.training import TrainConfig, train_autoencoder

settings.register_profile("suite", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("suite")

SYNTH_MASTER_SEED = 1  # matches the demo default


@dataclass(frozen=True)
class SynthBundle:
    dataset: gce.Dataset
    true_labels: np.ndarray
    model: gce.FeedForwardModel
    reps: np.ndarray
    grouping: Grouping
    stats: gce.GroupStats
    epsilon: float
    seeds: tuple[int, int, int, int]  # data, train, optimizer, grouping


@pytest.fixture(scope="session")
def synth_bundle() -> SynthBundle:
    """The seeded synthetic pipeline state shared across heavier tests."""
    seq = np.random.SeedSequence(SYNTH_MASTER_SEED)
    data_seed, train_seed, opt_seed, group_seed = (
        int(s.generate_state(1)[0]) for s in seq.spawn(4)
    )
    dataset, true_labels = gce.generate_synthetic(data_seed, 400)
    model = train_autoencoder(
        dataset, TrainConfig(seed=train_seed, prune_tolerance=0.05)
    )
    reps = forward_batch(model, dataset.rows)
    grouping = assign_groups(reps, k=4, seed=group_seed)
    epsilon = calibrate_epsilon(reps, grouping, default_epsilon_grid(reps))
    stats = group_stats(dataset, grouping, model)
    return SynthBundle(
        dataset=dataset,
        true_labels=true_labels,
        model=model,
        reps=reps,
        grouping=grouping,
        stats=stats,
        epsilon=epsilon,
        seeds=(data_seed, train_seed, opt_seed, group_seed),
    )
