from __future__ import annotations

import numpy as np
import pytest
from conftest import tiny_config

from core import nn
from core.errors import ConfigError, DivergenceError, ShapeMismatchError
from core.models import Dataset, MlpShape, ServerState
from core.seeding import client_seed
from federated.client import local_update
from federated.orchestrator import (
    evaluate,
    export_boundary_grid,
    initial_params,
    predict,
    prepare_data,
    run_experiment,
    run_round,
    sample_clients,
)


def _records(result):
    return [m.to_record(include_timing=False) for m in result.metrics]


# ── client sampling ──────────────────────────────────────────────────


def test_full_participation():
    assert sample_clients(7, 1.0, round=3, master_seed=0) == list(range(7))


def test_ten_percent_of_a_hundred():
    ids = sample_clients(100, 0.1, round=0, master_seed=5)
    assert len(ids) == 10
    assert len(set(ids)) == 10
    assert ids == sorted(ids)
    assert ids == sample_clients(100, 0.1, round=0, master_seed=5)


def test_at_least_one_client():
    assert len(sample_clients(5, 0.01, round=0, master_seed=0)) == 1


def test_sampling_rejects_bad_rate():
    with pytest.raises(ValueError):
        sample_clients(5, 0.0, round=0, master_seed=0)


# ── evaluation helpers ───────────────────────────────────────────────


def test_zero_model_accuracy_is_the_share_of_class_zero():
    shape = MlpShape((2, 4, 3))
    test = Dataset(
        features=np.random.default_rng(0).normal(size=(9, 2)),
        labels=np.array([0, 0, 1, 1, 1, 2, 2, 2, 2]),
        class_count=3,
    )
    acc, loss = evaluate(np.zeros(shape.n_params), shape, test)
    assert acc == pytest.approx(2 / 9)
    assert loss == pytest.approx(np.log(3))


def test_accuracy_matches_a_row_loop(rng):
    shape = MlpShape((2, 5, 3))
    params = rng.normal(size=shape.n_params)
    test = Dataset(features=rng.normal(size=(40, 2)), labels=rng.integers(0, 3, size=40), class_count=3)
    model = nn.unflatten(shape, params)
    correct = sum(
        int(np.argmax(nn.forward(model, test.features[i])[0]) == test.labels[i]) for i in range(40)
    )
    assert evaluate(params, shape, test)[0] == correct / 40


def test_perfect_model_scores_one():
    shape = MlpShape((2, 2))
    # logits are the inputs themselves
    params = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    test = Dataset(features=np.array([[2.0, 0.0], [0.0, 3.0]]), labels=np.array([0, 1]), class_count=2)
    assert evaluate(params, shape, test)[0] == 1.0


def test_boundary_grid_layout(rng):
    shape = MlpShape((2, 5, 3))
    params = rng.normal(size=shape.n_params)
    grid = export_boundary_grid(params, shape, (-1.0, 1.0, -2.0, 2.0), resolution=7)
    assert grid.shape == (49, 3)
    # y-major: x varies fastest
    np.testing.assert_allclose(grid[:7, 1], -2.0)
    np.testing.assert_allclose(grid[:7, 0], np.linspace(-1, 1, 7))
    picks = rng.choice(49, size=20, replace=False)
    np.testing.assert_array_equal(grid[picks, 2], predict(params, shape, grid[picks, :2]))


def test_constant_model_paints_one_class():
    shape = MlpShape((2, 3, 3))
    params = np.zeros(shape.n_params)
    params[-3:] = [0.0, 2.0, 1.0]  # output bias
    grid = export_boundary_grid(params, shape, (0.0, 1.0, 0.0, 1.0), resolution=4)
    assert set(grid[:, 2]) == {1.0}


def test_boundary_grid_needs_two_inputs():
    shape = MlpShape((4, 3))
    with pytest.raises(ShapeMismatchError):
        export_boundary_grid(np.zeros(shape.n_params), shape, (0, 1, 0, 1), resolution=4)


# ── data preparation ─────────────────────────────────────────────────


def test_prepare_pilot_data():
    config = tiny_config(
        "data.source=csv",
        "data.pca=true",
        "partition.kind=pilot",
        "model.hidden_sizes=[16, 16]",
    )
    data = prepare_data(config)
    assert data.shape.layer_sizes == (2, 16, 16, 3)
    assert data.pca is not None
    assert data.test.n == 30
    assert data.public.n == 24
    assert data.train.n == 96
    matrix = data.partition.class_matrix(data.train.labels, 3)
    assert all(int(np.argmax(row)) == i for i, row in enumerate(matrix))


def test_pilot_partition_needs_one_client_per_class():
    with pytest.raises(ConfigError, match="n_clients"):
        prepare_data(tiny_config("data.source=csv", "partition.kind=pilot", "n_clients=4"))


def test_memory_larger_than_public_set_is_rejected():
    with pytest.raises(ConfigError, match="memory_size"):
        prepare_data(tiny_config("data.memory_size=500"))


def test_separate_public_csv(tmp_path):
    path = tmp_path / "public.csv"
    path.write_text("\n".join(["x,y,label", "0.1,0.2,a", "3.0,0.1,b", "0.2,3.1,c", "2.9,0.3,b"]))
    data = prepare_data(tiny_config(f"data.public_csv={path}", "data.memory_size=4"))
    assert data.public.n == 4
    assert data.train.n + data.test.n == 90


# ── rounds ───────────────────────────────────────────────────────────


def test_zero_rounds_returns_the_initial_model():
    result = run_experiment(tiny_config("rounds=0"))
    assert result.metrics == []
    np.testing.assert_array_equal(result.final_state.global_params, result.initial_params)


def test_zero_local_epochs_leave_the_model_alone():
    config = tiny_config("method=fedavg", "local.epochs=0", "rounds=2")
    result = run_experiment(config)
    np.testing.assert_array_equal(result.final_state.global_params, result.initial_params)


def test_single_client_fedavg_is_plain_local_training():
    config = tiny_config("method=fedavg", "n_clients=1", "rounds=1")
    data = prepare_data(config)
    theta0 = initial_params(config, data.shape)
    state, _ = run_round(ServerState(global_params=theta0), config, data)
    alone = local_update(
        theta0, data.shape, data.client_data(0), None, config.local, client_seed(config.master_seed, 0, 0)
    )
    np.testing.assert_array_equal(state.global_params, alone.params)


def test_first_round_has_no_memory_and_later_rounds_do(tiny):
    result = run_experiment(tiny)
    first, second = result.metrics[0], result.metrics[1]
    assert first.l_mem_pre is None
    assert first.proj_active_frac == 0.0
    assert second.l_mem_pre is not None
    assert result.final_state.memory is not None
    assert result.final_state.memory.size == tiny.data.memory_size


def test_metrics_cover_every_round(tiny):
    result = run_experiment(tiny)
    assert [m.round for m in result.metrics] == [0, 1, 2]
    for m in result.metrics:
        assert 0.0 <= m.acc <= 1.0
        assert m.kd_pre is not None and m.kd_post is not None
        assert m.clients == [0, 1, 2]


def test_eval_every_skips_rounds_but_not_the_last():
    result = run_experiment(tiny_config("rounds=5", "eval_every=2"))
    evaluated = [m.round for m in result.metrics if m.acc is not None]
    assert evaluated == [1, 3, 4]


def test_aggregate_lies_in_the_client_hull(tiny):
    def check(state, metrics):
        stacked = np.stack([p for _, p in state.client_params])
        scale = 1e-12 * max(1.0, float(np.abs(stacked).max()))
        assert np.all(state.averaged_params >= stacked.min(axis=0) - scale)
        assert np.all(state.averaged_params <= stacked.max(axis=0) + scale)

    run_experiment(tiny, on_round=check)


def test_same_seed_same_metrics(tiny):
    assert _records(run_experiment(tiny)) == _records(run_experiment(tiny))


def test_workers_do_not_change_results(tiny):
    serial = run_experiment(tiny, workers=1)
    threaded = run_experiment(tiny, workers=3)
    assert _records(serial) == _records(threaded)
    np.testing.assert_array_equal(serial.final_state.global_params, threaded.final_state.global_params)


def test_divergence_carries_round_and_client():
    with pytest.raises(DivergenceError) as info:
        run_experiment(tiny_config("local.lr=1e9", "local.epochs=3", "partition.beta=100.0"))
    assert info.value.round is not None
    assert info.value.client_id is not None


# ── the mode lattice ─────────────────────────────────────────────────


def test_fedproj_without_projection_or_distillation_is_fedavg():
    fedavg = run_experiment(tiny_config("method=fedavg"))
    fedproj = run_experiment(
        tiny_config("method=fedproj", "local.projection_rate=0.0", "distill.enabled=false")
    )
    assert _records(fedavg) == _records(fedproj)


def test_fedproj_without_projection_or_drift_term_is_feddf():
    feddf = run_experiment(tiny_config("method=feddf"))
    fedproj = run_experiment(
        tiny_config("method=fedproj", "local.projection_rate=0.0", "distill.alpha=0.0")
    )
    assert _records(feddf) == _records(fedproj)


def test_fedprox_without_prox_term_is_fedavg():
    fedavg = run_experiment(tiny_config("method=fedavg"))
    fedprox = run_experiment(tiny_config("method=fedprox", "local.prox_mu=0.0"))
    assert _records(fedavg) == _records(fedprox)


def test_partial_participation_is_seeded():
    config = tiny_config("n_clients=6", "sample_rate=0.5", "partition.beta=5.0")
    result = run_experiment(config)
    assert all(len(m.clients) == 3 for m in result.metrics)
    assert _records(result) == _records(run_experiment(config))
