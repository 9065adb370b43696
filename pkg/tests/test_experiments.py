import math

import numpy as np
import pytest

from netgof.experiments import (
    EXPERIMENT_IDS,
    ExperimentConfig,
    Outcome,
    Point,
    _rate_rows,
    drop_isolates,
    halves,
    read_result_csv,
    result_csv,
    run_experiment,
    scaled_edge_statistic,
    table_csv,
    task_seed,
)
from netgof.graph import ProbMatrix, graph_from_edges, sample_graph


def test_config_defaults_and_validation():
    cfg = ExperimentConfig("fig5-expit")
    assert cfg.n_values == (50, 100, 200) and cfg.reps == 100 and cfg.B == 200
    with pytest.raises(ValueError, match="unknown experiment"):
        ExperimentConfig("fig99")
    with pytest.raises(ValueError, match="unknown parameters"):
        ExperimentConfig("fig5-expit", params={"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig("fig5-expit", B=10)
    with pytest.raises(ValueError):
        ExperimentConfig("fig5-expit", alpha=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"experiment": "fig5-expit", "nonsense": 1})


def test_config_hash_ignores_workers_only():
    a = ExperimentConfig("fig6-ard", reps=3, workers=1)
    b = ExperimentConfig("fig6-ard", reps=3, workers=4)
    c = ExperimentConfig("fig6-ard", reps=3, seed=1)
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert ExperimentConfig.from_mapping(a.to_dict()).config_hash() == a.config_hash()


def test_task_seeds_are_distinct():
    states = {tuple(task_seed(0, i, j, r).generate_state(2)) for i in range(3) for j in range(3) for r in range(5)}
    assert len(states) == 45


def test_rate_rows_binomial_and_clustered_se():
    cfg = ExperimentConfig("fig5-expit", n_values=(10,), reps=4)
    pt = Point("expit", 0.0)
    outs = [[Outcome("bootstrap", e, 0.5)] for e in (True, False, False, None)]
    row = _rate_rows(cfg, {(10, pt): outs})[0]
    assert (row["replicates"], row["valid"], row["events"]) == (4, 3, 1)
    assert row["rate"] == pytest.approx(1 / 3)
    assert row["se"] == pytest.approx(math.sqrt((1 / 3) * (2 / 3) / 3))

    cells = {
        (10, Point("latent-space", 1.0, cluster=0)): [[Outcome("select-dim", True)]] * 2,
        (10, Point("latent-space", 1.0, cluster=1)): [[Outcome("select-dim", False)], [Outcome("select-dim", True)]],
    }
    row = _rate_rows(cfg, cells)[0]
    assert row["rate"] == pytest.approx(0.75)
    assert row["se"] == pytest.approx(np.std([1.0, 0.5], ddof=1) / math.sqrt(2))


def test_helpers():
    g = graph_from_edges(4, [(0, 1)])
    assert drop_isolates(g).n == 2
    np.testing.assert_array_equal(halves(5).labels, [0, 0, 1, 1, 1])
    h = sample_graph(ProbMatrix(np.full((60, 60), 0.2)), seed=0)
    p = ProbMatrix(np.full((60, 60), 0.2))
    assert scaled_edge_statistic(h, p, lanczos_from=10) == pytest.approx(scaled_edge_statistic(h, p), rel=1e-8)


@pytest.mark.parametrize("experiment", EXPERIMENT_IDS)
def test_tiny_run_is_deterministic(experiment):
    small = {
        "fig4-dims": {"param_sets": 1, "max_d": 3},
        "fig7-ergm-power": {"theta3": [0.0], "B_p": 50},
    }
    n_values = {"fig6-ard": (30,), "fig8-directed": (12,), "tw-convergence": (20,), "fig4-dims": (30,)}
    cfg = ExperimentConfig(
        experiment,
        n_values=n_values.get(experiment, (16,)),
        reps=2,
        B=50,
        seed=3,
        params=small.get(experiment, {}),
    )
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert result_csv(a) == result_csv(b)
    for name in a.tables:
        assert table_csv(a, name) == table_csv(b, name)
    meta, rows = read_result_csv(result_csv(a))
    assert meta["config_hash"] == cfg.config_hash()
    assert meta["seed"] == "3"
    assert meta["config"] == cfg.to_dict()
    assert rows and all(r["experiment"] == experiment for r in rows)


def test_worker_pool_matches_serial():
    base = dict(n_values=(16, 20), reps=3, B=50, seed=11)
    serial = run_experiment(ExperimentConfig("fig8-directed", **base))
    pooled = run_experiment(ExperimentConfig("fig8-directed", workers=2, **base))
    assert result_csv(serial) == result_csv(pooled)


def test_progress_callback():
    seen = []
    run_experiment(ExperimentConfig("fig6-ard", n_values=(30,), reps=2, B=50), progress=lambda k, t: seen.append((k, t)))
    assert seen[-1] == (4, 4)
