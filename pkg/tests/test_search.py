import csv
import math

import numpy as np
import pytest

from elbotune.search import SUMMARY_COLUMNS, SearchSpace, baseline_params, random_search, run_baselines, trial_seed, write_summary
from test_rig import tiny


def small_space(mode):
    return SearchSpace(mode, (0.1, 2.0), (1, 4), (50, 400), (1, 4))


def test_space_validation():
    with pytest.raises(ValueError):
        SearchSpace("grid")
    with pytest.raises(ValueError):
        SearchSpace("fixed", ne_range=(10, 5))


def test_sampling_ranges_and_log_uniform_buffer():
    sp = SearchSpace("fixed")
    rng = np.random.default_rng(0)
    pts = [sp.sample(rng) for _ in range(4000)]
    ne = np.array([p["n_explore"] for p in pts])
    nb = np.array([p["n_buffer"] for p in pts])
    assert ne.min() >= 5 and ne.max() <= 300 and nb.min() >= 250 and nb.max() <= 15000
    # log-uniform: the geometric midpoint splits the samples in half
    mid = math.sqrt(250 * 15000)
    assert abs((nb < mid).mean() - 0.5) < 0.03
    xi = np.array([SearchSpace("auto").sample(rng)["xi"] for _ in range(4000)])
    assert xi.min() >= 0.1 and xi.max() <= 2.0 and abs(xi.mean() - 1.05) < 0.03


def test_single_trial_is_best():
    res = random_search(small_space("auto"), 1, tiny(run={"epochs": 1}), master_seed=3)
    assert len(res) == 1 and res[0].trial == 0 and res[0].seed == trial_seed(3, 0)


def test_same_master_seed_same_trials():
    base = tiny(run={"epochs": 1})
    a = random_search(small_space("fixed"), 3, base, master_seed=5)
    b = random_search(small_space("fixed"), 3, base, master_seed=5)
    assert [(r.params, r.objective) for r in a] == [(r.params, r.objective) for r in b]
    assert [r.objective for r in a] == sorted(r.objective for r in a)


def test_auto_trial_accounting():
    res = random_search(small_space("auto"), 2, tiny(run={"epochs": 3}), master_seed=1)
    for r in res:
        assert r.cum_grad_updates == sum(r.n_theta) == r.agent_updates
        assert r.objective >= 0


def test_baselines(tmp_path):
    base = tiny(run={"epochs": 1}, search={"ne_range": [1, 4], "nb_range": [50, 400], "ntheta_range": [1, 4]})
    params = baseline_params(base)
    assert params["limited_exploration"] == {"mode": "fixed", "n_explore": 1, "n_buffer": 400, "n_grad": 4}
    assert params["limited_buffer"] == {"mode": "fixed", "n_explore": 4, "n_buffer": 50, "n_grad": 4}
    assert params["limited_updates"] == {"mode": "fixed", "n_explore": 4, "n_buffer": 400, "n_grad": 1}
    res = run_baselines(base)
    assert set(res) == set(params)
    assert res["limited_updates"].cum_grad_updates == 1
    write_summary(tmp_path / "s.csv", list(res.values()))
    rows = list(csv.reader((tmp_path / "s.csv").open()))
    assert rows[0] == SUMMARY_COLUMNS and len(rows) == 4 and rows[1][-1] == ""


def test_default_baselines_scale_the_published_triples():
    p = baseline_params(tiny())
    assert [tuple(v[k] for k in ("n_explore", "n_buffer", "n_grad")) for v in p.values()] == [
        (5, 15000, 300),
        (300, 250, 300),
        (300, 15000, 5),
    ]
