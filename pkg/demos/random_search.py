"""
Searching one knob versus three
===============================

Random search over xi alone against random search over the raw triple,
at a size that runs in a couple of minutes.
"""
from elbotune.config import RunConfig
from elbotune.search import SearchSpace, random_search

base = RunConfig().replace(
    vae={"hidden": [64], "pretrain_rollouts": 8, "pretrain_steps": 600, "finetune_steps": 50},
    agent={"hidden": [32, 32], "batch_size": 64},
    run={"epochs": 3, "eval_goals": 10},
    search={"ne_range": [1, 20], "nb_range": [50, 1000], "ntheta_range": [1, 20]},
)

for mode, trials in (("auto", 3), ("fixed", 3)):
    results = random_search(SearchSpace.from_config(base, mode), trials, base, master_seed=0)
    print(mode)
    for r in results:
        print(f"  {r.label:10s} objective {r.objective:.3f}  env steps {r.cum_env_steps:5d}  updates {r.cum_grad_updates:4d}  {r.params}")
