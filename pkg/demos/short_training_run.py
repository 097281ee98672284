"""
A short tuned run
=================

A few epochs of imagined-goal training at toy size, once with the ELBO
driving the budgets and once with a fixed triple. Expect modest numbers:
this is a smoke-scale run, not a benchmark.
"""
from elbotune.config import RunConfig
from elbotune.rig import run

base = RunConfig().replace(
    vae={"hidden": [64], "pretrain_rollouts": 8, "pretrain_steps": 600, "finetune_steps": 50},
    agent={"hidden": [32, 32], "batch_size": 64},
    run={"epochs": 4, "eval_goals": 10},
)

for label, over in (("auto xi=1", {"mode": "auto", "xi": 1.0}), ("fixed", {"mode": "fixed", "n_explore": 5, "n_buffer": 250, "n_grad": 5})):
    res = run(base.replace(autotune=over), write=False)
    print(label)
    for m in res.metrics:
        print(f"  epoch {m.epoch}  -elbo {m.neg_beta_elbo:6.2f}  N_e {m.n_e:3d}  N_b {m.n_b:5d}  N_theta {m.n_theta:3d}"
              f"  eval dist {m.eval_dist_mean:.3f}  coverage {m.coverage:.2f}")
