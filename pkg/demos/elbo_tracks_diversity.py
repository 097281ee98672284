"""
ELBO as a diversity gauge
=========================

Train one small VAE on glyph sets of growing size and watch the converged
negative ELBO climb with the number of distinct classes, then fall again as
classes are removed.
"""
import math

import numpy as np

from elbotune.diversity import DiversitySchedule, add_then_remove_schedule, run_diversity_experiment, stage_means
from elbotune.vae import VaeConfig

# 2 -> 5 -> 2 classes; stages must be long enough to converge, about a minute in all
schedule = add_then_remove_schedule(max_class=4, epochs_per_stage=20)
# the first stage starts from a fresh model, give it a head start
schedule = DiversitySchedule([(0, schedule.stages[0][1])] + [(e + 40, cs) for e, cs in schedule.stages[1:]])
rows = run_diversity_experiment(schedule, VaeConfig(latent_dim=4, beta=1.0), 20, seeds=[0], per_class=8, steps_per_epoch=50)

print(f"{'classes':>7} {'log n':>6} {'-elbo':>7} {'kl':>6} {'recon':>6}")
for s in stage_means(rows):
    print(f"{s['class_count']:7d} {math.log(s['class_count']):6.2f} {s['neg_beta_elbo']:7.2f} {s['kl_term']:6.2f} {s['recon_nll']:6.2f}")

# the gauge rises on the way up
up = [s["neg_beta_elbo"] for s in stage_means(rows)][:4]
print("monotone on the way up:", bool(np.all(np.diff(up) > 0)))
