"""
Whole-trajectory eviction
=========================

The replay buffer drops the oldest episodes as a unit when capacity
shrinks, so stored trajectories stay intact for future-goal relabeling.
"""
import numpy as np

from elbotune.replay import Episode, EpisodeBuffer

rng = np.random.default_rng(0)


def episode(length, tag):
    return Episode(np.full((length + 1, 4), float(tag)), rng.standard_normal((length + 1, 2)), rng.uniform(-0.15, 0.15, (length, 2)), rng.standard_normal(2))


buf = EpisodeBuffer(150)
for i in range(3):
    buf.push_episode(episode(50, i))
print("stored", buf.total_transitions, "episodes", [int(e.images[0, 0]) for e in buf.episodes])

# shrinking to 120 cannot keep 2.4 episodes, so a whole one goes
buf.resize(120)
print("after resize to 120:", buf.total_transitions, "episodes", [int(e.images[0, 0]) for e in buf.episodes])

# relabeled batch: half future goals, a fifth prior samples, rest original
b = buf.sample_batch(1000, rng, f_future=0.5, f_prior=0.2)
src = b.goal_source_step
print(f"future {np.mean(src >= 0):.2f}  original {np.mean(src == -1):.2f}  prior {np.mean(src == -2):.2f}")
print("rewards are -||z' - g||:", np.allclose(b.reward, -np.linalg.norm(b.next_obs - b.goal, axis=1)))
