"""
From one number to three budgets
================================

The tuner maps a negative ELBO estimate to an exploration count, a replay
capacity and a gradient-update count. Only the scale factor xi is free.
"""
from elbotune.autotune import Caps, compute_settings

l = 50  # max path length

for neg in (-3.0, 0.5, 4.2, 10.0, 100.0):
    s = compute_settings(neg, 1.0, l)
    print(f"-elbo {neg:7.2f} -> N_e {s.n_explore:4d}  N_b {s.n_buffer:6d}  N_theta {s.n_grad:4d}")

# xi rescales everything, caps keep a runaway estimate in check
for xi in (0.25, 1.0, 4.0):
    print(f"xi {xi:4.2f}:", compute_settings(80.0, xi, l, Caps(300, 15000, 300)).as_tuple())

# a buffer cap also limits N_e, so the coupling N_b = l * N_e survives
print(compute_settings(1000.0, 1.0, l, Caps(None, 2600, None)).as_tuple())
