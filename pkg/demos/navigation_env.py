"""
The navigation task
===================

A 2x2 red point on a 16x16 canvas. Walls are gray segments the point cannot
cross, and the colored variant changes the point's hue per episode.
"""
import numpy as np

from elbotune import envs

rng = np.random.default_rng(3)


def show(img, cfg):
    c, h, w = cfg.image_shape
    rgb = img.reshape(c, h, w)
    for r in range(h):
        line = ""
        for col in range(w):
            px = rgb[:, r, col]
            line += "#" if px.max() == 1.0 else ("+" if px.max() > 0 else ".")
        print(line)


for variant in envs.VARIANTS:
    cfg = envs.NavEnvConfig(variant)
    state, img = envs.reset(cfg, rng)
    print(f"{variant}: point at {np.round(state.position, 3)}, color {np.round(state.point_color, 2)}")
    show(img, cfg)
    # push into whatever is to the right for a few steps
    for _ in range(5):
        state, img = envs.step(state, [0.15, 0.0], cfg)
    print("after five pushes right:", np.round(state.position, 3))
    print()
