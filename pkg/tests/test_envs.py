import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elbotune import envs
from elbotune.envs import NavEnvConfig, NavState

DATA = Path(__file__).parent / "data"


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_cross(p, q, a, b) -> bool:
    """Brute-force test for a proper or touching intersection of segments pq and ab."""
    d1, d2 = _orient(a, b, p), _orient(a, b, q)
    d3, d4 = _orient(p, q, a), _orient(p, q, b)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True

    def on(u, v, w):
        return min(u[0], v[0]) <= w[0] <= max(u[0], v[0]) and min(u[1], v[1]) <= w[1] <= max(u[1], v[1])

    return (d1 == 0 and on(a, b, p)) or (d2 == 0 and on(a, b, q)) or (d3 == 0 and on(p, q, a)) or (d4 == 0 and on(p, q, b))


def test_reset_variants():
    rng = np.random.default_rng(0)
    s, img = envs.reset(NavEnvConfig("no_wall"), rng)
    assert len(s.active_walls) == 0 and img.shape == (768,)
    assert np.array_equal(s.point_color, [1.0, 0.0, 0.0])
    ids = {envs.reset(NavEnvConfig("multi_wall"), rng)[0].wall_id for _ in range(300)}
    assert ids == set(range(15))
    s, _ = envs.reset(NavEnvConfig("multi_color"), rng)
    assert s.point_color.max() == pytest.approx(1.0) and len(s.active_walls) >= 1


def test_reset_is_seeded():
    cfg = NavEnvConfig("multi_color")
    a, ia = envs.reset(cfg, np.random.default_rng(5))
    b, ib = envs.reset(cfg, np.random.default_rng(5))
    assert np.array_equal(a.position, b.position) and np.array_equal(ia, ib)


def test_step_zero_action_and_boundary_clamp():
    cfg = NavEnvConfig()
    s = NavState(np.array([0.3, 0.7]))
    assert np.array_equal(envs.step(s, [0, 0], cfg)[0].position, [0.3, 0.7])
    edge = NavState(np.array([0.95, 0.02]))
    assert np.array_equal(envs.step(edge, [0.15, -0.15], cfg)[0].position, [1.0, 0.0])


def test_actions_are_clipped_to_scale():
    cfg = NavEnvConfig()
    s2, _ = envs.step(NavState(np.array([0.5, 0.5])), [5.0, -5.0], cfg)
    np.testing.assert_allclose(s2.position, [0.65, 0.35])


def test_workspace_scale_bounds():
    cfg = NavEnvConfig(workspace_scale=0.5)
    assert cfg.bounds == (0.25, 0.75)
    s, _ = envs.step(NavState(np.array([0.3, 0.3])), [-0.15, -0.15], cfg)
    assert np.array_equal(s.position, [0.25, 0.25])


def test_path_into_wall_stops_at_margin():
    cfg = NavEnvConfig("multi_wall")
    wid = 3
    x0, y0, x1, y1 = envs.active_walls(cfg, wid)[0]
    assert y0 == y1  # horizontal segment in this configuration
    mid = 0.5 * (x0 + x1)
    s = NavState(np.array([mid, y0 - 0.1]), wall_id=wid)
    nxt, _ = envs.step(s, [0.0, 0.15], cfg)
    assert nxt.position[1] == pytest.approx(y0 - cfg.margin, abs=1e-12)
    assert not segments_cross(s.position, nxt.position, (x0, y0), (x1, y1))


def test_position_containment_fuzz():
    rng = np.random.default_rng(1)
    for variant, scale in (("no_wall", 1.0), ("multi_wall", 0.5), ("multi_color", 0.8)):
        cfg = NavEnvConfig(variant, workspace_scale=scale)
        lo, hi = cfg.bounds
        batch, _ = envs.reset_batch(cfg, 1000, rng)
        for _ in range(333):
            batch = envs.NavBatch(envs._move(cfg, batch.positions, rng.uniform(-0.3, 0.3, (1000, 2)), batch.wall_ids), batch.colors, batch.wall_ids)
            assert batch.positions.min() >= lo and batch.positions.max() <= hi


def test_wall_impermeability_fuzz():
    rng = np.random.default_rng(2)
    cfg = NavEnvConfig("multi_wall")
    walls = [envs.active_walls(cfg, i) for i in range(15)]
    batch, _ = envs.reset_batch(cfg, 300, rng)
    for _ in range(60):
        prev = batch.positions.copy()
        # bias toward large moves so walls are actually hit
        a = rng.choice([-1, 1], size=(300, 2)) * rng.uniform(0.05, 0.15, (300, 2))
        batch, _ = envs.step_batch(batch, a, cfg)
        for i in range(300):
            for seg in walls[batch.wall_ids[i]]:
                assert not segments_cross(prev[i], batch.positions[i], seg[:2], seg[2:])


def test_render_determinism_and_distinctness():
    cfg = NavEnvConfig()
    s = NavState(np.array([0.4, 0.4]))
    assert np.array_equal(envs.render(s, cfg), envs.render(s, cfg))
    far = NavState(np.array([0.4 + 2 / 16, 0.4]))
    assert not np.array_equal(envs.render(s, cfg), envs.render(far, cfg))
    img = envs.render(s, cfg)
    assert img.min() >= 0 and img.max() <= 1 and (img.reshape(3, 16, 16)[0] == 1).sum() == 4


@pytest.mark.parametrize("variant,wid", [("no_wall", -1), ("multi_wall", 3)])
def test_render_matches_golden(variant, wid):
    golden, meta = envs.load_golden(DATA / f"render_{variant}_center.f64")
    cfg = NavEnvConfig(variant)
    assert meta["variant"] == variant and tuple(meta["shape"]) == cfg.image_shape
    s = NavState(np.array(meta["position"]), np.array(envs.RED), wid, envs.active_walls(cfg, wid))
    assert np.array_equal(envs.render(s, cfg), golden)


def test_walls_drawn_gray():
    cfg = NavEnvConfig("multi_wall")
    img = envs.render(NavState(np.array([0.05, 0.05]), wall_id=0), cfg).reshape(3, 16, 16)
    assert set(np.unique(img[1])) == {0.0, 0.5}


def test_eval_goal_sampling():
    cfg = NavEnvConfig("multi_color")
    ctx, _ = envs.reset(cfg, np.random.default_rng(3))
    g1, p1 = envs.sample_eval_goal(cfg, np.random.default_rng(4), ctx)
    g2, p2 = envs.sample_eval_goal(cfg, np.random.default_rng(4), ctx)
    assert np.array_equal(g1, g2)
    assert not envs._blocked(cfg, p1[None], np.array([ctx.wall_id]))[0]
    assert np.array_equal(g1, envs.render(NavState(p1, ctx.point_color, ctx.wall_id), cfg))
    g3, _ = envs.sample_eval_goal(cfg, np.random.default_rng(5), ctx)
    assert not np.array_equal(g1, g3)


def test_image_distance():
    a = np.random.default_rng(0).random(12)
    b = np.random.default_rng(1).random(12)
    assert envs.image_distance(a, a) == 0
    assert envs.image_distance(a, b) == envs.image_distance(b, a)
    assert envs.image_distance(np.zeros(768), np.ones(768)) == pytest.approx(np.sqrt(768))
    with pytest.raises(ValueError):
        envs.image_distance(a, b[:5])


def test_curriculum():
    sched = envs.default_curriculum()
    assert [(e, c.variant) for e, c in sched] == [(0, "no_wall"), (50, "multi_wall"), (100, "multi_color")]
    assert envs.curriculum_advance(sched, 0).variant == "no_wall"
    assert envs.curriculum_advance(sched, 49).variant == "no_wall"
    assert envs.curriculum_advance(sched, 50).variant == "multi_wall"
    assert envs.curriculum_advance(sched, 1000).variant == "multi_color"
    with pytest.raises(ValueError):
        envs.curriculum_advance([], 0)


def test_committed_wall_library_matches_generator():
    data = json.loads(resources.files("elbotune").joinpath("data/walls.json").read_text())
    assert data["seed"] == envs.WALL_SEED
    assert data["configs"] == envs.generate_wall_library(data["seed"])
    assert len(data["configs"]) == 15 and all(1 <= len(c) <= 3 for c in data["configs"])
    for cfg in data["configs"]:
        for x0, y0, x1, y1 in cfg:
            assert x0 == x1 or y0 == y1


def test_invalid_config():
    with pytest.raises(ValueError):
        NavEnvConfig("maze")
    with pytest.raises(ValueError):
        NavEnvConfig(image_shape=(3, 4, 4))
    with pytest.raises(ValueError):
        NavEnvConfig(workspace_scale=0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 14),
    st.floats(0, 1), st.floats(0, 1),
    st.floats(-0.15, 0.15), st.floats(-0.15, 0.15),
)
def test_single_step_never_crosses_a_wall(wid, x, y, dx, dy):
    cfg = NavEnvConfig("multi_wall")
    pos = np.array([x, y])
    if envs._blocked(cfg, pos[None], np.array([wid]))[0]:
        return
    s, _ = envs.step(NavState(pos, wall_id=wid), [dx, dy], cfg)
    assert not envs._blocked(cfg, s.position[None], np.array([wid]))[0]
    for seg in envs.active_walls(cfg, wid):
        assert not segments_cross(pos, s.position, seg[:2], seg[2:])
