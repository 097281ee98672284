import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elbotune.replay import Episode, EpisodeBuffer
from elbotune.vae import encode, make_vae


def episode(length, tag=0.0, dz=2, d=3, rng=None):
    rng = rng or np.random.default_rng(int(tag * 1000) % 2**32)
    return Episode(
        np.full((length + 1, d), tag),
        rng.standard_normal((length + 1, dz)),
        rng.standard_normal((length, 2)),
        rng.standard_normal(dz),
    )


def test_three_episodes_fit():
    buf = EpisodeBuffer(150)
    assert [buf.push_episode(episode(50, i)) for i in range(3)] == [0, 0, 0]
    assert buf.total_transitions == 150


def test_fourth_episode_evicts_oldest():
    buf = EpisodeBuffer(150)
    for i in range(3):
        buf.push_episode(episode(50, i))
    assert buf.push_episode(episode(50, 3)) == 1
    assert buf.total_transitions == 150
    assert [e.images[0, 0] for e in buf.episodes] == [1, 2, 3]


def test_oversized_episode_keeps_its_tail():
    ep = episode(50, 0.5)
    buf = EpisodeBuffer(30)
    buf.push_episode(ep)
    assert buf.total_transitions == 30
    kept = buf.episodes[0]
    np.testing.assert_array_equal(kept.actions, ep.actions[-30:])
    np.testing.assert_array_equal(kept.latents, ep.latents[-31:])


def test_resize_150_to_120_leaves_100():
    buf = EpisodeBuffer(150)
    for i in range(3):
        buf.push_episode(episode(50, i))
    assert buf.resize(120) == 1
    assert buf.total_transitions == 100


def test_resize_larger_or_equal_is_noop():
    buf = EpisodeBuffer(150)
    for i in range(3):
        buf.push_episode(episode(50, i))
    assert buf.resize(500) == 0 and buf.total_transitions == 150
    assert buf.resize(150) == 0 and buf.total_transitions == 150


def test_empty_episode_rejected():
    with pytest.raises(ValueError):
        Episode(np.zeros((1, 3)), np.zeros((1, 2)), np.zeros((0, 2)), np.zeros(2))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(1, 120)), min_size=1, max_size=500), st.integers(1, 200))
def test_capacity_and_fifo_under_fuzz(ops, cap0):
    buf = EpisodeBuffer(cap0)
    for is_push, n in ops:
        if is_push:
            buf.push_episode(episode(min(n, 50), float(buf.pushed)))
        else:
            buf.resize(n)
        assert buf.total_transitions <= buf.capacity_transitions
        assert buf.total_transitions == sum(len(e) for e in buf.episodes)
        ids = [int(e.images[-1, 0]) for e in buf.episodes]
        assert ids == list(range(buf.first_id, buf.pushed))


def test_capacity_fuzz_ten_thousand_ops():
    rng = np.random.default_rng(0)
    buf = EpisodeBuffer(100)
    shared = episode(50)
    for k in range(10_000):
        if rng.random() < 0.6:
            buf.push_episode(shared.tail(int(rng.integers(1, 51))))
        else:
            buf.resize(int(rng.integers(1, 400)))
        assert buf.total_transitions <= buf.capacity_transitions


def test_future_relabel_on_single_step_episode():
    buf = EpisodeBuffer(10)
    ep = episode(1)
    buf.push_episode(ep)
    b = buf.sample_batch(8, np.random.default_rng(0), f_future=1.0, f_prior=0.0)
    np.testing.assert_array_equal(b.goal, np.tile(ep.latents[1], (8, 1)))
    assert np.all(b.reward == 0.0)


def test_no_relabel_keeps_goals():
    buf = EpisodeBuffer(200)
    eps = [episode(7, i / 10) for i in range(5)]
    for e in eps:
        buf.push_episode(e)
    b = buf.sample_batch(64, np.random.default_rng(1), 0.0, 0.0)
    for i, ep_idx in enumerate(b.episode_index):
        np.testing.assert_array_equal(b.goal[i], eps[ep_idx].goal_latent)
    assert np.all(b.goal_source_step == -1)


def test_rewards_and_future_indices_exhaustive_check():
    buf = EpisodeBuffer(10)
    eps = [episode(4, 0.1), episode(6, 0.2)]
    for e in eps:
        buf.push_episode(e)
    b = buf.sample_batch(2000, np.random.default_rng(2), 0.5, 0.2)
    for i in range(len(b)):
        e, t, src = eps[b.episode_index[i]], b.step_index[i], b.goal_source_step[i]
        np.testing.assert_array_equal(b.obs[i], e.latents[t])
        np.testing.assert_array_equal(b.next_obs[i], e.latents[t + 1])
        np.testing.assert_array_equal(b.action[i], e.actions[t])
        if src >= 0:
            assert t <= src < len(e)
            np.testing.assert_array_equal(b.goal[i], e.latents[src + 1])
        elif src == -1:
            np.testing.assert_array_equal(b.goal[i], e.goal_latent)
        assert b.reward[i] == pytest.approx(-np.linalg.norm(b.next_obs[i] - b.goal[i]), abs=1e-15)
    frac = np.bincount(np.where(b.goal_source_step >= 0, 0, -b.goal_source_step), minlength=3) / len(b)
    np.testing.assert_allclose(frac, [0.5, 0.3, 0.2], atol=0.04)


def test_sampling_errors():
    with pytest.raises(ValueError):
        EpisodeBuffer(5).sample_batch(3, np.random.default_rng(0))
    buf = EpisodeBuffer(5)
    buf.push_episode(episode(2))
    with pytest.raises(ValueError):
        buf.sample_batch(3, np.random.default_rng(0), 0.8, 0.3)


def test_refresh_latents():
    rng = np.random.default_rng(3)
    m = make_vae((1, 2, 2), 2, 1.0, (4,), rng)
    buf = EpisodeBuffer(100)
    for _ in range(4):
        imgs = rng.random((11, 4))
        buf.push_episode(Episode(imgs, np.zeros((11, 2)), rng.standard_normal((10, 2)), np.zeros(2)))
    buf.refresh_latents(m)
    first = [e.latents.copy() for e in buf.episodes]
    for e in buf.episodes:
        for img, lat in zip(e.images, e.latents):
            np.testing.assert_allclose(lat, encode(m, img).mean, rtol=1e-13)
    buf.refresh_latents(m)
    assert all(np.array_equal(a, e.latents) for a, e in zip(first, buf.episodes))


def test_images_are_immutable():
    ep = episode(3)
    with pytest.raises(ValueError):
        ep.images[0, 0] = 1.0


def test_snapshot_roundtrip(tmp_path):
    buf = EpisodeBuffer(100)
    for i in range(3):
        buf.push_episode(episode(5 + i, i / 10))
    buf.save_snapshot(tmp_path / "b.rpb")
    back = EpisodeBuffer.load_snapshot(tmp_path / "b.rpb", 100)
    assert back.total_transitions == buf.total_transitions
    for a, b in zip(buf.episodes, back.episodes):
        for f in ("images", "latents", "actions", "goal_latent"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
