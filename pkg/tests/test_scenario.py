import numpy as np
import pytest

from fmplanner.config import PROFILES
from fmplanner.quintic import quintic_eval, quintic_fit
from fmplanner.scenario import (DT, AGENT_DIM, LANE_DIM, STATIC_DIM, NormStats,
                                ScenarioFrame, augment, fit_stats, model_to_traj,
                                prepare_batch, traj_to_model)

CFG = PROFILES["desk"]


def make_frame(rng, speed=8.0, with_future=True):
    T, P = CFG.num_past_steps, CFG.points_per_polyline
    ego_hist = np.zeros((T, AGENT_DIM))
    ts = (np.arange(T) - (T - 1)) * DT
    ego_hist[:, 0] = speed * ts
    ego_hist[:, 2] = 1.0
    ego_hist[:, 4] = speed
    ego_hist[:, 6:8] = [4.6, 1.9]
    ego_hist[:, 8] = 1.0
    neighbors = rng.normal(0, 5, size=(CFG.num_neighbors, T, AGENT_DIM))
    nvalid = np.ones((CFG.num_neighbors, T))
    nvalid[-1] = 0.0  # one padded slot
    neighbors[-1] = 0.0
    lanes = rng.normal(0, 10, size=(CFG.num_lanes, P, LANE_DIM))
    lvalid = np.ones(CFG.num_lanes)
    nav = rng.normal(0, 10, size=(CFG.num_nav_lanes, P, LANE_DIM))
    navvalid = np.ones(CFG.num_nav_lanes)
    statics = rng.normal(0, 10, size=(CFG.num_statics, STATIC_DIM))
    svalid = np.ones(CFG.num_statics)
    future = None
    if with_future:
        t = np.arange(CFG.traj_len) * DT
        future = np.stack([speed * t, 0.05 * t ** 2, 0.01 * t], axis=-1)
    return ScenarioFrame(ego_speed=speed, ego_accel=0.0, ego_history=ego_hist,
                         neighbors=neighbors, neighbor_valid=nvalid,
                         lanes=lanes, lane_valid=lvalid, nav=nav, nav_valid=navvalid,
                         statics=statics, static_valid=svalid, future=future)


def test_codec_roundtrip():
    rng = np.random.default_rng(0)
    stats = NormStats(10.0, 4.0, 2.0)
    traj = np.stack([rng.uniform(0, 60, 80), rng.uniform(-5, 5, 80),
                     rng.uniform(-3, 3, 80)], axis=-1)
    back = model_to_traj(traj_to_model(traj, stats), stats)
    np.testing.assert_allclose(back[:, :2], traj[:, :2], atol=1e-12)
    dh = np.abs(np.remainder(back[:, 2] - traj[:, 2] + np.pi, 2 * np.pi) - np.pi)
    assert dh.max() < 1e-12


def test_codec_arithmetic_example():
    stats = NormStats(10.0, 2.0, 5.0)
    out = traj_to_model(np.array([[14.0, 10.0, 0.0]]), stats)
    np.testing.assert_allclose(out[0, :2], [2.0, 2.0])


def test_fit_stats_zero_mean():
    rng = np.random.default_rng(1)
    futures = [np.stack([rng.uniform(0, 90, 80), rng.uniform(-6, 6, 80),
                         np.zeros(80)], axis=-1) for _ in range(32)]
    stats = fit_stats(futures)
    xs = np.concatenate([traj_to_model(f, stats)[:, 0] for f in futures])
    assert abs(xs.mean()) < 1e-10


def test_stats_validation():
    with pytest.raises(ValueError):
        NormStats(np.nan, 1.0, 1.0)
    with pytest.raises(ValueError):
        NormStats(0.0, -1.0, 1.0)


def test_prepare_batch_shapes_and_masks():
    rng = np.random.default_rng(2)
    frames = [make_frame(rng) for _ in range(3)]
    stats = fit_stats([f.future for f in frames])
    batch = prepare_batch(frames, stats, CFG)
    assert batch.agents.shape == (3, 1 + CFG.num_neighbors, CFG.num_past_steps, AGENT_DIM)
    assert batch.target.shape == (3, CFG.traj_len, 4)
    assert batch.normalized
    # padded neighbor slot is fully zeroed and invalid
    assert batch.agent_valid[0, -1] == 0.0
    np.testing.assert_array_equal(batch.agents[0, -1], 0.0)
    # ego slot is always valid and anchored at the origin
    assert batch.agent_valid[0, 0] == 1.0
    np.testing.assert_allclose(batch.agent_anchor[0, 0], [0.0, 0.0])


def test_batch_invariant_to_invalid_slot_values():
    rng = np.random.default_rng(3)
    f1 = make_frame(rng)
    f2 = f1.copy()
    f2.future = f1.future.copy()
    f2.neighbors[-1] = 999.0  # invalid slot, value must not matter
    stats = fit_stats([f1.future])
    b1 = prepare_batch([f1], stats, CFG)
    b2 = prepare_batch([f2], stats, CFG)
    np.testing.assert_array_equal(b1.agents, b2.agents)


def test_null_neighbors_keeps_ego_slot():
    rng = np.random.default_rng(4)
    frames = [make_frame(rng)]
    stats = fit_stats([frames[0].future])
    batch = prepare_batch(frames, stats, CFG)
    nulled = batch.null_neighbors()
    np.testing.assert_array_equal(nulled.agents[:, 0], batch.agents[:, 0])
    np.testing.assert_array_equal(nulled.agents[:, 1:], 0.0)
    assert nulled.agent_valid[0, 0] == 1.0
    assert nulled.agent_valid[0, 1:].sum() == 0.0


def test_augment_zero_perturbation_limit():
    # boundary conditions guarantee frame 0 and frame 20 stay put
    rng = np.random.default_rng(5)
    frame = make_frame(rng)
    orig = frame.future.copy()

    class FixedRng:
        def uniform(self, lo, hi):
            return 0.0

    out = augment(frame, FixedRng())
    np.testing.assert_allclose(out.future[0], orig[0], atol=1e-9)
    np.testing.assert_allclose(out.future[20], orig[20], atol=1e-9)
    np.testing.assert_array_equal(out.future[21:], orig[21:])


def test_augment_frame0_is_perturbed_state_and_seam_holds():
    rng = np.random.default_rng(6)
    frame = make_frame(rng)
    orig = frame.future.copy()

    class OneDraw:
        def __init__(self):
            self.vals = iter([0.3, 0.2, 0.05, 0.0])

        def uniform(self, lo, hi):
            return next(self.vals)

    out = augment(frame, OneDraw())
    np.testing.assert_allclose(out.future[0], [0.3, 0.2, 0.05], atol=0)
    np.testing.assert_allclose(out.future[20], orig[20], atol=1e-9)
    # C2 seam: quintic end derivatives match the original path's central
    # differences at the 2 s mark
    v1 = (orig[21, :2] - orig[19, :2]) / (2 * DT)
    a1 = (orig[21, :2] - 2 * orig[20, :2] + orig[19, :2]) / DT ** 2
    p0 = np.array([0.3, 0.2])
    v0 = frame.ego_speed * np.array([np.cos(0.05), np.sin(0.05)])
    c = quintic_fit(p0, v0, np.zeros(2), orig[20, :2], v1, a1, 2.0)
    assert np.abs(quintic_eval(c, np.array(2.0), 1) - v1).max() < 1e-9
    assert np.abs(quintic_eval(c, np.array(2.0), 2) - a1).max() < 1e-9
    # interpolated interior matches the quintic oracle
    ts = np.arange(21) * DT
    np.testing.assert_allclose(out.future[:21, :2], quintic_eval(c, ts), atol=1e-9)


def test_augment_updates_ego_current_row():
    rng = np.random.default_rng(7)
    frame = make_frame(rng, speed=6.0)

    class OneDraw:
        def __init__(self):
            self.vals = iter([0.5, -0.1, 0.02, 0.8])

        def uniform(self, lo, hi):
            return next(self.vals)

    out = augment(frame, OneDraw())
    assert out.ego_speed == pytest.approx(6.8)
    np.testing.assert_allclose(out.ego_history[-1, :2], [0.5, -0.1])
    np.testing.assert_allclose(out.ego_history[-1, 4],
                               6.8 * np.cos(0.02))


def test_augment_requires_future():
    rng = np.random.default_rng(8)
    frame = make_frame(rng, with_future=False)
    with pytest.raises(ValueError):
        augment(frame, rng)
