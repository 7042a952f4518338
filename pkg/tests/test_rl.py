import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from leosem import kernels
from leosem.env import EnvConfig
from leosem.errors import BadConfig, GroupTooSmall, StaleTrajectories
from leosem.rl import (MLP, Adam, Batch, Policy, Trainer, TrainerConfig, Trajectory, batch_log_probs,
                       clipped_surrogate, grpo_update, group_advantage, ppo_update, read_checkpoint,
                       surrogate_loss, value_loss)

# (0.4, 0.1, 0.7, 0.2): mean 0.35, sample variance 0.21 / 3 = 0.07
ADV_EXAMPLE = [0.05 / math.sqrt(0.07), -0.25 / math.sqrt(0.07), 0.35 / math.sqrt(0.07), -0.15 / math.sqrt(0.07)]


def test_group_advantage_example():
    np.testing.assert_allclose(group_advantage([0.4, 0.1, 0.7, 0.2]), ADV_EXAMPLE, rtol=1e-12)
    np.testing.assert_allclose(ADV_EXAMPLE, [0.18898223650, -0.94491118252, 1.32287565553, -0.56694670951],
                               rtol=1e-10)


def test_group_advantage_degenerate():
    assert np.all(group_advantage([0.3] * 5) == 0.0)
    with pytest.raises(GroupTooSmall):
        group_advantage([1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=16), st.floats(0.1, 10), st.floats(-5, 5))
def test_group_advantage_invariants(rets, scale, shift):
    a = group_advantage(rets)
    if np.ptp(rets) < 1e-6:
        return
    assert abs(a.sum()) < 1e-9
    assert a.std(ddof=1) == pytest.approx(1.0, rel=1e-9)
    b = group_advantage([scale * r + shift for r in rets])
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_clipped_surrogate_examples():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, 1.0, 0.2) == pytest.approx(0.5)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_surrogate(1.5, -1.0, 0.2) == pytest.approx(-1.5)
    assert clipped_surrogate(1.1, 2.0, 0.2) == pytest.approx(2.2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(-5, 5), st.floats(0.01, 0.9))
def test_clipped_surrogate_is_pessimistic(r, a, clip):
    v = clipped_surrogate(r, a, clip)
    assert v <= r * a + 1e-12
    assert v <= np.clip(r, 1 - clip, 1 + clip) * a + 1e-12


def test_trainer_config_validation():
    for bad in (dict(algorithm="sac"), dict(group_size=1), dict(clip=0.0), dict(discount=0.0),
                dict(learning_rate=-1.0), dict(epochs=0), dict(hidden=())):
        with pytest.raises(BadConfig):
            TrainerConfig(**bad)


def test_trajectory_returns():
    tr = Trajectory(np.zeros((3, 1)), np.zeros((3, 1), int), np.zeros(3), np.array([1.0, 2.0, 4.0]),
                    np.ones((3, 1), bool))
    assert tr.total_return == 7.0
    assert tr.discounted_return(0.5) == 1.0 + 1.0 + 1.0
    np.testing.assert_allclose(tr.returns_to_go(0.5), [3.0, 4.0, 4.0])


# ---------------------------------------------------------------- kernels


def test_uniform_logits_over_legal_subset():
    mask = np.array([[1, 0, 1, 0, 1, 0, 1, 0]], np.uint8)
    for impl in kernels.backends().values():
        lp = impl.masked_log_softmax(np.zeros((1, 8)), mask, np.array([0, 8], np.intp))[0]
        np.testing.assert_allclose(np.exp(lp[mask[0] == 1]), 0.25, rtol=1e-15)
        assert np.all(lp[mask[0] == 0] == -np.inf)


def test_sampling_frequencies_chi_square():
    logits = np.array([[0.3, -1.0, 2.0, 0.0, 0.7, 5.0]])
    mask = np.array([[1, 1, 1, 1, 1, 0]], np.uint8)
    lp = kernels.masked_log_softmax(logits, mask, np.array([0, 6], np.intp))[0]
    rng = np.random.default_rng(0)
    n = 100_000
    draws = np.array([kernels.sample_segment(lp, 0, 6, u) for u in rng.random(n)])
    counts = np.bincount(draws, minlength=6)
    assert counts[5] == 0
    p = np.exp(lp[:5])
    assert stats.chisquare(counts[:5], n * p / p.sum()).pvalue > 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_kernel_backends_agree(seed):
    rng = np.random.default_rng(seed)
    offsets = np.array([0, 3, 7, 8, 12], np.intp)
    logits = rng.normal(0, 3, (5, 12))
    mask = (rng.random((5, 12)) < 0.6).astype(np.uint8)
    for h in range(4):
        mask[:, offsets[h]] = 1
    impls = list(kernels.backends().values())
    ref = impls[0].masked_log_softmax(logits, mask, offsets)
    for impl in impls[1:]:
        np.testing.assert_allclose(impl.masked_log_softmax(logits, mask, offsets), ref, rtol=1e-13)
        u = float(rng.random())
        assert impl.sample_segment(ref[0], 3, 7, u) == impls[0].sample_segment(ref[0], 3, 7, u)
        xs = rng.uniform(0, 40, 20)
        np.testing.assert_allclose(impl.j0_array(xs), impls[0].j0_array(xs), rtol=1e-13, atol=1e-15)


# ---------------------------------------------------------------- gradients


def _toy_batch(seed, offset_scale=0.05, n=12):
    rng = np.random.default_rng(seed)
    offsets = np.array([0, 3, 5, 9], np.intp)
    policy = Policy(6, offsets, hidden=(8, 8), rng=rng)
    policy.net.params["W2"] *= 100.0  # non-trivial logits
    states = rng.normal(size=(n, 6))
    masks = rng.random((n, 9)) < 0.7
    actions = np.zeros((n, 3), np.intp)
    for h in range(3):
        lo, hi = offsets[h], offsets[h + 1]
        masks[:, lo] = True
        for i in range(n):
            actions[i, h] = rng.choice(np.flatnonzero(masks[i, lo:hi]))
    logits, _ = policy.logits(states)
    logp, _ = batch_log_probs(policy, logits, actions, masks)
    old = logp + rng.uniform(-offset_scale, offset_scale, n)
    batch = Batch(states, actions, masks, old, rng.normal(size=n), np.full(n, 1.0 / n))
    ref = logp + rng.normal(0, 0.1, n)
    return policy, batch, ref


@pytest.mark.parametrize("offset_scale,kl", [(0.05, 0.0), (0.6, 0.0), (0.05, 0.3)])
def test_surrogate_gradient_finite_differences(offset_scale, kl):
    policy, batch, ref = _toy_batch(1, offset_scale)
    _, grads, _ = surrogate_loss(policy, batch, 0.2, kl, ref)
    h = 1e-6
    for k, w in policy.net.params.items():
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            lp = surrogate_loss(policy, batch, 0.2, kl, ref)[0]
            w[idx] = old - h
            lm = surrogate_loss(policy, batch, 0.2, kl, ref)[0]
            w[idx] = old
            num[idx] = (lp - lm) / (2 * h)
        scale = max(np.abs(num).max(), 1e-8)
        assert np.abs(grads[k] - num).max() <= 1e-4 * scale, k


def test_value_gradient_finite_differences():
    rng = np.random.default_rng(2)
    net = MLP((4, 8, 8, 1), rng, out_scale=1.0)
    x, y = rng.normal(size=(10, 4)), rng.normal(size=10)
    _, grads = value_loss(net, x, y)
    flat = net.flat()
    num = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = 1e-6
        net.set_flat(flat + e)
        a = value_loss(net, x, y)[0]
        net.set_flat(flat - e)
        b = value_loss(net, x, y)[0]
        num[i] = (a - b) / 2e-6
    net.set_flat(flat)
    ana = np.concatenate([grads[k].ravel() for k in net.keys()])
    assert np.abs(ana - num).max() <= 1e-4 * np.abs(num).max()


# ---------------------------------------------------------------- bandits

BANDIT_P = np.array([0.2, 0.5, 0.9, 0.4])


def _bandit_traj(policy, rng, group_id=0):
    s = np.ones((1, 2))
    mask = np.ones((1, 4), bool)
    logits, _ = policy.logits(s)
    lp = kernels.masked_log_softmax(logits, mask.view(np.uint8), policy.offsets)[0]
    a = int(kernels.sample_segment(lp, 0, 4, rng.random()))
    r = float(rng.random() < BANDIT_P[a])
    return Trajectory(s, np.array([[a]]), np.array([lp[a]]), np.array([r]), mask, group_id)


def _p_best(policy):
    logits, _ = policy.logits(np.ones((1, 2)))
    p = np.exp(logits[0] - logits[0].max())
    return p[2] / p.sum()


def test_grpo_solves_bandit():
    rng = np.random.default_rng(0)
    policy = Policy(2, [0, 4], hidden=(8,), rng=rng)
    cfg = TrainerConfig(group_size=16, learning_rate=0.05, epochs=2)
    opt = Adam(cfg.learning_rate)
    for i in range(200):
        grpo_update(policy, [[_bandit_traj(policy, rng) for _ in range(16)]], cfg, opt)
        if _p_best(policy) > 0.95:
            break
    assert _p_best(policy) > 0.95


def test_ppo_improves_bandit():
    rng = np.random.default_rng(1)
    policy = Policy(2, [0, 4], hidden=(8,), rng=rng)
    value = MLP((2, 8, 1), rng, out_scale=1.0)
    cfg = TrainerConfig(algorithm="ppo", group_size=16, learning_rate=0.05, epochs=2)
    opt, vopt = Adam(cfg.learning_rate), Adam(cfg.value_learning_rate)
    start = _p_best(policy)
    for _ in range(200):
        ppo_update(policy, value, [_bandit_traj(policy, rng) for _ in range(16)], cfg, opt, vopt)
    assert _p_best(policy) > max(start, 0.5)


def test_zero_advantage_leaves_policy_unchanged():
    rng = np.random.default_rng(3)
    policy = Policy(2, [0, 4], hidden=(8,), rng=rng)
    before = policy.net.flat()
    group = [_bandit_traj(policy, rng) for _ in range(6)]
    for tr in group:
        tr.rewards[:] = 0.5
    grpo_update(policy, [group], TrainerConfig(), Adam(0.1))
    np.testing.assert_array_equal(policy.net.flat(), before)


def test_stale_trajectories_rejected():
    rng = np.random.default_rng(4)
    policy = Policy(2, [0, 4], hidden=(8,), rng=rng)
    group = [_bandit_traj(policy, rng) for _ in range(4)]
    group[2].logp = group[2].logp + 1e-3
    with pytest.raises(StaleTrajectories):
        grpo_update(policy, [group], TrainerConfig(), Adam())


def test_value_net_fits_constant():
    rng = np.random.default_rng(5)
    net = MLP((3, 16, 1), rng, out_scale=1.0)
    opt = Adam(1e-2)
    x = rng.normal(size=(64, 3))
    y = np.full(64, 3.0)
    for _ in range(1500):
        _, g = value_loss(net, x, y)
        opt.step(net.params, g)
    assert np.abs(net.forward(x)[0][:, 0] - 3.0).max() < 1e-2


# ---------------------------------------------------------------- trainer

TINY = EnvConfig(n_leo=2, n_uav=1, n_user=2, n_tasks=3, horizon=25, arrival_rate=5.0)


def _tiny_cfg(algo="grpo", **kw):
    return TrainerConfig(algorithm=algo, group_size=3, hidden=(8, 8), epochs=2, updates=2, **kw)


def test_grpo_has_no_value_network():
    t = Trainer(TINY, _tiny_cfg(), 0)
    assert t.value_net is None
    assert all(k.startswith("policy.") for k in t.parameters())
    p = Trainer(TINY, _tiny_cfg("ppo"), 0)
    assert any(k.startswith("value.") for k in p.parameters())


@pytest.mark.parametrize("algo,kl", [("grpo", 0.0), ("grpo", 0.05), ("ppo", 0.0)])
def test_checkpoint_resume_is_bit_identical(tmp_path, algo, kl):
    a = Trainer(TINY, _tiny_cfg(algo, kl_coef=kl), 7, "text")
    a.train()
    a.save(tmp_path / "c.npz")
    a.train()
    b = Trainer.load(tmp_path / "c.npz", TINY)
    assert b.config_text == "text" and b.update_index == 2
    b.train()
    for k, v in a.parameters().items():
        np.testing.assert_array_equal(b.parameters()[k], v)
    assert a.history == b.history


def test_training_log_and_checkpoint_meta(tmp_path):
    t = Trainer(TINY, _tiny_cfg(), 1)
    t.train()
    t.write_log(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "update,mean_group_return,loss,clip_fraction"
    assert len(lines) == 3
    t.save(tmp_path / "c.npz")
    meta, arrays = read_checkpoint(tmp_path / "c.npz")
    assert meta["update_index"] == 2 and "policy/W0" in arrays


def test_same_seed_same_training():
    a, b = Trainer(TINY, _tiny_cfg(), 3), Trainer(TINY, _tiny_cfg(), 3)
    a.train()
    b.train()
    np.testing.assert_array_equal(a.policy.net.flat(), b.policy.net.flat())


def test_small_advantage_example():
    np.testing.assert_allclose(group_advantage([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0], atol=1e-15)


def test_forced_heads_have_zero_log_prob():
    from leosem.env import SemanticSatEnv
    from leosem.masking import SlotMasker
    from leosem.rl import sample_action
    cfg = EnvConfig(n_leo=2, n_uav=1, n_user=2, n_tasks=1, arrival_rate=0.0, hover_only=True)
    env = SemanticSatEnv(cfg)
    state = env.reset(0)
    policy = Policy(cfg.observation_size, cfg.layout.offsets, hidden=(8,), rng=np.random.default_rng(0))
    idx, lp, mk = sample_action(policy, state.vector, SlotMasker(state.context), np.random.default_rng(1))
    assert idx == (0,) * cfg.layout.n_heads and lp == 0.0
    assert mk.sum() == cfg.layout.n_heads


def test_masked_options_get_no_gradient():
    from leosem.rl.policy import dlogp_dlogits
    policy, batch, _ = _toy_batch(6)
    logits, _ = policy.logits(batch.states)
    _, lp_all = batch_log_probs(policy, logits, batch.actions, batch.masks)
    g = dlogp_dlogits(policy, lp_all, batch.actions)
    assert np.all(g[~batch.masks] == 0.0)
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)
