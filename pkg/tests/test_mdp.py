"""Chain construction, stationary solves, sampling, and mixing times."""

import numpy as np
import pytest
from scipy import stats

import tdsplit as t

from conftest import make_cycle_chain, make_reference_chain


def test_mdp_rejects_bad_rows():
    trans = np.array([[[0.5, 0.4]], [[0.5, 0.5]]])  # first row sums to 0.9
    with pytest.raises(ValueError, match="sum to 1"):
        t.Mdp(transition=trans, reward=np.zeros((2, 1, 2)), gamma=0.9)


def test_mdp_rejects_bad_gamma():
    trans = np.full((2, 1, 2), 0.5)
    for g in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError, match="gamma"):
            t.Mdp(transition=trans, reward=np.zeros((2, 1, 2)), gamma=g)


def test_mdp_r_max_consistency():
    trans = np.full((2, 1, 2), 0.5)
    rew = np.full((2, 1, 2), 2.0)
    with pytest.raises(ValueError, match="r_max"):
        t.Mdp(transition=trans, reward=rew, gamma=0.5, r_max=1.0)
    mdp = t.Mdp(transition=trans, reward=rew, gamma=0.5)
    assert mdp.r_max == 2.0


def test_policy_rows_validated():
    with pytest.raises(ValueError):
        t.Policy(mu=np.array([[0.7, 0.2], [0.5, 0.5]]))


def test_reference_chain_stationary():
    chain = make_reference_chain()
    assert np.allclose(chain.pi, [0.5, 0.5], atol=1e-12)
    assert np.allclose(chain.R, [1.0, 0.0], atol=1e-12)
    assert np.abs(chain.pi @ chain.P - chain.pi).max() <= 1e-10


def test_cycle_chain_uniform_stationary():
    chain = make_cycle_chain()
    assert np.allclose(chain.pi, 1.0 / 3.0, atol=1e-12)


def test_induce_chain_rejects_reducible():
    trans = np.eye(2)[:, None, :]  # two absorbing states
    mdp = t.Mdp(transition=trans, reward=np.zeros((2, 1, 2)), gamma=0.5)
    with pytest.raises(ValueError, match="irreducible"):
        t.induce_chain(mdp, t.Policy(mu=np.ones((2, 1))))


def test_induce_chain_rejects_periodic():
    trans = np.array([[0.0, 1.0], [1.0, 0.0]])[:, None, :]
    mdp = t.Mdp(transition=trans, reward=np.zeros((2, 1, 2)), gamma=0.5)
    with pytest.raises(ValueError, match="irreducible and aperiodic"):
        t.induce_chain(mdp, t.Policy(mu=np.ones((2, 1))))


def test_action_dependent_rewards_consistent():
    # rewards differ per action; the per-transition reward must stay
    # consistent with the one-step expected reward
    rng = np.random.default_rng(7)
    mdp = t.garnet_mdp(5, 3, 3, gamma=0.8, rng=rng)
    policy = t.random_policy(5, 3, rng=rng)
    chain = t.induce_chain(mdp, policy)
    expected_R = np.einsum("sa,san,san->s", policy.mu, mdp.transition, mdp.reward)
    assert np.abs(chain.R - expected_R).max() <= 1e-12
    assert np.abs(chain.R - (chain.P * chain.r_pair).sum(axis=1)).max() <= 1e-12
    assert np.abs(chain.r_pair).max() <= mdp.r_max + 1e-12


def test_stationary_matches_power_iteration():
    chain = t.random_chain(5, 2, 3, gamma=0.9, seed=11)
    pi = np.full(5, 0.2)
    for _ in range(200_000):
        nxt = pi @ chain.P
        if np.abs(nxt - pi).max() < 1e-15:
            pi = nxt
            break
        pi = nxt
    assert np.abs(chain.pi - pi / pi.sum()).max() <= 1e-12
    assert np.abs(chain.pi @ chain.P - chain.pi).max() <= 1e-10


def test_sample_trajectory_one_state_chain():
    P = np.ones((1, 1, 1))
    rew = np.full((1, 1, 1), 0.25)
    chain = t.induce_chain(t.Mdp(transition=P, reward=rew, gamma=0.5), t.Policy(mu=np.ones((1, 1))))
    traj = t.sample_trajectory(chain, 3, seed=0)
    assert list(traj.transitions()) == [(0, 0.25, 0), (0, 0.25, 0), (0, 0.25, 0)]


def test_sample_trajectory_deterministic(reference_chain):
    a = t.sample_trajectory(reference_chain, 1000, seed=42)
    b = t.sample_trajectory(reference_chain, 1000, seed=42)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.rewards, b.rewards)
    c = t.sample_trajectory(reference_chain, 1000, seed=43)
    assert not np.array_equal(a.states, c.states)


def test_sample_trajectory_fixed_start(reference_chain):
    traj = t.sample_trajectory(reference_chain, 10, seed=0, start=1)
    assert traj.states[0] == 1
    assert traj.start_mode == "fixed(1)"
    assert t.sample_trajectory(reference_chain, 10, seed=0).start_mode == "stationary"


def test_sample_trajectory_rewards_consistent(reference_chain):
    traj = t.sample_trajectory(reference_chain, 200, seed=5)
    for s, r, s2 in traj.transitions():
        assert r == reference_chain.r_pair[s, s2]


def test_sample_trajectory_long_run_frequencies(reference_chain):
    traj = t.sample_trajectory(reference_chain, 10**6, seed=123)
    freq = np.bincount(traj.states[:-1], minlength=2) / 10**6
    assert np.abs(freq - reference_chain.pi).max() < 0.01


def test_stationary_start_marginals_chi2(reference_chain):
    # with a stationary start the state marginal at any step equals pi
    n_runs = 100_000
    counts = {0: np.zeros(2, dtype=int), 10: np.zeros(2, dtype=int)}
    for seed in range(n_runs):
        traj = t.sample_trajectory(reference_chain, 11, seed=seed)
        counts[0][traj.states[0]] += 1
        counts[10][traj.states[10]] += 1
    for step, cnt in counts.items():
        res = stats.chisquare(cnt, f_exp=reference_chain.pi * n_runs)
        assert res.pvalue > 0.001, f"marginal at step {step} off: {cnt}"


def test_mixing_time_reference_closed_form(reference_chain):
    # sup-TV of this chain is exactly 0.5 * 0.8^t
    assert t.mixing_time(reference_chain, 0.1) == 8
    profile = t.mixing_profile(reference_chain, 1e-6)
    ts = np.arange(len(profile.tv_curve))
    assert np.abs(profile.tv_curve - 0.5 * 0.8**ts).max() <= 1e-12


def test_mixing_time_uniform_rows(uniform_chain):
    for eps in (0.5, 0.1, 0.001):
        assert t.mixing_time(uniform_chain, eps) == 1


def test_mixing_time_cycle_brute_force(cycle_chain):
    eps = 0.01
    got = t.mixing_time(cycle_chain, eps)
    # independent oracle: fresh matrix powers per t
    tau = None
    for step in range(1, 10_000):
        Pt = np.linalg.matrix_power(cycle_chain.P, step)
        if 0.5 * np.abs(Pt - cycle_chain.pi).sum(axis=1).max() <= eps:
            tau = step
            break
    assert got == tau


def test_mixing_time_monotone_in_eps(cycle_chain):
    taus = [t.mixing_time(cycle_chain, eps) for eps in (0.2, 0.05, 0.01, 0.001)]
    assert all(a <= b for a, b in zip(taus, taus[1:]))


def test_mixing_time_epsilon_validation(reference_chain):
    for eps in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            t.mixing_time(reference_chain, eps)


def test_mixing_cap():
    chain = make_reference_chain()
    slow = t.with_gamma(chain, 0.5)  # gamma irrelevant to mixing; use tiny cap
    with pytest.raises(ValueError, match="too slowly"):
        t.mixing_time(slow, 1e-9, cap=3)


def test_mixing_profile_envelope(reference_chain, cycle_chain):
    for chain in (reference_chain, cycle_chain):
        profile = t.mixing_profile(chain, 1e-8)
        ts = np.arange(len(profile.tv_curve))
        assert np.all(profile.tv_curve <= profile.m * profile.rho**ts + 1e-12)
        assert np.all(np.diff(profile.tv_curve) <= 1e-12)


def test_garnet_chains_valid():
    for seed in range(10):
        chain = t.random_chain(6, 2, 3, gamma=0.9, seed=seed)
        assert chain.pi.min() > 0
        assert np.abs(chain.pi @ chain.P - chain.pi).max() <= 1e-10
        assert np.abs(chain.P.sum(axis=1) - 1).max() <= 1e-12


def test_instance_file_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    mdp = t.garnet_mdp(4, 2, 2, gamma=0.7, rng=rng)
    policy = t.random_policy(4, 2, rng=rng)
    path = tmp_path / "inst.json"
    t.save_instance(path, mdp, policy)
    mdp2, policy2 = t.load_instance(path)
    assert np.abs(mdp2.transition - mdp.transition).max() <= 1e-15
    assert np.abs(policy2.mu - policy.mu).max() <= 1e-15
    assert mdp2.gamma == mdp.gamma


def test_instance_file_row_sum_tolerance(tmp_path):
    import json

    trans = np.full((2, 1, 2), 0.5)
    doc = {
        "n_states": 2, "n_actions": 1,
        "transition": trans.tolist(), "reward": np.zeros((2, 1, 2)).tolist(),
        "gamma": 0.5, "policy": [[1.0], [1.0]],
    }
    doc["transition"][0][0][0] = 0.5 + 5e-10  # inside the 1e-9 file tolerance
    path = tmp_path / "ok.json"
    path.write_text(json.dumps(doc))
    mdp, _ = t.load_instance(path)
    assert np.abs(mdp.transition.sum(axis=-1) - 1).max() <= 1e-15  # renormalized

    doc["transition"][0][0][0] = 0.5 + 1e-6
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="sum to 1"):
        t.load_instance(bad)


def test_instance_file_missing_fields(tmp_path):
    import json

    path = tmp_path / "missing.json"
    path.write_text(json.dumps({"n_states": 2}))
    with pytest.raises(ValueError, match="missing fields"):
        t.load_instance(path)
