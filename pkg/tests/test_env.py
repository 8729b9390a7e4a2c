import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from irs_antijam.channel import PhaseConfig, effective_rows
from irs_antijam.env import (
    ActionSpace,
    ActionSpaceConfig,
    AntiJammingEnv,
    EnvConfig,
    FeatureBins,
    Jammer,
    JammerPolicy,
    StateBinsConfig,
    protection_level,
    quantize_state,
)
from irs_antijam.signals import JammerAction, PowerAllocation, reward, worst_case_directions


def test_action_count_single_user():
    space = ActionSpace(ActionSpaceConfig(num_users=1, n_power_levels=2, num_elements=1, n_phase_levels=2))
    assert len(space) == 6


def test_full_power_pair_is_infeasible():
    space = ActionSpace(ActionSpaceConfig(num_users=2, n_power_levels=2))
    assert space.profile_levels.tolist() == [[0, 0], [0, 1], [1, 0]]


def test_default_incremental_space_matches_enumeration():
    cfg = ActionSpaceConfig(num_users=2, p_max=1.0, n_power_levels=4, num_elements=8, n_phase_levels=4)
    space = ActionSpace(cfg)
    levels = np.arange(4) / 3
    feasible = [p for p in itertools.product(levels, repeat=2) if sum(p) <= 1.0 + 1e-12]
    assert len(space) == len(feasible) * 33
    assert len(space.actions()) == len(space)
    for i in (0, 17, len(space) - 1):
        assert space.encode(space.decode(i)) == i


def test_codebook_space_size():
    space = ActionSpace(ActionSpaceConfig(num_users=2, n_power_levels=3, mode="codebook", codebook_size=4))
    assert len(space) == 6 * 4


def test_action_index_bounds():
    space = ActionSpace(ActionSpaceConfig())
    with pytest.raises(IndexError):
        space.split(len(space))


def test_binning_rules():
    b = FeatureBins(15.0, 40.0, 5)
    assert b.index(10.0) == 0
    assert b.index(20.0) == 1  # interior edge goes up
    assert b.index(27.5) == 2
    assert b.index(99.0) == 4
    with pytest.raises(ValueError):
        b.position(float("nan"))


def test_quantized_state_index_is_in_range():
    bins = StateBinsConfig()
    s = quantize_state(([16.0, 39.0], [0.0, 5.0], [-20.0, 20.0]), bins)
    assert s.flat().tolist() == [0, 2, 1, 2, 0, 3]
    assert 0 <= s.index(bins) < bins.num_states(2)


def _env(**kw):
    jam = kw.pop("jammer", JammerPolicy(kind="constant", level_dbm=30.0))
    seed = kw.pop("seed", 0)
    return AntiJammingEnv(EnvConfig(**kw), jam, seed=seed)


def test_constant_jammer_one_watt():
    env = _env()
    env.reset()
    np.testing.assert_allclose(env.draw_jam().p_j, [1.0, 1.0], rtol=1e-12)


def test_sweep_jammer_is_periodic():
    jam = Jammer(JammerPolicy(kind="sweep", power_grid_dbm=(15.0, 25.0, 35.0)), 2, np.random.default_rng(0))
    seq = []
    for _ in range(6):
        seq.append(jam.levels_dbm()[0])
        jam.t += 1
    assert seq == [15.0, 25.0, 35.0, 15.0, 25.0, 35.0]


def test_reactive_jammer_finds_the_most_damaging_level():
    env = _env(num_users=1, jammer=JammerPolicy(kind="reactive", power_grid_dbm=(15.0, 40.0)))
    env.reset()
    pa = PowerAllocation([env.cfg.p_max])
    phase = PhaseConfig.zeros(env.cfg.num_elements)
    # exhaustive oracle: legitimate reward under each level with the fixed decision
    z = worst_case_directions(env.channels)
    legit = [
        reward(env.evaluate(pa, phase, JammerAction([10 ** ((lv - 30) / 10)], z)), pa, env.rp) for lv in (15.0, 40.0)
    ]
    worst = int(np.argmin(legit))
    for _ in range(500):
        env.apply(pa, phase)
    assert int(np.argmax(env.jammer.q)) == worst


def test_noop_twice_is_deterministic():
    env = _env()
    env.reset()
    a = env.step(0).sinrs
    b = env.step(0).sinrs
    assert np.array_equal(a, b)


def test_zero_power_profile():
    env = _env()
    env.reset()
    out = env.step(0)  # profile 0 is all-zero power
    assert out.rate == 0.0
    assert out.reward == pytest.approx(-env.rp.lambda2 * env.cfg.num_users)


def test_single_element_phase_oracle():
    env = _env(num_users=1, num_elements=1, n_phase_levels=4, seed=3)
    env.reset()
    pa = PowerAllocation([env.cfg.p_max])
    rewards, gains = [], []
    for lv in range(4):
        phase = PhaseConfig.from_levels([lv], 4)
        gains.append(np.linalg.norm(effective_rows(env.channels, phase)[0]))
        rewards.append(env.apply(pa, phase).reward)
    assert int(np.argmax(rewards)) == int(np.argmax(gains))


def test_protection_level_examples():
    def outs(rows):
        return [SimpleNamespace(protected=np.array(r, dtype=bool)) for r in rows]

    assert protection_level(outs([[1, 1]] * 4)) == 1.0
    assert protection_level(outs([[1, 0]] * 4)) == 0.5
    rows = [[1, 1]] * 7 + [[0, 1], [1, 0], [0, 1]]
    assert protection_level(outs(rows)) == pytest.approx(0.85)
    with pytest.raises(ValueError):
        protection_level([])


def test_phase_persists_across_episodes_by_default():
    env = _env(action_mode="codebook", codebook_size=4)
    env.reset()
    env.step(2)
    theta = env.phase.theta.copy()
    env.reset()
    assert np.array_equal(env.phase.theta, theta)
    env2 = _env(action_mode="codebook", codebook_size=4, phase_reset="episode")
    env2.reset()
    env2.step(2)
    env2.reset()
    assert not env2.phase.theta.any()


def test_codebook_starts_with_zero_phases_and_improves_gain():
    env = _env(action_mode="codebook", codebook_size=5, seed=4)
    book = env.codebook
    assert not book[0].theta.any()
    base = np.linalg.norm(effective_rows(env.channels, book[0]), axis=1) ** 2
    for k in range(2):
        g = np.linalg.norm(effective_rows(env.channels, book[1 + k]), axis=1) ** 2
        assert g[k] >= base[k]


def test_same_seed_same_trajectory():
    def run(seed):
        env = _env(jammer=JammerPolicy(kind="random"), seed=seed)
        env.reset()
        rng = np.random.default_rng(1)
        return [env.step(int(rng.integers(len(env.space)))).reward for _ in range(50)]

    assert run(5) == run(5)
    assert run(5) != run(6)


def test_observation_index_matches_state():
    env = _env(jammer=JammerPolicy(kind="random"))
    obs = env.reset()
    for a in range(30):
        obs = env.step(a % len(env.space)).next_obs
        assert obs.index == obs.state.index(env.bins)


def test_invalid_env_options():
    with pytest.raises(ValueError):
        EnvConfig(phase_reset="never")
    with pytest.raises(ValueError):
        JammerPolicy(kind="constant", level_dbm=50.0)


def test_bin_centres_quantize_to_themselves():
    bins = StateBinsConfig()
    for feature in bins.features():
        for i in range(feature.n):
            assert feature.index(feature.center(i)) == i


def test_every_action_is_feasible():
    env = _env(n_power_levels=5)
    for i in range(len(env.space)):
        pid, _ = env.space.split(i)
        assert env.space.profiles[pid].sum() <= env.cfg.p_max * (1 + 1e-12)


def test_reactive_jammer_stays_in_range():
    env = _env(jammer=JammerPolicy(kind="reactive"))
    env.reset()
    for a in range(300):
        dbm = 10 * np.log10(env.step(a % len(env.space)).jam_powers) + 30
        assert np.all((dbm >= 15.0 - 1e-9) & (dbm <= 40.0 + 1e-9))
