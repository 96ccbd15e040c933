import numpy as np
import pytest

from fairdice.environments import (
    FOUR_ROOM_GOALS_3,
    FOUR_ROOM_START,
    FourRoomConfig,
    RandomMOMDPConfig,
    build_four_room,
    build_four_room_env,
    build_random_momdp,
)
from fairdice.momdp import validate_momdp

LEFT, RIGHT, UP, DOWN = range(4)


@pytest.fixture(scope="module")
def env():
    return build_four_room_env(FourRoomConfig())


def test_four_room_sizes_and_validity(env):
    m = env.momdp
    assert m.n_states == len(env.cells) + 1
    assert m.n_actions == 4
    assert m.n_objectives == 3
    assert validate_momdp(m) == []
    assert m.p0[env.cell_index[FOUR_ROOM_START]] == 1.0


def test_deterministic_without_slip():
    env = build_four_room_env(FourRoomConfig(slip_prob=0.0))
    m = env.momdp
    assert np.all((m.transition > 0).sum(axis=2) == 1)
    s = env.cell_index[(1, 1)]
    assert m.transition[s, RIGHT, env.cell_index[(1, 2)]] == 1.0
    # moving into the border wall keeps the agent in place
    assert m.transition[s, UP, s] == 1.0
    assert np.all(m.reward[s] == 0.0)


def test_slip_spreads_uniformly(env):
    m = env.momdp
    s = env.cell_index[(2, 2)]
    row = m.transition[s, RIGHT]
    assert row[env.cell_index[(2, 3)]] == pytest.approx(0.9)
    for cell in [(2, 1), (1, 2), (3, 2)]:
        assert row[env.cell_index[cell]] == pytest.approx(0.1 / 3)


def test_goal_reward_is_entry_probability(env):
    m = env.momdp
    goal = FOUR_ROOM_GOALS_3[0]  # (9, 1): lower-left corner
    # from (8, 1) moving down enters the goal with prob 0.9; left slip hits a wall
    s = env.cell_index[(8, 1)]
    assert m.reward[s, DOWN, 0] == pytest.approx(0.9)
    assert m.reward[s, DOWN, 1:].sum() == 0.0
    g = env.cell_index[goal]
    assert np.all(m.transition[g, :, m.sink] == 1.0)
    assert np.all(m.reward[g] == 0.0)


@pytest.mark.parametrize("n_obj", [3, 8])
def test_at_most_one_goal_reward_per_step(n_obj):
    m = build_four_room(FourRoomConfig.with_objectives(n_obj))
    assert m.n_objectives == n_obj
    assert np.all(m.reward.sum(axis=2) <= 1.0 + 1e-12)
    assert validate_momdp(m) == []


def test_config_validation():
    with pytest.raises(ValueError):
        FourRoomConfig(start_cell=(0, 0)).validate()
    with pytest.raises(ValueError):
        FourRoomConfig(goal_cells=((9, 1), (9, 1))).validate()
    with pytest.raises(ValueError):
        FourRoomConfig(slip_prob=1.5).validate()
    with pytest.raises(ValueError):
        FourRoomConfig.with_objectives(5)


def test_unreachable_goal_is_reported(caplog):
    grid = np.asarray(FourRoomConfig().grid).copy()
    # seal the lower-right room
    grid[8, 5] = True
    grid[5, 7] = True
    with caplog.at_level("WARNING"):
        m = build_four_room(FourRoomConfig(grid=grid))
    assert "unreachable" in caplog.text
    assert validate_momdp(m) == []


def test_random_momdp_is_deterministic():
    a = build_random_momdp(RandomMOMDPConfig(seed=7))
    b = build_random_momdp(RandomMOMDPConfig(seed=7))
    assert a.to_json() == b.to_json()
    assert a.to_json() != build_random_momdp(RandomMOMDPConfig(seed=8)).to_json()


def test_random_momdp_structure():
    m = build_random_momdp(RandomMOMDPConfig(seed=3))
    assert m.n_states == 51 and m.n_actions == 4 and m.n_objectives == 3
    assert validate_momdp(m) == []
    base = m.transition[: m.sink]
    nonterminal = [s for s in range(m.sink) if s not in m.terminal_states]
    assert np.all((base[nonterminal] > 0).sum(axis=2) <= 4)
    assert m.p0[0] == 1.0


def test_random_goals_distinct_and_not_initial():
    for seed in range(100):
        m = build_random_momdp(RandomMOMDPConfig(seed=seed))
        goals = m.terminal_states
        assert len(set(goals)) == 3
        assert 0 not in goals


def test_random_config_validation():
    with pytest.raises(ValueError):
        build_random_momdp(RandomMOMDPConfig(n_states=4, n_branch=4))
    with pytest.raises(ValueError):
        build_random_momdp(RandomMOMDPConfig(dirichlet_alpha=(1.0, 1.0)))
