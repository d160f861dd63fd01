import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from rmpnav.geometry import point_segment_distances
from rmpnav.planner import astar
from rmpnav.world import EpisodeSetup, collision
from rmpnav.worldgen import generate_world, sample_scenario

SETUP = EpisodeSetup()


def test_same_seed_same_world():
    a, b = generate_world(42), generate_world(42)
    assert np.array_equal(a.segments, b.segments) and a.bounds == b.bounds
    assert not np.array_equal(generate_world(43).segments[:4], a.segments[:4]) or a.bounds != generate_world(43).bounds


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_sampled_scenarios_are_feasible(seed):
    env = generate_world(seed)
    scn = sample_scenario(env, SETUP, np.random.default_rng(seed), seed=seed)
    if scn is None:
        return
    assert not collision(env, scn.start, SETUP.geometry)
    assert point_segment_distances(scn.start.position[None], env.segments).min() >= 1.0
    assert np.linalg.norm(scn.goal - scn.start.position) >= 2.5
    grid = SETUP.grid_for(env)
    assert astar(grid, grid.world_to_cell(scn.start.position), grid.world_to_cell(scn.goal)) is not None
    x0, y0, x1, y1 = env.bounds
    assert x0 <= scn.goal[0] <= x1 and y0 <= scn.goal[1] <= y1
