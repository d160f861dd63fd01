import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmpnav.vehicle import Command, VehicleGeometry, VehicleParams, VehicleState
from rmpnav.world import (EpisodeSetup, Environment, LaserScan, Outcome, Scenario, ScenarioError, SimParams,
                          collision, raycast, scan, scan_points_on_walls, scan_to_obstacle_points,
                          simulate_episode)
from rmpnav.worldgen import generate_world

GEOM = VehicleGeometry.from_params(VehicleParams())


def test_raycast_examples():
    env = Environment.box(-10, -10, 10, 10, extra=[[[2, -1], [2, 1]]])
    assert raycast(env, [0, 0], 0.0, 5.0) == pytest.approx(2.0)
    assert raycast(Environment.box(-10, -10, 10, 10), [0, 0], 0.3, 5.0) == 5.0
    line = Environment.box(-10, -10, 10, 10, extra=[[[1, 0], [3, 0]]])
    assert raycast(line, [0, 0], 0.0, 5.0) == pytest.approx(1.0)


def test_scan_examples():
    big = Environment.box(-50, -50, 50, 50)
    sc = scan(big, VehicleState(), 240, 5.0)
    assert np.all(sc.ranges == 5.0)
    assert len(sc.angles) == 240 and sc.angles[0] == pytest.approx(-math.radians(120))
    room = Environment.box(-2, -2, 2, 2)
    sc = scan(room, VehicleState(), 241, 5.0)
    np.testing.assert_allclose(sc.ranges, sc.ranges[::-1], atol=1e-9)
    assert sc.ranges[120] == pytest.approx(2.0)
    mounted = scan(room, VehicleState(), 241, 5.0, mount=(0.2, 0.0))
    assert mounted.ranges[120] == pytest.approx(1.8)


def test_scan_to_obstacle_points_examples():
    assert scan_to_obstacle_points(LaserScan(np.zeros(3), np.full(3, 5.0), 5.0), VehicleState()).shape == (0, 2)
    pts = scan_to_obstacle_points(LaserScan(np.array([0.0]), np.array([1.0]), 5.0), VehicleState())
    np.testing.assert_allclose(pts, [[1, 0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi))
def test_scan_points_lie_on_walls(seed, theta):
    env = generate_world(seed)
    x0, y0, x1, y1 = env.bounds
    state = VehicleState((x0 + x1) / 2, (y0 + y1) / 2, theta)
    sc = scan(env, state, 240, 5.0, GEOM.head.local)
    pts = scan_to_obstacle_points(sc, state)
    assert np.all(scan_points_on_walls(env, pts) < 1e-9)


def test_collision_examples():
    open_env = Environment.box(-5, -5, 5, 5)
    assert not collision(open_env, VehicleState(), GEOM)
    through = Environment.box(-5, -5, 5, 5, extra=[[[-1, 0], [1, 0]]])
    assert collision(through, VehicleState(), GEOM)
    tangent = Environment.box(-5, -5, 5, 5, extra=[[[0.2, -1], [0.2, 1]]])
    assert collision(tangent, VehicleState(), GEOM)
    inside = Environment.box(-5, -5, 5, 5, extra=[[[0.0, 0.0], [0.05, 0.05]]])
    assert collision(inside, VehicleState(), GEOM)


def _drive(cmd):
    return lambda state, sc, wp: cmd


def test_simulate_trivial_outcomes():
    env = Environment.box(-5, -5, 5, 5, extra=[[[2, -1], [2, 1]]])
    at_goal = simulate_episode(Scenario(env, VehicleState(), np.array([0.2, 0.0])), _drive(Command()))
    assert at_goal.outcome == Outcome.REACHED and at_goal.duration == 0.0
    in_wall = simulate_episode(Scenario(env, VehicleState(2.0, 0.0), np.array([-3.0, 0.0])), _drive(Command()))
    assert in_wall.outcome == Outcome.COLLISION and in_wall.duration == 0.0
    parked = simulate_episode(Scenario(env, VehicleState(), np.array([-3.0, 0.0])), _drive(Command()))
    assert parked.outcome == Outcome.STUCK
    assert parked.duration == pytest.approx(SimParams().stall_window + SimParams().dt, abs=0.05)
    crash = simulate_episode(Scenario(env, VehicleState(), np.array([4.0, 3.0])), _drive(Command(4.0, 0.0)))
    assert crash.outcome == Outcome.COLLISION


def test_trajectory_invariants_and_determinism():
    env = generate_world(3)
    from rmpnav.policies import ExpertController
    from rmpnav.worldgen import sample_scenario
    setup = EpisodeSetup()
    scn = sample_scenario(env, setup, np.random.default_rng(5), seed=5)
    a = simulate_episode(scn, ExpertController(), setup)
    b = simulate_episode(scn, ExpertController(), setup)
    assert a.to_jsonl() == b.to_jsonl()
    ts = [t for t, _, _ in a.samples]
    assert all(t1 > t0 for t0, t1 in zip(ts, ts[1:]))
    assert len(a.samples) <= setup.sim.max_steps + 1
    if a.outcome == Outcome.REACHED:
        assert np.linalg.norm(a.final_state.position - scn.goal) <= setup.sim.goal_radius
    lines = a.to_jsonl().splitlines()
    assert json.loads(lines[0])["outcome"] == a.outcome.value
    assert len(lines) == len(a.samples) + 1


def test_step_budget_terminates():
    env = Environment.box(-50, -50, 50, 50)
    setup = EpisodeSetup(sim=SimParams(max_steps=10))
    tr = simulate_episode(Scenario(env, VehicleState(), np.array([40.0, 0.0])), _drive(Command(1.0, 0.0)), setup)
    assert tr.outcome == Outcome.STUCK and len(tr.samples) == 11


def test_scenario_round_trip_and_errors():
    env = Environment.box(0, 0, 4, 3)
    scn = Scenario(env, VehicleState(1, 1, 0.5), np.array([3.0, 2.0]), seed=9, name="x")
    again = Scenario.from_dict(json.loads(scn.dumps()))
    assert again.dumps() == scn.dumps()
    bad = scn.to_dict()
    bad["goal"] = [9.0, 9.0]
    with pytest.raises(ScenarioError, match="goal"):
        Scenario.from_dict(bad)
    del bad["goal"]
    with pytest.raises(ScenarioError, match="goal: missing"):
        Scenario.from_dict(bad)
    with pytest.raises(ScenarioError, match="segments"):
        Environment(np.zeros((0, 2, 2)), (0, 0, 1, 1))
    with pytest.raises(ScenarioError, match="outside bounds"):
        Environment(np.array([[[0, 0], [5, 0]]]), (0, 0, 1, 1))
