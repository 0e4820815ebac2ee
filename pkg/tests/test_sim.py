import math

import numpy as np
import pytest

from rein.sim import (NONE, ROD, SPRING, NumericalInstabilityError, RelationGraph, SimParams, SystemKind,
                      generate_episodes, sample_initial_state, sample_relation_graph, simulate, simulate_batch,
                      step, total_energy)

WIDE = SimParams(box=1e6)  # walls never reached


def spring_pair(k=0.1):
    etype = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    return RelationGraph(etype, etype * k)


def reference_energy(kind, graph, state, p):
    """Pair-by-pair loop, written independently of the vectorised code."""
    n = len(state)
    e = 0.0
    for i in range(n):
        e += 0.5 * (state[i, 2] ** 2 + state[i, 3] ** 2)
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = state[i, 0] - state[j, 0], state[i, 1] - state[j, 1]
            r = math.hypot(dx, dy)
            if kind is SystemKind.SPRINGS and graph.edge_type[i, j]:
                e += 0.5 * graph.edge_param[i, j] * r * r
            elif kind is SystemKind.CHARGED:
                e += p.charge_strength * graph.edge_param[i, j] / math.sqrt(r * r + p.softening ** 2)
            elif kind is SystemKind.MULTIBALL and graph.edge_type[i, j] != NONE:
                k = graph.edge_stiffness[i, j] * (p.rod_factor if graph.edge_type[i, j] == ROD else 1.0)
                e += 0.5 * k * (r - graph.edge_param[i, j]) ** 2
    return e


def test_free_motion_is_exact():
    g = RelationGraph(np.zeros((3, 3), np.uint8), np.zeros((3, 3)))
    s = np.array([[0.0, 0.0, 1.0, -2.0], [1.0, 1.0, 0.5, 0.0], [-1.0, 2.0, 0.0, 0.25]])
    out = step(SystemKind.SPRINGS, g, s, 0.01)
    np.testing.assert_array_equal(out[:, 2:], s[:, 2:])
    np.testing.assert_allclose(out[:, :2], s[:, :2] + 0.01 * s[:, 2:], rtol=0, atol=1e-15)


def test_two_body_spring_period():
    k = 0.1
    init = np.array([[[-1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]])
    expected = 2 * math.pi / math.sqrt(2 * k)
    raw = int(3.5 * expected / WIDE.dt)
    traj = simulate_batch(SystemKind.SPRINGS, [spring_pair(k)], init, raw, 1, WIDE)[0]
    sep = traj[:, 1, 0] - traj[:, 0, 0]
    t = (np.arange(len(sep)) + 1) * WIDE.dt
    up = np.where((sep[:-1] < 0) & (sep[1:] >= 0))[0]
    crossings = t[up] - sep[up] / (sep[up + 1] - sep[up]) * WIDE.dt
    period = np.diff(crossings).mean()
    assert abs(period - expected) / expected < 0.01


def test_energy_drift_small_without_walls():
    rng = np.random.default_rng(3)
    g = sample_relation_graph(SystemKind.SPRINGS, 5, rng)
    s = sample_initial_state(5, rng)
    e0 = total_energy(SystemKind.SPRINGS, g, s)
    traj = simulate_batch(SystemKind.SPRINGS, [g], s[None], 10_000, 10_000, WIDE)[0]
    e1 = total_energy(SystemKind.SPRINGS, g, traj[-1])
    assert abs(e1 - e0) / abs(e0) <= 1e-4


@pytest.mark.parametrize("kind", list(SystemKind))
def test_momentum_conserved(kind):
    rng = np.random.default_rng(11)
    g = sample_relation_graph(kind, 5, rng)
    s = sample_initial_state(5, rng)
    traj = simulate_batch(kind, [g], s[None], 1000, 1000, WIDE)[0]
    p0, p1 = s[:, 2:].sum(axis=0), traj[-1, :, 2:].sum(axis=0)
    scale = np.abs(s[:, 2:]).sum()
    assert np.abs(p1 - p0).max() / scale <= 1e-8


def test_frame_count_and_dt():
    rng = np.random.default_rng(0)
    g = sample_relation_graph(SystemKind.SPRINGS, 4, rng)
    tr = simulate(SystemKind.SPRINGS, g, sample_initial_state(4, rng), 5000, 100)
    assert tr.states.shape == (50, 4, 4)
    assert tr.dt_effective == pytest.approx(0.1)


def test_simulation_deterministic():
    rng = np.random.default_rng(5)
    g = sample_relation_graph(SystemKind.CHARGED, 5, rng)
    s = sample_initial_state(5, rng)
    a = simulate(SystemKind.CHARGED, g, s, 2000, 100).states
    b = simulate(SystemKind.CHARGED, g, s, 2000, 100).states
    assert a.tobytes() == b.tobytes()


def test_charged_finite_over_many_seeds():
    graphs, inits = [], []
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        graphs.append(sample_relation_graph(SystemKind.CHARGED, 5, rng))
        inits.append(sample_initial_state(5, rng))
    traj = simulate_batch(SystemKind.CHARGED, graphs, np.stack(inits), 4900, 100)
    assert np.isfinite(traj).all()


def test_instability_names_object():
    g = spring_pair(1.0)
    bad = np.array([[0.0, 0.0, np.nan, 0.0], [1.0, 0.0, 0.0, 0.0]])
    with pytest.raises(NumericalInstabilityError) as err:
        step(SystemKind.SPRINGS, g, bad, 0.01)
    assert err.value.object_index == 0


@pytest.mark.parametrize("kind", list(SystemKind))
def test_energy_matches_loop_oracle(kind):
    p = SimParams()
    rng = np.random.default_rng(21)
    for _ in range(100):
        g = sample_relation_graph(kind, 5, rng, p)
        s = rng.normal(size=(5, 4)) * 2
        assert total_energy(kind, g, s, p) == pytest.approx(reference_energy(kind, g, s, p), rel=1e-12, abs=1e-12)


def test_energy_trivial_cases():
    g = RelationGraph(np.zeros((2, 2), np.uint8), np.zeros((2, 2)))
    assert total_energy(SystemKind.SPRINGS, g, np.zeros((2, 4))) == 0.0
    single = RelationGraph(np.zeros((1, 1), np.uint8), np.zeros((1, 1)))
    assert total_energy(SystemKind.SPRINGS, single, np.array([[0.0, 0.0, 2.0, 0.0]])) == 2.0


def test_multiball_types_uniform():
    rng = np.random.default_rng(1)
    iu = np.triu_indices(5, k=1)
    counts = np.zeros(3)
    for _ in range(10_000):
        g = sample_relation_graph(SystemKind.MULTIBALL, 5, rng)
        counts += np.bincount(g.edge_type[iu], minlength=3)
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 3) <= 0.03), freq


def test_springs_edge_probability():
    rng = np.random.default_rng(2)
    iu = np.triu_indices(5, k=1)
    frac = np.mean([sample_relation_graph(SystemKind.SPRINGS, 5, rng).edge_type[iu].mean() for _ in range(2000)])
    assert abs(frac - 0.5) < 0.02


@pytest.mark.parametrize("kind", list(SystemKind))
def test_graphs_are_valid_and_symmetric(kind):
    rng = np.random.default_rng(4)
    for _ in range(50):
        g = sample_relation_graph(kind, 6, rng)
        g.validate(kind)
        assert np.array_equal(g.edge_type, g.edge_type.T)


def test_multiball_parameters_in_range():
    p = SimParams()
    g = sample_relation_graph(SystemKind.MULTIBALL, 8, np.random.default_rng(9), p)
    linked = g.edge_type != NONE
    assert np.all((g.edge_param[linked] >= p.length_range[0]) & (g.edge_param[linked] <= p.length_range[1]))
    assert np.all(g.edge_stiffness[~linked] == 0)
    assert set(np.unique(g.edge_type)) <= {NONE, ROD, SPRING}


def test_charged_stores_charge_products():
    g = sample_relation_graph(SystemKind.CHARGED, 6, np.random.default_rng(8))
    off = ~np.eye(6, dtype=bool)
    assert set(np.unique(g.edge_param[off])) <= {-1.0, 1.0}
    np.testing.assert_array_equal(g.edge_type[off] == 1, g.edge_param[off] > 0)


def test_single_object_graph_and_bad_n():
    g = sample_relation_graph(SystemKind.SPRINGS, 1, np.random.default_rng(0))
    assert g.edge_type.shape == (1, 1) and g.edge_type.sum() == 0 and g.edge_param.sum() == 0
    with pytest.raises(ValueError):
        sample_relation_graph(SystemKind.SPRINGS, 0, np.random.default_rng(0))


def test_same_seed_same_graph():
    a = sample_relation_graph(SystemKind.SPRINGS, 5, np.random.default_rng(7))
    b = sample_relation_graph(SystemKind.SPRINGS, 5, np.random.default_rng(7))
    assert a.edge_type.tobytes() == b.edge_type.tobytes()
    assert a.edge_param.tobytes() == b.edge_param.tobytes()


def test_walls_keep_particles_inside():
    p = SimParams(box=1.0)
    g = RelationGraph(np.zeros((1, 1), np.uint8), np.zeros((1, 1)))
    traj = simulate_batch(SystemKind.SPRINGS, [g], np.array([[[0.0, 0.0, 3.0, -2.0]]]), 5000, 10, p)[0]
    assert np.abs(traj[..., :2]).max() <= 1.0
    np.testing.assert_allclose(np.abs(traj[..., 2:]), [[[3.0, 2.0]]] * len(traj))


def test_generate_episodes_independent_of_chunking():
    a = generate_episodes(SystemKind.SPRINGS, 3, 7, 5, 10, seed=3, chunk=2)
    b = generate_episodes(SystemKind.SPRINGS, 3, 7, 5, 10, seed=3, chunk=256)
    assert [e.seed for e in a] == [e.seed for e in b]
    for x, y in zip(a, b):
        assert x.trajectory.states.tobytes() == y.trajectory.states.tobytes()
    c = generate_episodes(SystemKind.SPRINGS, 3, 3, 5, 10, seed=3)
    assert c[0].trajectory.states.tobytes() == a[0].trajectory.states.tobytes()
