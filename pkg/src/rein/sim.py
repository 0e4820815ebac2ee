"""Interacting-particle simulators: springs, charged particles and multi-ball.

States are float64 arrays laid out ``[..., object, (x, y, vx, vy)]``.  All
particles have unit mass and live in the box ``[-box, box]^2`` with elastic
walls.  Integration is velocity Verlet (leapfrog).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

STATE_DIM = 4


class SystemKind(str, enum.Enum):
    SPRINGS = "springs"
    CHARGED = "charged"
    MULTIBALL = "multiball"

    @property
    def n_edge_types(self) -> int:
        return 3 if self is SystemKind.MULTIBALL else 2


# MultiBall edge categories.
NONE, ROD, SPRING = 0, 1, 2


class NumericalInstabilityError(FloatingPointError):
    def __init__(self, object_index: int, episode: int | None = None):
        self.object_index = object_index
        self.episode = episode
        where = f"object {object_index}"
        if episode is not None:
            where += f" (episode {episode} of batch)"
        super().__init__(f"non-finite state for {where}")


@dataclass
class SimParams:
    dt: float = 0.001
    box: float = 5.0
    spring_k: float = 0.1
    edge_prob: float = 0.5
    charge_strength: float = 1.0
    softening: float = 0.1
    rod_factor: float = 100.0
    # multi-ball continuous parameter ranges
    stiffness_range: tuple[float, float] = (0.05, 0.15)
    length_range: tuple[float, float] = (0.5, 2.0)
    init_pos_frac: float = 0.5
    init_vel_scale: float = 0.5


@dataclass
class RelationGraph:
    """Edge-typed relation graph.

    ``edge_param`` holds the spring constant (springs), the pairwise charge
    product (charged) or the rod / rest length (multi-ball).  Multi-ball
    stiffness lives in ``edge_stiffness``.
    """

    edge_type: np.ndarray
    edge_param: np.ndarray
    symmetric: bool = True
    edge_stiffness: np.ndarray | None = None

    @property
    def n_objects(self) -> int:
        return self.edge_type.shape[0]

    def validate(self, kind: SystemKind) -> None:
        n = self.n_objects
        if self.edge_type.shape != (n, n) or self.edge_param.shape != (n, n):
            raise ValueError("edge matrices must be square n x n")
        if np.any(np.diag(self.edge_type) != 0) or np.any(np.diag(self.edge_param) != 0):
            raise ValueError("relation graph must have a zero diagonal")
        if self.edge_type.min(initial=0) < 0 or self.edge_type.max(initial=0) >= kind.n_edge_types:
            raise ValueError(f"edge types out of range for {kind.value}")
        if self.symmetric and not (
            np.array_equal(self.edge_type, self.edge_type.T)
            and np.array_equal(self.edge_param, self.edge_param.T)
        ):
            raise ValueError("graph flagged symmetric but matrices are not")


@dataclass
class Trajectory:
    states: np.ndarray  # (T, n, 4)
    dt_effective: float


@dataclass
class Episode:
    trajectory: Trajectory
    graph: RelationGraph
    system: SystemKind
    seed: int
    meta: dict = field(default_factory=dict)


def _upper_pairs(n: int):
    return np.triu_indices(n, k=1)


def sample_relation_graph(kind: SystemKind, n: int, rng: np.random.Generator,
                          params: SimParams | None = None) -> RelationGraph:
    if n < 1:
        raise ValueError(f"n_objects must be >= 1, got {n}")
    p = params or SimParams()
    kind = SystemKind(kind)
    etype = np.zeros((n, n), dtype=np.uint8)
    eparam = np.zeros((n, n), dtype=np.float64)
    stiff = None
    iu = _upper_pairs(n)
    n_pairs = len(iu[0])

    if kind is SystemKind.SPRINGS:
        connected = rng.random(n_pairs) < p.edge_prob
        etype[iu] = connected
        eparam[iu] = np.where(connected, p.spring_k, 0.0)
    elif kind is SystemKind.CHARGED:
        charges = rng.choice(np.array([-1.0, 1.0]), size=n)
        prod = np.outer(charges, charges)
        eparam[iu] = prod[iu]
        # type 1 = like charges (repelling), type 0 = opposite charges
        etype[iu] = prod[iu] > 0
    else:
        cats = rng.integers(0, 3, size=n_pairs)
        lengths = rng.uniform(*p.length_range, size=n_pairs)
        k = rng.uniform(*p.stiffness_range, size=n_pairs)
        stiff = np.zeros((n, n))
        etype[iu] = cats
        eparam[iu] = np.where(cats != NONE, lengths, 0.0)
        stiff[iu] = np.where(cats != NONE, k, 0.0)
        stiff = stiff + stiff.T

    etype = etype + etype.T
    eparam = eparam + eparam.T
    return RelationGraph(etype, eparam, symmetric=True, edge_stiffness=stiff)


def _pair_terms(kind: SystemKind, graph: RelationGraph, p: SimParams):
    """Per-pair constants broadcastable against (..., n, n)."""
    if kind is SystemKind.SPRINGS:
        return {"k": np.where(graph.edge_type > 0, graph.edge_param, 0.0)}
    if kind is SystemKind.CHARGED:
        return {"q": p.charge_strength * graph.edge_param}
    stiff = graph.edge_stiffness
    if stiff is None:
        raise ValueError("multi-ball graph requires edge_stiffness")
    k = np.where(graph.edge_type == ROD, p.rod_factor * stiff,
                 np.where(graph.edge_type == SPRING, stiff, 0.0))
    return {"k": k, "length": graph.edge_param}


def _forces(kind: SystemKind, terms: dict, pos: np.ndarray, p: SimParams) -> np.ndarray:
    # diff[..., i, j, :] = x_i - x_j; exact antisymmetry keeps momentum
    diff = pos[..., :, None, :] - pos[..., None, :, :]
    if kind is SystemKind.SPRINGS:
        return -np.sum(terms["k"][..., None] * diff, axis=-2)
    r2 = np.sum(diff * diff, axis=-1)
    if kind is SystemKind.CHARGED:
        coef = terms["q"] / (r2 + p.softening ** 2) ** 1.5
        return np.sum(coef[..., None] * diff, axis=-2)
    r = np.sqrt(r2)
    safe = np.where(r > 0, r, 1.0)
    coef = np.where(r > 0, -terms["k"] * (r - terms["length"]) / safe, 0.0)
    return np.sum(coef[..., None] * diff, axis=-2)


def _reflect(pos: np.ndarray, vel: np.ndarray, box: float) -> None:
    over = pos > box
    pos[over] = 2 * box - pos[over]
    vel[over] = -vel[over]
    under = pos < -box
    pos[under] = -2 * box - pos[under]
    vel[under] = -vel[under]


def _check_finite(state: np.ndarray) -> None:
    bad = ~np.isfinite(state).all(axis=-1)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise NumericalInstabilityError(int(idx[-1]), int(idx[0]) if len(idx) > 1 else None)


def step(kind: SystemKind, graph: RelationGraph, state: np.ndarray, dt: float,
         params: SimParams | None = None) -> np.ndarray:
    """Advance ``state`` (n, 4) by one leapfrog step of size ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = params or SimParams()
    kind = SystemKind(kind)
    _check_finite(state)
    terms = _pair_terms(kind, graph, p)
    pos = state[..., :2].copy()
    vel = state[..., 2:].copy()
    vel += 0.5 * dt * _forces(kind, terms, pos, p)
    pos += dt * vel
    _reflect(pos, vel, p.box)
    vel += 0.5 * dt * _forces(kind, terms, pos, p)
    out = np.concatenate([pos, vel], axis=-1)
    _check_finite(out)
    return out


def _stack_terms(kind: SystemKind, graphs: list[RelationGraph], p: SimParams) -> dict:
    per = [_pair_terms(kind, g, p) for g in graphs]
    return {key: np.stack([t[key] for t in per]) for key in per[0]}


def simulate_batch(kind: SystemKind, graphs: list[RelationGraph], initial: np.ndarray,
                   raw_steps: int, subsample: int, params: SimParams | None = None) -> np.ndarray:
    """Integrate a batch of independent episodes; returns (B, T, n, 4).

    Frames are stored after every ``subsample`` raw steps, so
    ``T = raw_steps // subsample``.
    """
    if not raw_steps >= subsample >= 1:
        raise ValueError("need raw_steps >= subsample >= 1")
    p = params or SimParams()
    kind = SystemKind(kind)
    dt = p.dt
    terms = _stack_terms(kind, graphs, p)
    pos = np.array(initial[..., :2], dtype=np.float64)
    vel = np.array(initial[..., 2:], dtype=np.float64)
    n_frames = raw_steps // subsample
    out = np.empty((len(graphs), n_frames, pos.shape[-2], STATE_DIM))
    acc = _forces(kind, terms, pos, p)
    for i in range(n_frames * subsample):
        vel += 0.5 * dt * acc
        pos += dt * vel
        _reflect(pos, vel, p.box)
        acc = _forces(kind, terms, pos, p)
        vel += 0.5 * dt * acc
        if (i + 1) % subsample == 0:
            frame = (i + 1) // subsample - 1
            out[:, frame, :, :2] = pos
            out[:, frame, :, 2:] = vel
            _check_finite(out[:, frame])
    return out


def simulate(kind: SystemKind, graph: RelationGraph, initial: np.ndarray, raw_steps: int,
             subsample: int, params: SimParams | None = None) -> Trajectory:
    p = params or SimParams()
    states = simulate_batch(kind, [graph], initial[None], raw_steps, subsample, p)[0]
    return Trajectory(states, p.dt * subsample)


def total_energy(kind: SystemKind, graph: RelationGraph, state: np.ndarray,
                 params: SimParams | None = None) -> float:
    p = params or SimParams()
    kind = SystemKind(kind)
    pos, vel = state[:, :2], state[:, 2:]
    kinetic = 0.5 * float(np.sum(vel * vel))
    terms = _pair_terms(kind, graph, p)
    iu = _upper_pairs(graph.n_objects)
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)[iu]
    if kind is SystemKind.SPRINGS:
        potential = 0.5 * np.sum(terms["k"][iu] * r2)
    elif kind is SystemKind.CHARGED:
        potential = np.sum(terms["q"][iu] / np.sqrt(r2 + p.softening ** 2))
    else:
        stretch = np.sqrt(r2) - terms["length"][iu]
        potential = 0.5 * np.sum(terms["k"][iu] * stretch ** 2)
    return kinetic + float(potential)


def sample_initial_state(n: int, rng: np.random.Generator, params: SimParams | None = None) -> np.ndarray:
    p = params or SimParams()
    half = p.box * p.init_pos_frac
    pos = rng.uniform(-half, half, size=(n, 2))
    vel = rng.standard_normal((n, 2)) * p.init_vel_scale
    return np.concatenate([pos, vel], axis=-1)


def episode_seed(seed: int, index: int, attempt: int = 0) -> int:
    """Independent 63-bit seed for episode ``index`` of a dataset."""
    ss = np.random.SeedSequence([seed, index, attempt])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generate_episodes(kind: SystemKind, n_objects: int, n_episodes: int, n_frames: int,
                      subsample: int, seed: int, params: SimParams | None = None,
                      chunk: int = 256) -> list[Episode]:
    """Generate ``n_episodes`` episodes; episode i draws from its own stream."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    p = params or SimParams()
    kind = SystemKind(kind)
    raw_steps = n_frames * subsample
    episodes: list[Episode] = []
    resampled = 0
    for start in range(0, n_episodes, chunk):
        idx = list(range(start, min(start + chunk, n_episodes)))
        attempts = {i: 0 for i in idx}
        pending = idx
        done: dict[int, Episode] = {}
        while pending:
            seeds, graphs, inits = [], [], []
            for i in pending:
                s = episode_seed(seed, i, attempts[i])
                rng = np.random.default_rng(s)
                seeds.append(s)
                graphs.append(sample_relation_graph(kind, n_objects, rng, p))
                inits.append(sample_initial_state(n_objects, rng, p))
            with np.errstate(all="ignore"):
                try:
                    states = simulate_batch(kind, graphs, np.stack(inits), raw_steps, subsample, p)
                    ok = np.ones(len(pending), dtype=bool)
                except NumericalInstabilityError:
                    states, ok = _simulate_each(kind, graphs, inits, raw_steps, subsample, p)
            retry = []
            for j, i in enumerate(pending):
                if ok[j]:
                    done[i] = Episode(Trajectory(states[j], p.dt * subsample), graphs[j], kind, seeds[j])
                else:
                    attempts[i] += 1
                    resampled += 1
                    retry.append(i)
            pending = retry
        episodes.extend(done[i] for i in idx)
    if resampled:
        log.info("resampled %d unstable episodes", resampled)
    return episodes


def _simulate_each(kind, graphs, inits, raw_steps, subsample, p):
    n_frames = raw_steps // subsample
    states = np.zeros((len(graphs), n_frames, inits[0].shape[0], STATE_DIM))
    ok = np.zeros(len(graphs), dtype=bool)
    for j, (g, x0) in enumerate(zip(graphs, inits)):
        try:
            states[j] = simulate_batch(kind, [g], x0[None], raw_steps, subsample, p)[0]
            ok[j] = True
        except NumericalInstabilityError:
            pass
    return states, ok
