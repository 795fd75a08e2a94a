"""Discrete-time models the estimators run on.

Two model families share one driver interface: multi-asset geometric Brownian
motion with a discounted max-call payoff (the benchmark family), and small
enumerable Markov trees used as exact test fixtures.  A model exposes

    J           index of the final date (dates are 0..J)
    step_units  work units charged per path per simulated date
    init_states(n)                  states at date 0 for n paths
    payoff_batch(j, states)         payoff of each state at date j
    draw(seed, ns, cls, index, date, n, first_point)   per-date driver noise
    step_batch(j, states, draws)    advance states from date j-1 to date j

States are row-indexed numpy arrays so the engine can scatter and gather
paths freely; the streams module guarantees that path ``p`` sees the same
noise whether it is simulated alone or inside any batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import rng
from .rng import StreamKey


@dataclass(frozen=True, slots=True)
class GbmParams:
    """Market and contract parameters for the max-call benchmark.

    Assets are independent geometric Brownian motions under the pricing
    measure: drift r - delta, volatility sigma, all started at y0.  Exercise
    dates are the uniform grid t_j = j * T / (n_dates - 1), j = 0..n_dates-1,
    and the date-j payoff is exp(-r t_j) * max(max_d y_d - K, 0).
    """

    d: int
    r: float
    delta: float
    sigma: float
    K: float
    y0: float
    T: float
    n_dates: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n_dates < 2:
            raise ValueError("need at least two exercise dates")
        if not (self.T > 0 and self.K > 0 and self.y0 > 0):
            raise ValueError("T, K, y0 must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        for name in ("r", "delta", "sigma", "K", "y0", "T"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def J(self) -> int:
        return self.n_dates - 1

    @property
    def dt(self) -> float:
        return self.T / self.J

    @property
    def dates(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_dates)


@dataclass(frozen=True, slots=True)
class PathState:
    """A path frozen at one date: everything needed to continue it."""

    j: int
    assets: np.ndarray
    payoff: float


@dataclass(frozen=True, slots=True)
class Trajectory:
    """States and payoffs along dates j0..J (row k is date j0 + k)."""

    j0: int
    assets: np.ndarray  # (n_dates, d)
    payoffs: np.ndarray  # (n_dates,)

    def state(self, j: int) -> PathState:
        k = j - self.j0
        if not 0 <= k < len(self.payoffs):
            raise ValueError(f"date {j} outside trajectory range")
        return PathState(j=j, assets=self.assets[k].copy(), payoff=float(self.payoffs[k]))


@dataclass(frozen=True, slots=True)
class TrainingPaths:
    """A bundle of full paths used to fit regression stopping rules."""

    assets: np.ndarray  # (n, n_dates, d)
    payoffs: np.ndarray  # (n, n_dates)

    @property
    def n(self) -> int:
        return self.assets.shape[0]


def max_call_payoff(j: int, assets: np.ndarray, params: GbmParams) -> Union[float, np.ndarray]:
    """Discounted max-call payoff at date j; batched over leading axis."""
    assets = np.asarray(assets, dtype=float)
    if not np.all(np.isfinite(assets)):
        raise ValueError("non-finite asset values")
    disc = float(np.exp(-params.r * params.dates[j]))
    best = assets.max(axis=-1)
    val = disc * np.maximum(best - params.K, 0.0)
    return float(val) if val.ndim == 0 else val


def gbm_step(
    assets: np.ndarray, dt: float, params: GbmParams, normals: np.ndarray
) -> np.ndarray:
    """Exact GBM transition over a step of length dt, one normal per asset."""
    assets = np.asarray(assets, dtype=float)
    z = np.asarray(normals, dtype=float)
    if not (np.all(np.isfinite(assets)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite inputs to gbm_step")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    drift = (params.r - params.delta - 0.5 * params.sigma**2) * dt
    return assets * np.exp(drift + params.sigma * np.sqrt(dt) * z)


def simulate_full_path(params: GbmParams, stream: StreamKey) -> Trajectory:
    """Simulate one path over all dates under the given stream key."""
    J = params.J
    assets = np.empty((params.n_dates, params.d))
    payoffs = np.empty(params.n_dates)
    assets[0] = params.y0
    payoffs[0] = max_call_payoff(0, assets[0], params)
    for j in range(1, J + 1):
        z = stream.draw_normals(j, params.d)
        assets[j] = gbm_step(assets[j - 1], params.dt, params, z)
        payoffs[j] = max_call_payoff(j, assets[j], params)
    return Trajectory(j0=0, assets=assets, payoffs=payoffs)


def continue_path(state: PathState, params: GbmParams, stream: StreamKey) -> Trajectory:
    """Continue a frozen path to maturity.

    With replication 0 the continuation re-uses the path's own trunk stream,
    so it reproduces the tail of ``simulate_full_path`` for the same path
    index; replications r >= 1 give continuations that are conditionally
    independent given the state.
    """
    if not 0 <= state.j < params.J:
        raise ValueError("cannot continue from maturity or outside the grid")
    n_left = params.J - state.j
    assets = np.empty((n_left + 1, params.d))
    payoffs = np.empty(n_left + 1)
    assets[0] = np.asarray(state.assets, dtype=float)
    payoffs[0] = state.payoff
    for k, j in enumerate(range(state.j + 1, params.J + 1), start=1):
        z = stream.draw_normals(j, params.d)
        assets[k] = gbm_step(assets[k - 1], params.dt, params, z)
        payoffs[k] = max_call_payoff(j, assets[k], params)
    return Trajectory(j0=state.j, assets=assets, payoffs=payoffs)


def simulate_training_paths(
    params: GbmParams, n: int, seed: int, namespace: int = rng.NS_TRAINING
) -> TrainingPaths:
    """Simulate n full paths in one batch, by default in the training namespace.

    Path p here sees exactly the draws of ``simulate_full_path`` with
    StreamKey(seed, namespace, path=p).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    J = params.J
    assets = np.empty((n, params.n_dates, params.d))
    payoffs = np.empty((n, params.n_dates))
    assets[:, 0] = params.y0
    payoffs[:, 0] = max_call_payoff(0, assets[:, 0], params)
    for j in range(1, J + 1):
        z = rng.normals(seed, namespace, rng.TRUNK, 0, j, n, params.d)
        assets[:, j] = gbm_step(assets[:, j - 1], params.dt, params, z)
        payoffs[:, j] = max_call_payoff(j, assets[:, j], params)
    return TrainingPaths(assets=assets, payoffs=payoffs)


class GbmModel:
    """Driver adapter for the GBM max-call family."""

    def __init__(self, params: GbmParams):
        self.params = params
        self.J = params.J
        self.step_units = params.d
        self.draw_width = params.d

    def init_states(self, n: int) -> np.ndarray:
        return np.full((n, self.params.d), self.params.y0, dtype=float)

    def payoff_batch(self, j: int, states: np.ndarray) -> np.ndarray:
        return np.atleast_1d(max_call_payoff(j, states, self.params))

    def draw(
        self, seed: int, namespace: int, stream_class: int, index: int, date: int,
        n_points: int, first_point: int = 0,
    ) -> np.ndarray:
        return rng.normals(seed, namespace, stream_class, index, date, n_points, self.params.d, first_point)

    def step_batch(self, j: int, states: np.ndarray, draws: np.ndarray) -> np.ndarray:
        return gbm_step(states, self.params.dt, self.params, draws)

    def freeze_state(self, j: int, states: np.ndarray, row: int, payoff: float) -> PathState:
        return PathState(j=j, assets=states[row].copy(), payoff=payoff)

    def resume_states(self, state: PathState, n: int) -> np.ndarray:
        return np.tile(np.asarray(state.assets, dtype=float), (n, 1))


@dataclass(frozen=True, slots=True)
class TreeState:
    """A tree path frozen at one date."""

    j: int
    node: int
    payoff: float


class TreeModel:
    """A finite Markov tree with a payoff at every node.

    All leaves must sit at the same depth J so the payoff is defined at every
    date along every path.  Nodes are numbered in depth-first preorder; the
    human-readable label of a node is its path of child indices joined by
    '/', with the root labelled 'root'.
    """

    def __init__(self, root: dict):
        payoffs: list[float] = []
        depths: list[int] = []
        labels: list[str] = []
        child_ids: list[list[int]] = []
        child_cum: list[np.ndarray] = []

        def add(node: dict, depth: int, label: str) -> int:
            nid = len(payoffs)
            payoffs.append(float(node["payoff"]))
            depths.append(depth)
            labels.append(label)
            child_ids.append([])
            child_cum.append(np.empty(0))
            children = node.get("children", [])
            if children:
                probs = np.array([float(c["prob"]) for c in children])
                if np.any(probs < 0):
                    raise ValueError(f"negative branch probability at node '{label}'")
                if abs(probs.sum() - 1.0) > 1e-12:
                    raise ValueError(f"branch probabilities at node '{label}' sum to {probs.sum()!r}")
                ids = []
                for k, c in enumerate(children):
                    sub = f"{label}/{k}" if label != "root" else str(k)
                    ids.append(add(c, depth + 1, sub))
                child_ids[nid] = ids
                child_cum[nid] = np.cumsum(probs)
            return nid

        add(root, 0, "root")

        self.n_nodes = len(payoffs)
        self.payoffs = np.array(payoffs)
        self.depths = np.array(depths, dtype=np.int64)
        self.labels = labels
        self.label_to_id = {lab: i for i, lab in enumerate(labels)}
        self._child_ids = child_ids
        self._child_cum = child_cum

        leaf_depths = {int(depths[i]) for i in range(self.n_nodes) if not child_ids[i]}
        if len(leaf_depths) != 1:
            raise ValueError(f"all leaves must share one depth, got {sorted(leaf_depths)}")
        self.J = leaf_depths.pop()
        if self.J < 1:
            raise ValueError("tree must have at least one transition")
        self.step_units = 1
        self.draw_width = 1

        # Dense child tables padded to the maximum branching factor let the
        # engine advance all paths with one searchsorted-style comparison.
        maxb = max((len(c) for c in child_ids), default=0)
        self._cum_table = np.ones((self.n_nodes, maxb))
        self._id_table = np.zeros((self.n_nodes, maxb), dtype=np.int64)
        for i, (ids, cum) in enumerate(zip(child_ids, child_cum)):
            if ids:
                self._cum_table[i, : len(ids)] = cum
                self._cum_table[i, len(ids) - 1] = 1.0 + 1e-9  # guard the top edge
                self._id_table[i, : len(ids)] = ids
                self._id_table[i, len(ids):] = ids[-1]

    def children(self, node: int) -> list[int]:
        return list(self._child_ids[node])

    def branch_probs(self, node: int) -> np.ndarray:
        cum = self._child_cum[node]
        return np.diff(cum, prepend=0.0)

    def init_states(self, n: int) -> np.ndarray:
        return np.zeros(n, dtype=np.int64)

    def payoff_batch(self, j: int, states: np.ndarray) -> np.ndarray:
        return self.payoffs[states]

    def draw(
        self, seed: int, namespace: int, stream_class: int, index: int, date: int,
        n_points: int, first_point: int = 0,
    ) -> np.ndarray:
        return rng.uniforms(seed, namespace, stream_class, index, date, n_points, 1, first_point)

    def step_batch(self, j: int, states: np.ndarray, draws: np.ndarray) -> np.ndarray:
        u = np.asarray(draws).reshape(-1, 1)
        pick = (u > self._cum_table[states]).sum(axis=1)
        return self._id_table[states, pick]

    def freeze_state(self, j: int, states: np.ndarray, row: int, payoff: float) -> TreeState:
        return TreeState(j=j, node=int(states[row]), payoff=payoff)

    def resume_states(self, state: TreeState, n: int) -> np.ndarray:
        return np.full(n, state.node, dtype=np.int64)


def load_tree(source: Union[str, dict]) -> TreeModel:
    """Build a TreeModel from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        spec = source
    else:
        with open(source) as fh:
            spec = json.load(fh)
    root = spec.get("root", spec)
    return TreeModel(root)


def bundled_tree(name: str) -> TreeModel:
    """Load one of the tree fixtures shipped with the package.

    Available: 'tree_1period', 'tree_2period'.
    """
    from importlib import resources

    ref = resources.files("nccmc").joinpath("data", f"{name}.json")
    with resources.as_file(ref) as path:
        return load_tree(str(path))
