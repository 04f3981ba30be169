"""Graphons: evaluation, block discretization, edge sampling and distances.

A graphon is a symmetric kernel ``W: [0, 1]^2 -> [0, 1]``.  All kinds evaluate
vectorised on numpy arrays through :meth:`Graphon.kernel`, and the public
:func:`evaluate` adds domain checking.

Conventions used throughout the package:

* block anchors are ``alpha_k = k / M`` for ``k = 1..M``;
* agent ``i`` (1-based) of an ``N``-agent population sits at ``i / N``;
* a step graphon with ``K`` blocks is constant on ``((k-1)/K, k/K]``, so its
  value at the anchor ``k/K`` is the ``k``-th row/column of its matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .seeding import SeedLike, make_rng

COUPLINGS = ("C1", "C2")


class DomainError(ValueError):
    """Raised when a graphon is evaluated outside the unit square."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def anchor_grid(m: int) -> np.ndarray:
    """The ``m`` block anchors ``k/m``, ``k = 1..m``."""
    return np.arange(1, m + 1) / m


def _default_decay(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = x < 0.5
    xi = x[inside]
    out[inside] = np.exp(-xi / (0.5 - xi))
    return out


class Graphon:
    """Base class; subclasses implement the vectorised :meth:`kernel`."""

    kind = "graphon"

    def kernel(self, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, alpha, beta):
        return evaluate(self, alpha, beta)

    def block_structure(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        """Class labels and class-to-class weights if ``W`` is piecewise
        constant on ``positions``; ``None`` otherwise."""
        return None

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ErdosRenyi(Graphon):
    p: float
    kind = "erdos_renyi"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    def kernel(self, alpha, beta):
        shape = np.broadcast(np.asarray(alpha), np.asarray(beta)).shape
        return np.full(shape, float(self.p))

    def block_structure(self, positions):
        return np.zeros(len(positions), dtype=np.intp), np.array([[float(self.p)]])

    def to_config(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class StochasticBlock(Graphon):
    """Two communities split at ``boundary``; ``boundary`` itself belongs to
    the first one."""

    p_intra: float
    q_inter: float
    boundary: float = 0.5
    kind = "stochastic_block"

    def __post_init__(self):
        for name in ("p_intra", "q_inter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.boundary < 1.0:
            raise ValueError(f"boundary must lie in (0, 1), got {self.boundary}")

    def kernel(self, alpha, beta):
        same = (np.asarray(alpha) <= self.boundary) == (np.asarray(beta) <= self.boundary)
        return np.where(same, float(self.p_intra), float(self.q_inter))

    def block_structure(self, positions):
        labels = (np.asarray(positions) > self.boundary).astype(np.intp)
        p, q = float(self.p_intra), float(self.q_inter)
        return labels, np.array([[p, q], [q, p]])

    def to_config(self):
        return {"kind": self.kind, "p_intra": self.p_intra, "q_inter": self.q_inter,
                "boundary": self.boundary}


@dataclass(frozen=True)
class RandomGeometric(Graphon):
    """``W(a, b) = f(min(|a - b|, 1 - |a - b|))`` for a non-increasing ``f``.

    The default ``f(x) = exp(-x / (0.5 - x))`` is extended by continuity with
    ``f(0.5) = 0``.
    """

    f: Callable[[np.ndarray], np.ndarray] = field(default=_default_decay, compare=False)
    kind = "random_geometric"

    def kernel(self, alpha, beta):
        d = np.abs(np.asarray(beta, dtype=float) - np.asarray(alpha, dtype=float))
        x = np.minimum(d, 1.0 - d)
        return np.clip(self.f(x), 0.0, 1.0)

    def to_config(self):
        if self.f is not _default_decay:
            raise ValueError("only the default decay function is serialisable")
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class Step(Graphon):
    """Piecewise-constant graphon on a uniform ``K``-block partition."""

    matrix: np.ndarray
    kind = "step"

    def __post_init__(self):
        a = _readonly(self.matrix)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError("step matrix must be square and non-empty")
        if not np.array_equal(a, a.T):
            raise ValueError("step matrix must be symmetric")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("step matrix entries must lie in [0, 1]")
        object.__setattr__(self, "matrix", a)

    @classmethod
    def of(cls, g: Graphon, k: int) -> "Step":
        """The step graphon whose matrix is ``discretize(g, k).weights``."""
        return cls(discretize(g, k).weights)

    def _labels(self, x):
        k = self.matrix.shape[0]
        return np.searchsorted(anchor_grid(k), np.asarray(x, dtype=float), side="left")

    def kernel(self, alpha, beta):
        return self.matrix[self._labels(alpha), self._labels(beta)]

    def block_structure(self, positions):
        return self._labels(positions).astype(np.intp), np.array(self.matrix)

    def __eq__(self, other):
        return isinstance(other, Step) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def to_config(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


_GRAPHON_FIELDS = {
    "erdos_renyi": ("p",),
    "stochastic_block": ("p_intra", "q_inter", "boundary"),
    "random_geometric": (),
    "step": ("matrix",),
}


def graphon_from_config(cfg: dict) -> Graphon:
    """Build a graphon from a run-config mapping such as
    ``{"kind": "erdos_renyi", "p": 0.8}``."""
    if not isinstance(cfg, dict):
        raise ValueError("graphon spec must be a mapping")
    kind = cfg.get("kind")
    if kind not in _GRAPHON_FIELDS:
        raise ValueError(f"unknown graphon kind {kind!r}")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    unknown = sorted(set(params) - set(_GRAPHON_FIELDS[kind]))
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s) {unknown}")
    if kind == "erdos_renyi":
        return ErdosRenyi(float(params["p"]))
    if kind == "stochastic_block":
        return StochasticBlock(**{k: float(v) for k, v in params.items()})
    if kind == "random_geometric":
        return RandomGeometric()
    return Step(np.asarray(params["matrix"], dtype=float))


def evaluate(g: Graphon, alpha, beta):
    """``W(alpha, beta)``; scalars in give a float out."""
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    if np.any((a < 0.0) | (a > 1.0) | np.isnan(a)) or np.any((b < 0.0) | (b > 1.0) | np.isnan(b)):
        raise DomainError("graphon arguments must lie in [0, 1]")
    out = g.kernel(a, b)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class BlockKernel:
    """``weights[k, l] = W(alpha_k, alpha_l)`` on the anchors ``grid``."""

    weights: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        w = _readonly(self.weights)
        grid = _readonly(self.grid)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] != grid.shape[0]:
            raise ValueError("weights must be M x M with M anchors")
        if not np.array_equal(w, w.T):
            raise ValueError("block kernel must be symmetric")
        if w.min() < 0.0 or w.max() > 1.0:
            raise ValueError("block kernel entries must lie in [0, 1]")
        if np.any(np.diff(grid) <= 0) or grid[0] <= 0.0 or grid[-1] > 1.0:
            raise ValueError("grid must be strictly increasing inside [0, 1]")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "grid", grid)

    @property
    def m(self) -> int:
        return self.weights.shape[0]


def discretize(g: Graphon, m: int) -> BlockKernel:
    if int(m) != m or m < 1:
        raise ValueError(f"block count must be a positive integer, got {m}")
    grid = anchor_grid(int(m))
    return BlockKernel(evaluate(g, grid[:, None], grid[None, :]), grid)


def agent_positions(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / n


def sample_edges(g: Graphon, n: int, mode: str, rng_seed: SeedLike = None) -> np.ndarray:
    """Interaction weights of an ``n``-agent population.

    ``C1`` uses ``W(i/n, j/n)`` directly; ``C2`` draws one Bernoulli per
    unordered pair (diagonal included) and mirrors it.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"agent count must be a positive integer, got {n}")
    if mode not in COUPLINGS:
        raise ValueError(f"mode must be one of {COUPLINGS}, got {mode!r}")
    x = agent_positions(int(n))
    w = evaluate(g, x[:, None], x[None, :])
    if mode == "C1":
        return w
    u = make_rng(rng_seed).random((n, n))
    upper = np.triu(u < w)
    return (upper | np.triu(upper, 1).T).astype(float)


def _ascent(d: np.ndarray, g: np.ndarray, max_iter: int = 100) -> float:
    best = -np.inf
    for _ in range(max_iter):
        h = np.where(d @ g >= 0.0, 1.0, -1.0)
        g = np.where(d.T @ h >= 0.0, 1.0, -1.0)
        val = float(h @ d @ g)
        if val <= best:
            break
        best = val
    return best


def operator_norm_distance(a: Graphon, b: Graphon, grid_resolution: int,
                           restarts: int = 16, seed: int = 0) -> float:
    """Heuristic lower bound on ``||a - b||_{L_inf -> L_1}``.

    Both kernels are sampled at the cell midpoints of a ``G x G`` lattice and
    ``(1/G^2) h^T D g`` is maximised over sign vectors by alternating
    ``h = sign(D g)``, ``g = sign(D^T h)`` from the all-ones start plus
    ``restarts`` random starts.  The estimate is run on ``D`` and ``-D`` so it
    is exactly symmetric in its arguments.
    """
    if int(grid_resolution) != grid_resolution or grid_resolution < 2:
        raise ValueError("grid_resolution must be an integer >= 2")
    n = int(grid_resolution)
    x = (np.arange(n) + 0.5) / n
    d = evaluate(a, x[:, None], x[None, :]) - evaluate(b, x[:, None], x[None, :])
    if not np.any(d):
        return 0.0
    rng = np.random.default_rng(seed)
    starts = [np.ones(n)] + [np.where(rng.random(n) < 0.5, -1.0, 1.0) for _ in range(restarts)]
    best = max(max(_ascent(d, s), _ascent(-d, s)) for s in starts)
    return max(best, 0.0) / (n * n)


def discretization_distances(g: Graphon, ks=(4, 8, 16, 32), grid_resolution: int = 128,
                             seed: int = 0) -> list[tuple[int, float]]:
    """``(K, distance(Step.of(g, K), g))`` for each ``K``."""
    return [(k, operator_norm_distance(Step.of(g, k), g, grid_resolution, seed=seed))
            for k in ks]


def is_symmetric(w: np.ndarray) -> bool:
    return bool(np.array_equal(w, np.asarray(w).T))


__all__ = [
    "COUPLINGS", "DomainError", "Graphon", "ErdosRenyi", "StochasticBlock",
    "RandomGeometric", "Step", "BlockKernel", "graphon_from_config", "evaluate",
    "discretize", "sample_edges", "operator_norm_distance", "discretization_distances",
    "anchor_grid", "agent_positions", "is_symmetric",
]

