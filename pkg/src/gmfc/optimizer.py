"""Search for stationary policy ensembles that maximise the block return.

The block model is a deterministic MDP, so policies are scored by rolling the
mean-field dynamics forward.  Three searches are available:

``finite_diff``
    projected gradient ascent in simplex coordinates, central differences
    along zero-sum directions, backtracking step size;
``cross_entropy``
    Gaussian search over per-(block, state) logits mapped through softmax,
    refitted to the elite fraction every generation;
``exhaustive``
    enumeration of every deterministic ensemble (at most ``1e6`` of them).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .env import EnvironmentSpec
from .graphon import BlockKernel
from .mfc import check_policy_ensemble, replicate, rollout, uniform_policy
from .seeding import derive_seed

METHODS = ("finite_diff", "cross_entropy", "exhaustive")
REWARD_MODES = ("episode", "discounted")
EXHAUSTIVE_LIMIT = 10 ** 6


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of each vector along the last axis onto the
    probability simplex (Michelot's active-set iteration, exact)."""
    v = np.asarray(v, dtype=float)
    x = v.reshape(-1, v.shape[-1])
    active = np.ones(x.shape, dtype=bool)
    while True:
        theta = (np.where(active, x, 0.0).sum(axis=1) - 1.0) / active.sum(axis=1)
        shrunk = active & (x > theta[:, None])
        if np.array_equal(shrunk, active):
            break
        active = shrunk
    return np.maximum(x - theta[:, None], 0.0).reshape(v.shape)


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class OptimizerConfig:
    method: str = "cross_entropy"
    iterations: int = 50
    population: int = 64
    elite_fraction: float = 0.125
    init_std: float = 1.0
    min_std: float = 1e-3
    step_size: float = 0.5
    fd_epsilon: float = 1e-5
    restarts: int = 1
    seed: int = 0
    tolerance: float = 1e-10
    reward_mode: str = "episode"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}")
        for name in ("iterations", "population", "restarts", "seed"):
            v = getattr(self, name)
            if int(v) != v or v < 0 or (name in ("population", "restarts") and v < 1):
                raise ValueError(f"{name} must be a {'positive' if name in ('population', 'restarts') else 'non-negative'} integer, got {v}")
        for name in ("step_size", "fd_epsilon", "tolerance", "init_std", "min_std"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in (0, 1]")

    @classmethod
    def from_config(cls, cfg: dict) -> "OptimizerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ValueError(f"unknown optimizer field(s) {unknown}")
        return cls(**cfg)

    def to_config(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationResult:
    policy: np.ndarray
    best_return: float
    trace: list[float] = field(default_factory=list)
    evaluations: list[int] = field(default_factory=list)
    method: str = ""

    @property
    def total_evaluations(self) -> int:
        return self.evaluations[-1] if self.evaluations else 0

    def trace_csv(self, header_lines: Iterable[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "best_return", "evaluations"])
        for i, (r, n) in enumerate(zip(self.trace, self.evaluations)):
            w.writerow([i, format(r, ".17g"), n])
        return buf.getvalue()


def _as_ensemble(mu0, m: int) -> np.ndarray:
    mu0 = np.asarray(mu0, dtype=float)
    return replicate(mu0, m) if mu0.ndim == 1 else mu0


def evaluate_policy(env: EnvironmentSpec, kernel: BlockKernel, mu0, pi, mode: str = "episode",
                    horizon: int | None = None) -> float:
    """Block return of ``pi`` from ``mu0`` (a single distribution or an
    ensemble).

    ``episode`` sums undiscounted rewards over ``env.episode_length`` steps;
    ``discounted`` uses ``env.discount`` up to :meth:`EnvironmentSpec.infinite_horizon`.
    """
    if mode == "episode":
        traj = rollout(_as_ensemble(mu0, kernel.m), pi, kernel, env,
                       horizon or env.episode_length, discount=1.0)
    elif mode == "discounted":
        traj = rollout(_as_ensemble(mu0, kernel.m), pi, kernel, env,
                       horizon or env.infinite_horizon(), discount=env.discount)
    else:
        raise ValueError(f"mode must be one of {REWARD_MODES}, got {mode!r}")
    return traj.discounted_return


class _Scorer:
    def __init__(self, env, kernel, mu0, mode):
        self.args = (env, kernel, _as_ensemble(mu0, kernel.m))
        self.mode = mode
        self.count = 0
        self.best = -np.inf
        self.best_policy = None

    def __call__(self, pi) -> float:
        self.count += 1
        f = evaluate_policy(*self.args, pi, mode=self.mode)
        if f > self.best:
            self.best, self.best_policy = f, np.array(pi)
        return f


def optimize(env: EnvironmentSpec, kernel: BlockKernel, mu0, cfg: OptimizerConfig) -> OptimizationResult:
    m, S, A = kernel.m, env.n_states, env.n_actions
    score = _Scorer(env, kernel, mu0, cfg.reward_mode)
    trace, evals = [], []

    def record():
        trace.append(score.best)
        evals.append(score.count)

    if cfg.method == "exhaustive":
        _exhaustive(score, m, S, A, record)
    else:
        score(uniform_policy(m, env))
        record()
        if cfg.method == "finite_diff":
            _finite_diff(score, uniform_policy(m, env), cfg, record)
        else:
            _cross_entropy(score, (m, S, A), cfg, record)

    best = check_policy_ensemble(score.best_policy, m, S, A)
    verified = evaluate_policy(env, kernel, mu0, best, mode=cfg.reward_mode)
    if verified != score.best:
        raise RuntimeError("best policy failed post-hoc verification")
    return OptimizationResult(best, verified, trace, evals, cfg.method)


def _exhaustive(score, m, S, A, record):
    count = A ** (S * m)
    if count > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive search needs {count} candidates, limit is {EXHAUSTIVE_LIMIT}")
    eye = np.eye(A)
    # product() is lexicographic and _Scorer keeps the first strict maximum
    for choice in itertools.product(range(A), repeat=S * m):
        score(eye[np.array(choice)].reshape(m, S, A))
        record()


def _finite_diff(score, pi, cfg, record):
    m, S, A = pi.shape
    f = score(pi)
    step = cfg.step_size
    eps = cfg.fd_epsilon
    for _ in range(cfg.iterations):
        grad = np.zeros_like(pi)
        for b, s, a in itertools.product(range(m), range(S), range(A)):
            d = np.zeros_like(pi)
            d[b, s] = -1.0 / A
            d[b, s, a] += 1.0
            up = score(project_simplex(pi + eps * d))
            down = score(project_simplex(pi - eps * d))
            grad[b, s, a] = (up - down) / (2.0 * eps)
        improved = False
        while step > 1e-12:
            cand = project_simplex(pi + step * grad)
            fc = score(cand)
            if fc > f:
                gain = fc - f
                pi, f, improved = cand, fc, True
                step *= 1.5
                break
            step *= 0.5
        record()
        if not improved or gain < cfg.tolerance:
            break


def _cross_entropy(score, shape, cfg, record):
    n_elite = max(1, int(round(cfg.elite_fraction * cfg.population)))
    for r in range(cfg.restarts):
        mean = np.random.default_rng(derive_seed(cfg.seed, r)).standard_normal(shape)
        std = np.full(shape, cfg.init_std)
        for it in range(cfg.iterations):
            thetas = np.stack([
                mean + std * np.random.default_rng(derive_seed(cfg.seed, r, it + 1, c)).standard_normal(shape)
                for c in range(cfg.population)
            ])
            values = np.array([score(softmax(t)) for t in thetas])
            elite = thetas[np.argsort(-values, kind="stable")[:n_elite]]
            mean = elite.mean(axis=0)
            std = np.maximum(elite.std(axis=0), cfg.min_std)
            # the distribution's mean and mode are candidates too
            score(softmax(mean))
            score(np.eye(shape[-1])[np.argmax(mean, axis=-1)])
            record()


__all__ = [
    "METHODS", "REWARD_MODES", "EXHAUSTIVE_LIMIT", "project_simplex", "softmax",
    "OptimizerConfig", "OptimizationResult", "evaluate_policy", "optimize",
]
