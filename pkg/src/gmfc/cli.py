"""``gmfc run <config.json>``: seeded experiments writing CSV/SVG artifacts.

Config layout (JSON)::

    {
      "env":        {"kind": "sis", "beta1": 0.8, ...},
      "graphon":    {"kind": "erdos_renyi", "p": 0.8},
      "optimizer":  {"method": "finite_diff", "iterations": 60},
      "experiment": {"kind": "converge", "blocks": 10, "n_list": [10, 20],
                     "runs": 1000, "coupling": "C2", "seed": 0}
    }

Seed streams derived from the master seed: ``(0,)`` optimizer,
``(1,)`` Monte Carlo base seed, ``(2,)`` environment validation,
``(3,)`` cut-distance restarts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .env import env_from_config, validate
from .graphon import discretization_distances, discretize, graphon_from_config
from .mfc import uniform_policy
from .nagent import convergence_study, monte_carlo
from .optimizer import OptimizerConfig, optimize
from .policy_io import read_policy, write_policy
from .seeding import derive_seed
from .svgplot import loglog_svg

KINDS = ("optimize", "simulate", "converge", "graphon_dist", "validate_env")
SEED_ENV = "GMFC_SEED"
HEADER_CONFIG = "gmfc config: "
HEADER_SEED = "gmfc seed: "


class ConfigError(ValueError):
    """Invalid run configuration; the message starts with the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Experiment:
    kind: str = "converge"
    blocks: int = 10
    n_list: list = field(default_factory=lambda: [10, 20, 40, 80, 160])
    runs: int = 1000
    horizon: int | None = None
    seed: int = 0
    output_dir: str = "out"
    reward_mode: str = "episode"
    coupling: str = "C2"
    fixed_graph: bool = False
    policy: str = "optimize"
    k_list: list = field(default_factory=lambda: [4, 8, 16, 32])
    grid_resolution: int = 128
    samples: int = 10000


@dataclass
class RunConfig:
    env: dict
    graphon: dict
    optimizer: dict
    experiment: Experiment

    @classmethod
    def from_dict(cls, raw) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = sorted(set(raw) - {"env", "graphon", "optimizer", "experiment"})
        if unknown:
            raise ConfigError(unknown[0], "unknown section")
        env = raw.get("env", {"kind": "sis"})
        graphon = raw.get("graphon", {"kind": "erdos_renyi", "p": 0.8})
        opt = dict(raw.get("optimizer", {}))
        exp_raw = raw.get("experiment", {})
        if not isinstance(exp_raw, dict):
            raise ConfigError("experiment", "must be an object")
        names = {f.name for f in fields(Experiment)}
        for k in exp_raw:
            if k not in names:
                raise ConfigError(f"experiment.{k}", "unknown field")
        exp = Experiment(**exp_raw)
        cfg = cls(env=dict(env), graphon=dict(graphon), optimizer=opt, experiment=exp)
        cfg.check()
        return cfg

    def check(self):
        e = self.experiment
        if e.kind not in KINDS:
            raise ConfigError("experiment.kind", f"must be one of {list(KINDS)}, got {e.kind!r}")
        for name in ("blocks", "runs", "grid_resolution", "samples"):
            v = getattr(e, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"experiment.{name}", f"must be a positive integer, got {v!r}")
        if e.horizon is not None and (not isinstance(e.horizon, int) or e.horizon < 1):
            raise ConfigError("experiment.horizon", f"must be null or a positive integer, got {e.horizon!r}")
        if not isinstance(e.seed, int) or not 0 <= e.seed < 2 ** 64:
            raise ConfigError("experiment.seed", "must be an unsigned 64-bit integer")
        if (not isinstance(e.n_list, list) or not e.n_list
                or any(not isinstance(n, int) or n < 1 for n in e.n_list)
                or any(b <= a for a, b in zip(e.n_list, e.n_list[1:]))):
            raise ConfigError("experiment.n_list", "must be a non-empty increasing list of positive integers")
        if any(not isinstance(k, int) or k < 1 for k in e.k_list) or not e.k_list:
            raise ConfigError("experiment.k_list", "must be a non-empty list of positive integers")
        if e.reward_mode not in ("episode", "discounted"):
            raise ConfigError("experiment.reward_mode", "must be 'episode' or 'discounted'")
        if e.coupling not in ("C1", "C2"):
            raise ConfigError("experiment.coupling", "must be 'C1' or 'C2'")
        if "seed" in self.optimizer:
            raise ConfigError("optimizer.seed", "optimizer seeds derive from experiment.seed")
        for section, build in (("env", env_from_config), ("graphon", graphon_from_config)):
            try:
                resolved = build(getattr(self, section)).to_config()
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{section}.{_field_hint(getattr(self, section), exc)}", str(exc)) from None
            setattr(self, section, resolved)
        if "reward_mode" in self.optimizer:
            raise ConfigError("optimizer.reward_mode", "set experiment.reward_mode instead")
        try:
            opt = OptimizerConfig.from_config({**self.optimizer, "reward_mode": e.reward_mode}).to_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError("optimizer", str(exc)) from None
        self.optimizer = {k: v for k, v in opt.items() if k not in ("seed", "reward_mode")}

    def to_dict(self) -> dict:
        return {"env": self.env, "graphon": self.graphon, "optimizer": self.optimizer,
                "experiment": asdict(self.experiment)}

    def with_seed(self, seed: int) -> "RunConfig":
        d = self.to_dict()
        d["experiment"]["seed"] = seed
        return RunConfig.from_dict(d)


def _field_hint(section: dict, exc: Exception) -> str:
    if isinstance(exc, KeyError):
        return str(exc.args[0])
    msg = str(exc)
    if "kind" in msg:
        return "kind"
    for key in section:
        if key != "kind" and key in msg:
            return key
    return "kind" if "kind" not in section else "<params>"


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"JSON parse error at line {exc.lineno}: {exc.msg}") from None
    return RunConfig.from_dict(raw)


def config_json(cfg: RunConfig) -> str:
    # '--' cannot occur in an XML comment; the JSON escape keeps the text valid
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).replace("--", "-\\u002d")


def header_lines(cfg: RunConfig) -> list[str]:
    return [HEADER_CONFIG + config_json(cfg), HEADER_SEED + str(cfg.experiment.seed)]


def read_header_config(path) -> RunConfig:
    """Re-parse the resolved config embedded in an artifact header."""
    text = Path(path).read_text(encoding="utf-8")
    for line in text.splitlines():
        line = line.lstrip("# ")
        if line.startswith(HEADER_CONFIG):
            return RunConfig.from_dict(json.loads(line[len(HEADER_CONFIG):]))
    raise ValueError(f"{path}: no embedded config")


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv(rows, header, cfg) -> str:
    out = [f"# {h}" for h in header_lines(cfg)] + [",".join(header)]
    out += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def _f(x) -> str:
    return format(float(x), ".17g")


class Runner:
    def __init__(self, cfg: RunConfig, out: Path, threads: int = 1):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.env = env_from_config(cfg.env)
        self.graphon = graphon_from_config(cfg.graphon)
        e = cfg.experiment
        self.horizon = e.horizon or self.env.episode_length
        self.mu0 = np.full(self.env.n_states, 1.0 / self.env.n_states)
        self.master = e.seed

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig.from_config({**self.cfg.optimizer, "seed": derive_seed(self.master, 0),
                                            "reward_mode": self.cfg.experiment.reward_mode})

    def policy(self) -> np.ndarray:
        e = self.cfg.experiment
        if e.policy == "uniform":
            return uniform_policy(e.blocks, self.env)
        if e.policy == "optimize":
            return self.run_optimize()
        pi = read_policy(e.policy)
        if pi.shape != (e.blocks, self.env.n_states, self.env.n_actions):
            raise ConfigError("experiment.policy", f"policy file has shape {pi.shape}")
        return pi

    def run_optimize(self) -> np.ndarray:
        kernel = discretize(self.graphon, self.cfg.experiment.blocks)
        res = optimize(self.env, kernel, self.mu0, self.optimizer_config())
        hdr = header_lines(self.cfg)
        _write(self.out / "policy.txt", write_policy(res.policy, hdr))
        _write(self.out / "optimization_trace.csv", res.trace_csv(hdr))
        return res.policy

    def run_simulate(self):
        e = self.cfg.experiment
        pi = self.policy()
        base = derive_seed(self.master, 1)
        summary, per_run = [], []
        for n in e.n_list:
            mc = monte_carlo(self.env, self.graphon, n, e.coupling, pi, self.mu0, self.horizon,
                             e.runs, derive_seed(base, n), reward_mode=e.reward_mode,
                             fixed_graph=e.fixed_graph, workers=self.threads)
            summary.append([n, mc.runs, _f(mc.mean), _f(mc.std), _f(mc.stderr)])
            per_run += [[n, r, s, _f(t)] for r, (s, t) in enumerate(zip(mc.seeds, mc.totals))]
        _write(self.out / "mc_summary.csv", _csv(summary, ["N", "runs", "mean", "std", "stderr"], self.cfg))
        _write(self.out / "mc_runs.csv", _csv(per_run, ["N", "run", "seed", "total"], self.cfg))

    def run_converge(self):
        e = self.cfg.experiment
        self.env.warn_if_not_contractive()
        pi = self.policy()
        table = convergence_study(self.env, self.graphon, pi, self.mu0, self.horizon, e.n_list,
                                  e.coupling, e.runs, derive_seed(self.master, 1),
                                  reward_mode=e.reward_mode, fixed_graph=e.fixed_graph,
                                  workers=self.threads)
        hdr = header_lines(self.cfg)
        _write(self.out / "convergence.csv", table.csv(hdr))
        errs = [r["mc_std"] / np.sqrt(r["runs"]) for r in table.rows]
        svg = loglog_svg(table.ns.tolist(), table.gaps.tolist(), errs, table.slope,
                         title=f"{self.env.name}: |finite-N mean - block return|",
                         xlabel="N (agents)", ylabel="gap", comment="\n".join(hdr))
        _write(self.out / "convergence.svg", svg)
        return table

    def run_graphon_dist(self):
        e = self.cfg.experiment
        rows = discretization_distances(self.graphon, e.k_list, e.grid_resolution,
                                        seed=derive_seed(self.master, 3))
        _write(self.out / "graphon_distance.csv",
               _csv([[k, _f(d)] for k, d in rows], ["K", "distance"], self.cfg))

    def run_validate_env(self) -> bool:
        rep = validate(self.env, self.cfg.experiment.samples, derive_seed(self.master, 2))
        _write(self.out / "validation.csv", _csv([[k, v] for k, v in rep.rows()], ["metric", "value"], self.cfg))
        return rep.ok

    def run(self) -> int:
        kind = self.cfg.experiment.kind
        if kind == "optimize":
            self.run_optimize()
        elif kind == "simulate":
            self.run_simulate()
        elif kind == "converge":
            self.run_converge()
        elif kind == "graphon_dist":
            self.run_graphon_dist()
        elif not self.run_validate_env():
            print("validate_env: environment violates its declared constants; see validation.csv",
                  file=sys.stderr)
            return 1
        return 0


def resolve_seed(cfg: RunConfig, cli_seed: int | None) -> RunConfig:
    """Precedence: ``--seed`` over ``$GMFC_SEED`` over the config file."""
    if cli_seed is not None:
        return cfg.with_seed(cli_seed)
    if os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, "must be an unsigned 64-bit integer") from None
        return cfg.with_seed(seed)
    return cfg


def run(config_path, out: str | None = None, seed: int | None = None, threads: int = 1) -> int:
    """Execute one configured experiment; returns the process exit status."""
    try:
        cfg = resolve_seed(load_config(config_path), seed)
        outdir = Path(out or cfg.experiment.output_dir)
        try:
            outdir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("experiment.output_dir", f"cannot create {outdir}: {exc}") from None
        if not os.access(outdir, os.W_OK):
            raise ConfigError("experiment.output_dir", f"{outdir} is not writable")
        return Runner(cfg, outdir, threads).run()
    except FileNotFoundError as exc:
        print(f"gmfc: config file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"gmfc: invalid config: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gmfc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiment described by a JSON config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides experiment.output_dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides $GMFC_SEED and the config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo batches")
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    return run(args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
