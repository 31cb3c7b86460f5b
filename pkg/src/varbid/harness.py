"""Experiment runner: seeded market training runs with CSV outputs.

A run trains the forecaster, warms up the replay buffer, trains the
bidding agent for each seed, and writes per-seed learning curves, network
checkpoints, an optional greedy-policy trace episode, and a summary with
the mean and standard deviation of converged episodic rewards (the final
fraction of episodes given by ``convergence_window``).

Configuration lives in a flat ``key = value`` text file (see SCHEMA for
the accepted keys); command-line flags override file values, which
override defaults. All randomness derives from one root seed per run
through fixed sub-streams, so re-running a configuration reproduces every
output CSV byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import (STREAM_ENV, STREAM_FORECASTER, TrainConfig, BiddingTask,
                    greedy_episode, train, VARIANTS)
from .forecast import Forecaster, save_forecaster, train_forecaster
from .market import (DEFAULT_GENCOS, DemandConfig, ReactiveMarketEnv,
                     RIVAL_STRATEGIES, load_gencos, simulate_total_quantity)
from .nn import NumericError, save_network


class ConfigError(ValueError):
    """A configuration field is missing, unknown, or invalid."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _opt(coerce):
    return lambda text: None if text.strip().lower() in ("none", "") else coerce(text)


@dataclass
class ExperimentConfig:
    """One experiment: a (learner, rival strategy, network variant) cell."""

    learner_id: int = 2
    strategy: str = "b1"
    variant: str = "nfq2"
    seeds: tuple[int, ...] = (0,)
    episodes: int = 300
    episode_steps: int = 720
    out_dir: str = "runs/experiment"
    genco_table: str | None = None
    trace: bool = True
    convergence_window: float = 0.1

    forecaster_units: int = 32
    forecaster_epochs: int = 50
    forecaster_batch_size: int = 32
    forecaster_learning_rate: float = 5e-3
    forecaster_series_steps: int = 720

    gamma: float = 0.3
    epsilon0: float = 1.0
    epsilon_decay: float = 0.1
    epsilon_min: float = 0.01
    tau: float = 1e-3
    batch_size: int = 64
    steps_per_iteration: int = 24
    buffer_capacity: int = 100_000
    warmup_size: int = 10_000
    hidden_sizes: tuple[int, ...] | None = None
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    reward_scale: float = 1.0
    per_beta: float = 0.7
    per_eps: float = 0.01
    p_init: float | None = None
    forced_action_index: int | None = None
    resample_demand: bool = False
    max_iterations: int | None = None

    peak_units: float = 1.072
    participation: float = 0.6
    daily_amplitude: float = 0.45
    weekly_amplitude: float = 0.15
    noise_amplitude: float = 0.05

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds: must be distinct, got {self.seeds}")
        if self.strategy not in RIVAL_STRATEGIES:
            raise ConfigError(f"strategy: must be one of {RIVAL_STRATEGIES}, got {self.strategy!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant: must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.convergence_window <= 1.0:
            raise ConfigError("convergence_window: must be in (0, 1]")
        if self.episodes < 1:
            raise ConfigError("episodes: must be >= 1")
        gencos = self.gencos()
        if self.learner_id not in [g.id for g in gencos]:
            raise ConfigError(f"learner_id: {self.learner_id} not in producer table")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def gencos(self):
        if not self.genco_table:
            return list(DEFAULT_GENCOS)
        try:
            return load_gencos(self.genco_table)
        except OSError as exc:
            raise ConfigError(f"genco_table: cannot read {self.genco_table!r}: {exc}") from exc

    def learner_index(self) -> int:
        for k, g in enumerate(self.gencos()):
            if g.id == self.learner_id:
                return k
        raise ConfigError(f"learner_id: {self.learner_id} not in producer table")

    def demand_config(self) -> DemandConfig:
        return DemandConfig(peak_units=self.peak_units, participation=self.participation,
                            daily_amplitude=self.daily_amplitude,
                            weekly_amplitude=self.weekly_amplitude,
                            noise_amplitude=self.noise_amplitude)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma, epsilon0=self.epsilon0, epsilon_decay=self.epsilon_decay,
            epsilon_min=self.epsilon_min, tau=self.tau, batch_size=self.batch_size,
            steps_per_iteration=self.steps_per_iteration,
            buffer_capacity=self.buffer_capacity, warmup_size=self.warmup_size,
            variant=self.variant, hidden_sizes=self.hidden_sizes,
            optimizer=self.optimizer, learning_rate=self.learning_rate,
            episodes=self.episodes, max_iterations=self.max_iterations,
            reward_scale=self.reward_scale, per_beta=self.per_beta, per_eps=self.per_eps,
            p_init=self.p_init, forced_action_index=self.forced_action_index,
            resample_demand=self.resample_demand)


_COERCE = {
    "learner_id": int, "strategy": str, "variant": str, "seeds": _int_tuple,
    "episodes": int, "episode_steps": int, "out_dir": str, "genco_table": _opt(str),
    "trace": _bool, "convergence_window": float,
    "forecaster_units": int, "forecaster_epochs": int, "forecaster_batch_size": int,
    "forecaster_learning_rate": float, "forecaster_series_steps": int,
    "gamma": float, "epsilon0": float, "epsilon_decay": float, "epsilon_min": float,
    "tau": float, "batch_size": int, "steps_per_iteration": int,
    "buffer_capacity": int, "warmup_size": int, "hidden_sizes": _opt(_int_tuple),
    "optimizer": str, "learning_rate": float, "reward_scale": float,
    "per_beta": float, "per_eps": float, "p_init": _opt(float),
    "forced_action_index": _opt(int), "resample_demand": _bool,
    "max_iterations": _opt(int),
    "peak_units": float, "participation": float, "daily_amplitude": float,
    "weekly_amplitude": float, "noise_amplitude": float,
}
SCHEMA = tuple(sorted(_COERCE))


def parse_config_file(path: str) -> dict:
    """Read ``key = value`` lines; '#' starts a comment. Unknown keys fail."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, text = (part.strip() for part in line.split("=", 1))
            if key not in _COERCE:
                raise ConfigError(f"{path}:{lineno}: unknown config field {key!r}")
            try:
                values[key] = _COERCE[key](text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults < file values < overrides into a validated config."""
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            if key not in _COERCE:
                raise ConfigError(f"unknown config field {key!r}")
            if value is not None or key in ("genco_table", "hidden_sizes", "p_init",
                                            "forced_action_index", "max_iterations"):
                merged[key] = value
    config = ExperimentConfig(**merged)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

CURVE_FIELDS = ("episode", "reward", "epsilon", "mean_abs_td", "baseline_payment")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(config: ExperimentConfig, path: Path) -> None:
    lines = []
    for f in sorted(dataclasses.fields(config), key=lambda f: f.name):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    path.write_text("\n".join(lines) + "\n")


@dataclass
class SeedOutcome:
    seed: int
    converged_reward: float
    converged_payment: float


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    per_seed: list[SeedOutcome]
    mu: float
    sigma: float
    mean_payment: float
    out_dir: str


def derive_env_seed(seed: int) -> int:
    """First draw of the run's environment stream; fixes the demand series."""
    return int(np.random.default_rng([seed, STREAM_ENV]).integers(2**63))


def _prepare_forecaster(config: ExperimentConfig, gencos, seed: int) -> Forecaster:
    series = simulate_total_quantity(gencos, config.demand_config(),
                                     seed=derive_env_seed(seed),
                                     steps=config.forecaster_series_steps)
    fc_seed = int(np.random.default_rng([seed, STREAM_FORECASTER]).integers(2**31))
    forecaster, _ = train_forecaster(series, units=config.forecaster_units,
                                     epochs=config.forecaster_epochs, seed=fc_seed,
                                     batch_size=config.forecaster_batch_size,
                                     learning_rate=config.forecaster_learning_rate)
    return forecaster


def _trace_rows(infos: list[dict], n_gencos: int) -> tuple[list[str], list[list]]:
    header = ["t", "demand", "d_norm", "action"]
    for tag in ("b1", "b2"):
        header += [f"{tag}_{k + 1}" for k in range(n_gencos)]
    header += [f"qg_{k + 1}" for k in range(n_gencos)]
    header += [f"price_{k + 1}" for k in range(n_gencos)]
    header += ["reward"]
    rows = []
    for info in infos:
        row = [info["t"], info["demand"], info["d_norm"], info["action"]]
        row += list(info["bids_b1"]) + list(info["bids_b2"])
        row += [float(v) for v in info["qg"]]
        row += [float(v) for v in info["prices"]]
        row += [info["reward"]]
        rows.append(row)
    return header, rows


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Train per seed and write curves, checkpoints, traces, and the summary."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(config, out / "manifest.txt")

    gencos = config.gencos()
    learner = config.learner_index()
    window = max(1, int(round(config.convergence_window * config.episodes)))
    per_seed: list[SeedOutcome] = []
    for seed in config.seeds:
        forecaster = _prepare_forecaster(config, gencos, seed)
        save_forecaster(forecaster, str(out / f"forecaster_seed{seed}.json"))
        env = ReactiveMarketEnv(gencos=tuple(gencos), learner=learner,
                                rival_strategy=config.strategy,
                                demand_config=config.demand_config(),
                                episode_steps=config.episode_steps)
        task = BiddingTask(env, forecaster, reward_scale=config.reward_scale)
        result = train(task, config.train_config(), seed)

        _write_csv(out / f"curve_seed{seed}.csv", CURVE_FIELDS,
                   [(e.episode, e.reward, e.epsilon, e.mean_abs_td, e.baseline_payment)
                    for e in result.episodes])
        save_network(result.local, str(out / f"qnet_local_seed{seed}.json"))
        save_network(result.target, str(out / f"qnet_target_seed{seed}.json"))
        if config.trace:
            _, infos = greedy_episode(task, result.local, config.variant,
                                      derive_env_seed(seed))
            header, rows = _trace_rows(infos, len(gencos))
            _write_csv(out / f"trace_seed{seed}.csv", header, rows)

        rewards = np.array([e.reward for e in result.episodes[-window:]])
        payments = np.array([e.baseline_payment for e in result.episodes[-window:]])
        per_seed.append(SeedOutcome(seed, float(rewards.mean()), float(payments.mean())))

    values = np.array([s.converged_reward for s in per_seed])
    payments = np.array([s.converged_payment for s in per_seed])
    mu = float(values.mean())
    sigma = float(values.std(ddof=0))  # single seed: sigma is 0 by convention
    summary_rows = [[s.seed, s.converged_reward, s.converged_payment] for s in per_seed]
    summary_rows.append(["mu", mu, float(payments.mean())])
    summary_rows.append(["sigma", sigma, float(payments.std(ddof=0))])
    _write_csv(out / "summary.csv", ("seed", "converged_reward", "converged_baseline_payment"),
               summary_rows)
    return ExperimentSummary(config=config, per_seed=per_seed, mu=mu, sigma=sigma,
                             mean_payment=float(payments.mean()), out_dir=str(out))


def run_matrix(config: ExperimentConfig, learners, strategies, variants) -> dict:
    """Cross-product of (learner, strategy, variant) cells; failures recorded,
    remaining cells continue. Emits one mu/sigma table per (strategy, variant)."""
    if not learners or not strategies or not variants:
        raise ConfigError("matrix: learners, strategies and variants must be nonempty")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries: dict = {}
    errors: dict = {}
    for strategy in strategies:
        for variant in variants:
            for learner in learners:
                cell = dataclasses.replace(
                    config, learner_id=learner, strategy=strategy, variant=variant,
                    out_dir=str(out / f"L{learner}_{strategy}_{variant}"))
                try:
                    summaries[(learner, strategy, variant)] = run_experiment(cell)
                except Exception as exc:  # cell failure must not stop the matrix
                    errors[(learner, strategy, variant)] = f"{type(exc).__name__}: {exc}"
            header = ["metric"] + [str(l) for l in learners]
            mu_row = ["mu"] + [
                summaries[(l, strategy, variant)].mu if (l, strategy, variant) in summaries
                else "nan" for l in learners]
            sigma_row = ["sigma"] + [
                summaries[(l, strategy, variant)].sigma if (l, strategy, variant) in summaries
                else "nan" for l in learners]
            _write_csv(out / f"table_{strategy}_{variant}.csv", header, [mu_row, sigma_row])
    if errors:
        with open(out / "errors.txt", "w") as fh:
            for key, message in errors.items():
                fh.write(f"{key}: {message}\n")
    return {"summaries": summaries, "errors": errors}


SWEEP_PARAMETERS = ("gamma", "batch_size", "epsilon_decay")


def sweep(config: ExperimentConfig, parameter: str, values) -> list[dict]:
    """Hyperparameter study on the reference cell (learner 2, b1 rivals, nfq2).

    Runs one experiment per value; a run that diverges numerically is
    flagged rather than fatal. Emits sweep_<parameter>.csv plus per-value
    run directories with full curves.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if not values:
        raise ConfigError("sweep: need at least one value")
    for v in values:
        if parameter == "gamma" and not 0.0 <= v < 1.0:
            raise ConfigError(f"sweep gamma value {v} outside [0, 1)")
        if parameter == "batch_size" and (int(v) != v or v < 1):
            raise ConfigError(f"sweep batch_size value {v} must be a positive integer")
        if parameter == "epsilon_decay" and not 0.0 <= v <= 1.0:
            raise ConfigError(f"sweep epsilon_decay value {v} outside [0, 1]")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    results = []
    for v in values:
        cell = dataclasses.replace(
            config, learner_id=2, strategy="b1", variant="nfq2",
            out_dir=str(out / f"sweep_{parameter}" / str(v)),
            **{parameter: int(v) if parameter == "batch_size" else float(v)})
        try:
            summary = run_experiment(cell)
            record = {"value": v, "mu": summary.mu, "sigma": summary.sigma, "diverged": False}
        except NumericError as exc:
            record = {"value": v, "mu": float("nan"), "sigma": float("nan"),
                      "diverged": True, "error": str(exc)}
        rows.append([record["value"], record["mu"], record["sigma"], record["diverged"]])
        results.append(record)
    _write_csv(out / f"sweep_{parameter}.csv", ("value", "mu", "sigma", "diverged"), rows)
    return results


def emit_trace(trace_csv: str, window: tuple[int, int], out_path: str) -> int:
    """Slice per-producer generation out of a stored trace episode.

    Writes columns t, qg_1..qg_n over [start, start + length). A zero-length
    window produces only the header. Returns the number of rows written.
    """
    start, length = window
    with open(trace_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        columns = [c for c in reader.fieldnames or [] if c.startswith("qg_")]
    if not columns:
        raise ValueError(f"{trace_csv} has no qg_* columns")
    if start < 0 or length < 0 or start + length > len(rows):
        raise ValueError(
            f"window [{start}, {start + length}) outside trace of {len(rows)} steps")
    out = [[rows[i]["t"]] + [rows[i][c] for c in columns]
           for i in range(start, start + length)]
    _write_csv(Path(out_path), ["t"] + columns, out)
    return len(out)
