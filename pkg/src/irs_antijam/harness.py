"""Experiment configuration, per-realization runners, sweeps and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import AOConfig, alternating_optimize, constraints_for, optimal_pa_no_irs
from .channel import PathLossParams, PhaseConfig, dbm_to_watt
from .env import AntiJammingEnv, EnvConfig, FeatureBins, JammerPolicy, StateBinsConfig
from .learning import EpisodeMetrics, LearnerBundle, LearnerConfig, Variant, run_episode, train
from .signals import JammerAction, worst_case_directions

LEARNING_APPROACHES = {
    "fuzzy_wolf_phc": Variant.FUZZY_WOLF_PHC,
    "wolf_phc": Variant.WOLF_PHC,
    "phc": Variant.PHC_FIXED,
    "fast_q": Variant.Q_ONLY,
}
REFERENCE_APPROACHES = ("ao", "no_irs")
APPROACHES = tuple(LEARNING_APPROACHES) + REFERENCE_APPROACHES
IRS_APPROACHES = tuple(a for a in APPROACHES if a != "no_irs")

SWEEP_VARIABLES = {"P_MAX": "p_max_dbm", "M": "num_elements", "SINR_MIN": "sinr_min_db"}
STEADY_STATE_EPISODE = -1  # episode index of final-quartile aggregate rows

CSV_HEADER = ("approach", "sweep_var", "sweep_value", "episode", "seed", "rate_bps_hz", "protection", "reward")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # system
    num_antennas: int = 4
    num_jammer_antennas: int = 4
    num_users: int = 2
    num_elements: int = 8
    p_max_dbm: float = 30.0
    sinr_min_db: float = 10.0
    noise_dbm: float = -105.0
    beamforming: str = "mmse"
    # path loss
    pl0_db: float = 30.0
    d0: float = 1.0
    beta_bu: float = 3.75
    beta_br: float = 2.2
    beta_ru: float = 2.2
    beta_ju: float = 2.5
    pathloss_convention: str = "as_printed"
    # actions and states
    n_power_levels: int = 3
    n_phase_levels: int = 4
    action_mode: str = "codebook"
    codebook_size: int = 4
    jam_bins: int = 6
    gain_bins: int = 2
    sinr_bins: int = 2
    jam_range_dbm: tuple = (12.5, 42.5)
    gain_range_db: tuple = (-6.0, 6.0)
    sinr_margin_range_db: tuple = (-10.0, 10.0)
    phase_reset: str = "realization"
    jam_estimation_noise_db: float = 0.0
    # learner
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.1
    xi_win: float = 0.01
    xi_loss: float = 0.04
    n_fuzzy: int = 8
    fuzzy_width: float | tuple = 2.0
    # jammer
    jammer_kind: str = "sweep"
    jammer_grid_dbm: tuple = (15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    jammer_level_dbm: float = 30.0
    jammer_direction: str = "worst"
    # baselines
    ao_max_iters: int = 5
    ao_perfect_jam: bool = False
    # run
    episodes: int = 300
    horizon: int = 100
    realizations: int = 20
    base_seed: int = 0
    approaches: tuple = APPROACHES
    out: str = "results.csv"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.fuzzy_width, list):
            object.__setattr__(self, "fuzzy_width", tuple(self.fuzzy_width))
        for name in ("jam_range_dbm", "gain_range_db", "sinr_margin_range_db", "jammer_grid_dbm", "approaches"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        unknown = [a for a in self.approaches if a not in APPROACHES]
        if unknown:
            raise ConfigError(f"unknown approach id(s) {', '.join(unknown)}; expected {', '.join(APPROACHES)}")
        if not self.approaches:
            raise ConfigError("no approaches selected")
        if self.episodes < 1 or self.horizon < 1 or self.realizations < 1:
            raise ConfigError("episodes, horizon and realizations must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.env_config()
            self.jammer_policy()
            self.learner_config(Variant.FUZZY_WOLF_PHC)
            AOConfig(self.ao_max_iters, self.n_phase_levels)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- construction

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def desk(cls, **changes) -> "ExperimentConfig":
        """Desk-scale preset: N = N_J = 4, K = 2, M = 8, 20 realizations."""
        return cls(**changes)

    @classmethod
    def full_scale(cls, **changes) -> "ExperimentConfig":
        base = dict(num_antennas=8, num_jammer_antennas=8, num_elements=60, realizations=500)
        base.update(changes)
        return cls(**base)

    # -- derived objects

    def pathloss(self) -> PathLossParams:
        return PathLossParams(
            self.pl0_db, self.d0, self.beta_bu, self.beta_br, self.beta_ru, self.beta_ju, self.pathloss_convention
        )

    def bins(self) -> StateBinsConfig:
        return StateBinsConfig(
            jam=FeatureBins(*self.jam_range_dbm, self.jam_bins),
            gain=FeatureBins(*self.gain_range_db, self.gain_bins),
            sinr=FeatureBins(*self.sinr_margin_range_db, self.sinr_bins),
        )

    def env_config(self, irs: bool = True) -> EnvConfig:
        return EnvConfig(
            num_antennas=self.num_antennas,
            num_elements=self.num_elements,
            num_users=self.num_users,
            num_jammer_antennas=self.num_jammer_antennas,
            p_max_dbm=self.p_max_dbm,
            sinr_min_db=self.sinr_min_db,
            noise_dbm=self.noise_dbm,
            pathloss=self.pathloss(),
            n_power_levels=self.n_power_levels,
            n_phase_levels=self.n_phase_levels,
            action_mode=self.action_mode,
            codebook_size=self.codebook_size,
            beamforming=self.beamforming,
            bins=self.bins(),
            phase_reset=self.phase_reset,
            jam_estimation_noise_db=self.jam_estimation_noise_db,
            irs_enabled=irs,
        )

    def jammer_policy(self) -> JammerPolicy:
        return JammerPolicy(
            kind=self.jammer_kind,
            power_grid_dbm=self.jammer_grid_dbm,
            level_dbm=self.jammer_level_dbm,
            direction=self.jammer_direction,
        )

    def learner_config(self, variant) -> LearnerConfig:
        return LearnerConfig(
            alpha=self.alpha,
            gamma=self.gamma,
            epsilon=self.epsilon,
            xi_win=self.xi_win,
            xi_loss=self.xi_loss,
            variant=variant,
            n_fuzzy=self.n_fuzzy,
            fuzzy_width=self.fuzzy_width,
        )

    def ao_config(self) -> AOConfig:
        return AOConfig(self.ao_max_iters, self.n_phase_levels, perfect_jam_knowledge=self.ao_perfect_jam)

    def with_sweep(self, variable: str, value) -> "ExperimentConfig":
        if variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {variable!r}; expected one of {', '.join(SWEEP_VARIABLES)}")
        name = SWEEP_VARIABLES[variable]
        if variable == "M":
            if float(value) != int(value) or int(value) < 1:
                raise ConfigError(f"M must be a positive integer, got {value}")
            value = int(value)
        else:
            value = float(value)
        return self.replace(**{name: value})

    def hash(self) -> str:
        import hashlib

        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MetricsRecord:
    approach: str
    sweep_var: str
    sweep_value: float
    episode: int
    seed: int
    rate_bps_hz: float
    protection: float
    reward: float

    def __post_init__(self):
        if not 0.0 <= self.protection <= 1.0:
            raise ValueError(f"protection {self.protection} outside [0, 1]")
        if self.rate_bps_hz < 0:
            raise ValueError(f"negative rate {self.rate_bps_hz}")


# ---------------------------------------------------------------- runners


def learner_rng(seed: int) -> np.random.Generator:
    """Action-selection stream, independent of the environment's streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1]))


class _Memo:
    """Per-realization cache of slot decisions keyed by the jamming levels used."""

    def __init__(self, solve):
        self.solve = solve
        self.table: dict = {}

    def __call__(self, jam: JammerAction):
        key = tuple(np.round(jam.p_j, 15))
        if key not in self.table:
            self.table[key] = self.solve(jam)
        return self.table[key]


def _ao_chooser(env: AntiJammingEnv, cfg: ExperimentConfig):
    ao_cfg = cfg.ao_config()
    cons = constraints_for(env)
    z = worst_case_directions(env.channels)

    def solve(jam):
        res = alternating_optimize(env.channels, jam, ao_cfg, cons)
        return res.power, res.phase

    memo = _Memo(solve)

    def choose(env_, obs):
        if ao_cfg.perfect_jam_knowledge:
            estimate = env_.draw_jam()
        else:
            estimate = JammerAction(dbm_to_watt(env_.prev_jam_dbm), z)
        pa, phase = memo(estimate)
        return -1, env_.apply(pa, phase)

    return choose


def _no_irs_chooser(env: AntiJammingEnv):
    cons = constraints_for(env)
    zeros = PhaseConfig.zeros(env.cfg.num_elements)
    memo = _Memo(lambda jam: optimal_pa_no_irs(env.channels, jam, cons)[0])

    def choose(env_, obs):
        return -1, env_.apply(memo(env_.draw_jam()), zeros)

    return choose


def run_realization(cfg: ExperimentConfig, approach: str, seed: int,
                    return_bundle: bool = False) -> list[EpisodeMetrics] | tuple:
    """Per-episode metrics of one approach on realization ``seed``."""
    if approach not in APPROACHES:
        raise ConfigError(f"unknown approach id {approach!r}")
    irs = approach != "no_irs"
    env = AntiJammingEnv(cfg.env_config(irs=irs), cfg.jammer_policy(), seed=seed)
    if approach in LEARNING_APPROACHES:
        bundle, records = train(
            env, cfg.learner_config(LEARNING_APPROACHES[approach]), cfg.episodes, cfg.horizon, learner_rng(seed)
        )
        return (records, bundle) if return_bundle else records
    choose = _ao_chooser(env, cfg) if approach == "ao" else _no_irs_chooser(env)
    records = [run_episode(env, cfg.horizon, choose, episode=j) for j in range(cfg.episodes)]
    return (records, None) if return_bundle else records


def _to_records(approach, var, value, seed, episodes: list[EpisodeMetrics]) -> list[MetricsRecord]:
    return [MetricsRecord(approach, var, float(value), e.episode, seed, e.rate, e.protection, e.reward) for e in episodes]


def _work(item):
    cfg, approach, seed = item
    return run_realization(cfg, approach, seed)


def _map(cfg: ExperimentConfig, items: list) -> list:
    if cfg.workers == 1 or len(items) <= 1:
        return [_work(it) for it in items]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_work, items))


def seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.base_seed + r for r in range(cfg.realizations)]


def run_convergence(cfg: ExperimentConfig) -> list[MetricsRecord]:
    """Per-episode curves of every approach on every realization."""
    items = [(cfg, a, s) for a in cfg.approaches for s in seeds(cfg)]
    out = []
    for (_, a, s), eps in zip(items, _map(cfg, items)):
        out.extend(_to_records(a, "none", 0.0, s, eps))
    return out


def final_quartile(values) -> float:
    v = np.asarray(values, dtype=float)
    q = max(1, len(v) // 4)
    return float(v[-q:].mean())


def steady_state(approach, var, value, seed, eps: list[EpisodeMetrics]) -> MetricsRecord:
    return MetricsRecord(
        approach,
        var,
        float(value),
        STEADY_STATE_EPISODE,
        seed,
        final_quartile([e.rate for e in eps]),
        min(1.0, final_quartile([e.protection for e in eps])),
        final_quartile([e.reward for e in eps]),
    )


def run_sweep(cfg: ExperimentConfig, variable: str, values) -> list[MetricsRecord]:
    """Final-quartile steady-state metrics for approaches x values x realizations."""
    if not len(values):
        raise ConfigError("sweep needs at least one value")
    cfgs = [(v, cfg.with_sweep(variable, v)) for v in values]
    items = [(c, a, s) for v, c in cfgs for a in cfg.approaches for s in seeds(cfg)]
    results = _map(cfg, items)
    out = []
    value_of = {id(c): v for v, c in cfgs}
    for (c, a, s), eps in zip(items, results):
        out.append(steady_state(a, variable, value_of[id(c)], s, eps))
    return out


# ---------------------------------------------------------------- analysis


def convergence_episode(rewards, window: int = 5, fraction: float = 0.95) -> int:
    """First episode whose trailing-window mean reaches ``fraction`` of the final-quartile mean.

    "Reaching 95 %" is measured on the reward scale, so for a negative final
    mean the threshold is ``final - 0.05 * |final|``.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("no episodes")
    final = final_quartile(r)
    threshold = final - (1.0 - fraction) * abs(final)
    csum = np.concatenate([[0.0], np.cumsum(r)])
    for j in range(r.size):
        lo = max(0, j - window + 1)
        if (csum[j + 1] - csum[lo]) / (j + 1 - lo) >= threshold:
            return j
    return r.size - 1


def group(records, *keys) -> dict:
    out: dict = {}
    for rec in records:
        out.setdefault(tuple(getattr(rec, k) for k in keys), []).append(rec)
    return out


# ---------------------------------------------------------------- CSV


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    out = f"{x:.6g}"
    return "0" if out == "-0" else out


def format_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(
            [r.approach, r.sweep_var, _fmt(r.sweep_value), _fmt(r.episode), _fmt(r.seed),
             _fmt(r.rate_bps_hz), _fmt(r.protection), _fmt(r.reward)]
        )
    return buf.getvalue()


def emit_csv(records, path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(records))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror}") from exc
    return path


def read_csv(path) -> list[MetricsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}: {header}")
        return [
            MetricsRecord(a, v, float(sv), int(e), int(s), float(r), float(p), float(w))
            for a, v, sv, e, s, r, p, w in reader
        ]


def evaluate_bundle(cfg: ExperimentConfig, bundle: LearnerBundle, seed: int, episodes: int) -> list[EpisodeMetrics]:
    """Greedy (epsilon = 0) roll-out of a trained learner on realization ``seed``, without updates."""
    env = AntiJammingEnv(cfg.env_config(), cfg.jammer_policy(), seed=seed)
    rng = learner_rng(seed)

    def choose(env_, obs):
        a = bundle.act(obs, rng, epsilon=0.0)
        return a, env_.step(a)

    return [run_episode(env, cfg.horizon, choose, episode=j) for j in range(episodes)]
