"""Episodic anti-jamming environment: state quantization, joint actions, jammer behaviour."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import (
    DEFAULT_JAMMER_REGION,
    DEFAULT_UE_REGION,
    ChannelSet,
    Geometry,
    PathLossParams,
    PhaseConfig,
    TWO_PI,
    dbm_to_watt,
    effective_channels,
    effective_rows,
    sample_channels,
    watt_to_dbm,
)
from .signals import (
    JammerAction,
    PowerAllocation,
    RewardParams,
    gain_matrix,
    outage_indicator,
    random_directions,
    reward_parts,
    sinr_from_parts,
    transmit_beamformers,
    worst_case_directions,
)

JAM_RANGE_DBM = (15.0, 40.0)
SINR_FLOOR_DB = -100.0
SINR_CACHE_SIZE = 200_000


# ---------------------------------------------------------------- actions


@dataclass(frozen=True)
class JointAction:
    power_profile_id: int
    # None is the NO-OP; (m, level) sets element m to level * 2 pi / N_theta.
    phase_move: tuple[int, int] | None = None
    # Codebook mode only: index of the phase configuration to load.
    codeword: int | None = None


@dataclass(frozen=True)
class ActionSpaceConfig:
    num_users: int = 2
    p_max: float = 1.0  # watts
    n_power_levels: int = 4
    num_elements: int = 8
    n_phase_levels: int = 4
    mode: str = "incremental"  # or "codebook"
    codebook_size: int = 6
    max_actions: int = 4096


class ActionSpace:
    """Power profiles x phase moves, enumerated lexicographically (profile-major)."""

    def __init__(self, cfg: ActionSpaceConfig):
        if cfg.n_power_levels < 2:
            raise ValueError("need at least two power levels")
        if cfg.mode not in ("incremental", "codebook"):
            raise ValueError(f"unknown action mode {cfg.mode!r}")
        self.cfg = cfg
        top = cfg.n_power_levels - 1
        levels = [
            lv for lv in itertools.product(range(cfg.n_power_levels), repeat=cfg.num_users) if sum(lv) <= top
        ]
        self.profile_levels = np.array(levels, dtype=int).reshape(-1, cfg.num_users)
        self.profiles = self.profile_levels * (cfg.p_max / top)
        if cfg.mode == "incremental":
            self.moves: list = [None] + [
                (m, lv) for m in range(cfg.num_elements) for lv in range(cfg.n_phase_levels)
            ]
        else:
            self.moves = list(range(cfg.codebook_size))
        size = len(self.profiles) * len(self.moves)
        if size > cfg.max_actions:
            raise ValueError(f"action space has {size} actions, above the cap of {cfg.max_actions}")
        if size == 0:
            raise ValueError("empty action space")

    def __len__(self) -> int:
        return len(self.profiles) * len(self.moves)

    @property
    def num_moves(self) -> int:
        return len(self.moves)

    def split(self, index: int) -> tuple[int, int]:
        if not 0 <= index < len(self):
            raise IndexError(f"action {index} outside [0, {len(self)})")
        return divmod(int(index), len(self.moves))

    def decode(self, index: int) -> JointAction:
        pid, mid = self.split(index)
        move = self.moves[mid]
        if self.cfg.mode == "codebook":
            return JointAction(pid, None, move)
        return JointAction(pid, move)

    def encode(self, action: JointAction) -> int:
        key = action.codeword if self.cfg.mode == "codebook" else action.phase_move
        return action.power_profile_id * len(self.moves) + self.moves.index(key)

    def actions(self) -> list[JointAction]:
        return [self.decode(i) for i in range(len(self))]


def build_action_space(cfg: ActionSpaceConfig) -> list[JointAction]:
    return ActionSpace(cfg).actions()


# ---------------------------------------------------------------- states


@dataclass(frozen=True)
class FeatureBins:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 1 or not self.hi > self.lo:
            raise ValueError(f"bad bin spec {self}")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n

    def position(self, v) -> np.ndarray:
        """Continuous position in bin units; bin i covers [i, i + 1)."""
        v = np.asarray(v, dtype=float)
        if np.any(np.isnan(v)):
            raise ValueError("NaN state feature")
        return (v - self.lo) / self.width

    def index(self, v) -> np.ndarray:
        return np.clip(np.floor(self.position(v)), 0, self.n - 1).astype(int)

    def center(self, i) -> np.ndarray:
        return self.lo + (np.asarray(i) + 0.5) * self.width


@dataclass(frozen=True)
class StateBinsConfig:
    jam: FeatureBins = FeatureBins(15.0, 40.0, 3)  # previous jamming power, dBm
    gain: FeatureBins = FeatureBins(-6.0, 6.0, 3)  # effective gain vs. reset config, dB
    sinr: FeatureBins = FeatureBins(-10.0, 10.0, 4)  # previous SINR margin over target, dB
    max_states: int = 10_000

    def features(self) -> tuple[FeatureBins, FeatureBins, FeatureBins]:
        return (self.jam, self.gain, self.sinr)

    def radix(self, K: int) -> np.ndarray:
        return np.repeat([b.n for b in self.features()], K)

    def num_states(self, K: int) -> int:
        return int(np.prod(self.radix(K)))


@dataclass(frozen=True)
class SystemState:
    jam_power_bins: tuple[int, ...]
    chan_gain_bins: tuple[int, ...]
    sinr_bins: tuple[int, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.jam_power_bins, self.chan_gain_bins, self.sinr_bins]).astype(int)

    def index(self, bins: StateBinsConfig) -> int:
        return int(np.ravel_multi_index(self.flat(), bins.radix(len(self.jam_power_bins))))


def quantize_state(raw, bins: StateBinsConfig) -> SystemState:
    """Uniform binning of (jam dBm, gain dB, SINR margin dB), clamped to the end bins."""
    jam, gain, margin = (np.atleast_1d(np.asarray(r, dtype=float)) for r in raw)
    return SystemState(
        tuple(int(i) for i in bins.jam.index(jam)),
        tuple(int(i) for i in bins.gain.index(gain)),
        tuple(int(i) for i in bins.sinr.index(margin)),
    )


def dequantize_center(state: SystemState, bins: StateBinsConfig):
    return (
        bins.jam.center(state.jam_power_bins),
        bins.gain.center(state.chan_gain_bins),
        bins.sinr.center(state.sinr_bins),
    )


@dataclass
class Observation:
    state: SystemState
    index: int
    positions: np.ndarray  # continuous bin positions, same order as SystemState.flat()
    raw: tuple[np.ndarray, np.ndarray, np.ndarray]


# ---------------------------------------------------------------- jammer


@dataclass(frozen=True)
class JammerPolicy:
    kind: str = "random"  # constant | random | sweep | reactive
    power_grid_dbm: tuple[float, ...] = (15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    level_dbm: float = 30.0
    direction: str = "worst"  # worst | random
    reactive_alpha: float = 0.5
    reactive_epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "random", "sweep", "reactive"):
            raise ValueError(f"unknown jammer kind {self.kind!r}")
        if self.direction not in ("worst", "random"):
            raise ValueError(f"unknown jamming direction {self.direction!r}")
        levels = list(self.power_grid_dbm) + ([self.level_dbm] if self.kind == "constant" else [])
        lo, hi = JAM_RANGE_DBM
        if not levels or any(not lo <= v <= hi for v in levels):
            raise ValueError(f"jamming levels must lie in [{lo}, {hi}] dBm")


class Jammer:
    """Stateful jammer. REACTIVE runs a stateless epsilon-greedy Q-learner over
    per-UE level tuples, rewarded with the negated legitimate reward."""

    def __init__(self, policy: JammerPolicy, num_users: int, rng: np.random.Generator):
        self.policy = policy
        self.K = num_users
        self.rng = rng
        self.grid = np.asarray(policy.power_grid_dbm, dtype=float)
        self.t = 0
        self.last_choice: int | None = None
        if policy.kind == "reactive":
            self.choices = np.array(list(itertools.product(range(len(self.grid)), repeat=num_users)))
            self.q = np.zeros(len(self.choices))

    def levels_dbm(self) -> np.ndarray:
        kind = self.policy.kind
        if kind == "constant":
            return np.full(self.K, self.policy.level_dbm)
        if kind == "random":
            return self.grid[self.rng.integers(len(self.grid), size=self.K)]
        if kind == "sweep":
            return np.full(self.K, self.grid[self.t % len(self.grid)])
        from .learning import egreedy_select

        self.last_choice = egreedy_select(self.q, self.policy.reactive_epsilon, self.rng)
        return self.grid[self.choices[self.last_choice]]

    def act(self, ch: ChannelSet) -> JammerAction:
        dbm = self.levels_dbm()
        self.t += 1
        if self.policy.direction == "worst":
            z = worst_case_directions(ch)
        else:
            z = random_directions(self.K, ch.h_J.shape[1], self.rng)
        return JammerAction(dbm_to_watt(dbm), z)

    def observe(self, legit_reward: float) -> None:
        if self.policy.kind == "reactive" and self.last_choice is not None:
            a = self.last_choice
            self.q[a] = (1 - self.policy.reactive_alpha) * self.q[a] + self.policy.reactive_alpha * (-legit_reward)
            self.last_choice = None


# ---------------------------------------------------------------- environment


def coordinate_ascent_levels(score, init, n_levels: int, max_passes: int = 3) -> np.ndarray:
    """Element-wise search over quantized phase levels; a level is kept only on strict improvement."""
    levels = np.array(init, dtype=int)
    best = score(levels)
    for _ in range(max_passes):
        improved = False
        for m in range(levels.shape[0]):
            for lv in range(n_levels):
                if lv == levels[m]:
                    continue
                trial = levels.copy()
                trial[m] = lv
                val = score(trial)
                if val > best:
                    levels, best, improved = trial, val, True
        if not improved:
            break
    return levels


@dataclass(frozen=True)
class EnvConfig:
    num_antennas: int = 4
    num_elements: int = 8
    num_users: int = 2
    num_jammer_antennas: int = 4
    p_max_dbm: float = 30.0
    sinr_min_db: float = 10.0
    noise_dbm: float = -105.0
    pathloss: PathLossParams = PathLossParams(convention="as_printed")
    ue_region: tuple = DEFAULT_UE_REGION
    jammer_region: tuple = DEFAULT_JAMMER_REGION
    n_power_levels: int = 4
    n_phase_levels: int = 4
    action_mode: str = "incremental"
    codebook_size: int = 6
    max_actions: int = 4096
    beamforming: str = "mrt"
    bins: StateBinsConfig = StateBinsConfig()
    lambda1: float = 1.0
    lambda2: float = 2.0
    jam_estimation_noise_db: float = 0.0
    redraw_per_episode: bool = False
    irs_enabled: bool = True
    phase_reset: str = "realization"  # or "episode"

    def __post_init__(self):
        if self.phase_reset not in ("realization", "episode"):
            raise ValueError(f"unknown phase reset mode {self.phase_reset!r}")
        if self.beamforming not in ("mrt", "mmse"):
            raise ValueError(f"unknown beamforming mode {self.beamforming!r}")

    @property
    def p_max(self) -> float:
        return float(dbm_to_watt(self.p_max_dbm))

    @property
    def noise(self) -> float:
        return float(dbm_to_watt(self.noise_dbm))

    def action_space_config(self) -> ActionSpaceConfig:
        return ActionSpaceConfig(
            num_users=self.num_users,
            p_max=self.p_max,
            n_power_levels=self.n_power_levels,
            num_elements=self.num_elements,
            n_phase_levels=self.n_phase_levels,
            mode=self.action_mode,
            codebook_size=self.codebook_size,
            max_actions=self.max_actions,
        )


@dataclass
class StepOutcome:
    next_obs: Observation
    reward: float
    sinrs: np.ndarray
    rate: float
    protected: np.ndarray
    powers_used: PowerAllocation
    jam_powers: np.ndarray  # watts
    parts: tuple[float, float, float] = (0.0, 0.0, 0.0)
    action: int | None = None

    @property
    def next_state(self) -> SystemState:
        return self.next_obs.state


def protection_level(outcomes: Sequence[StepOutcome]) -> float:
    """Fraction of (slot, user) pairs meeting their SINR target."""
    if len(outcomes) == 0:
        raise ValueError("empty evaluation window")
    return float(np.mean([np.mean(o.protected) for o in outcomes]))


def realization_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named random streams for one realization."""
    children = np.random.SeedSequence(seed).spawn(4)
    return {
        name: np.random.default_rng(ss)
        for name, ss in zip(("geometry", "channels", "jammer", "env"), children)
    }


class AntiJammingEnv:
    """One realization of the IRS-assisted downlink under jamming.

    Channels are fixed for the lifetime of the instance unless
    ``redraw_per_episode`` is set; the phase configuration persists across
    slots and is reset to zero at every :meth:`reset`.
    """

    def __init__(self, cfg: EnvConfig, jammer: JammerPolicy, seed: int = 0, log: bool = False):
        self.cfg = cfg
        self.jammer_policy = jammer
        self.seed = seed
        streams = realization_streams(seed)
        self._chan_rng = streams["channels"]
        self._rng = streams["env"]
        self.geometry = Geometry.random(
            cfg.num_users, streams["geometry"], ue_region=cfg.ue_region, jammer_region=cfg.jammer_region
        )
        self.space = ActionSpace(cfg.action_space_config())
        self.bins = cfg.bins
        self.radix = cfg.bins.radix(cfg.num_users)
        self.strides = np.array([int(np.prod(self.radix[i + 1 :])) for i in range(len(self.radix))])
        if cfg.bins.num_states(cfg.num_users) > cfg.bins.max_states:
            raise ValueError(
                f"{cfg.bins.num_states(cfg.num_users)} discrete states exceed the cap of {cfg.bins.max_states}"
            )
        self.rp = RewardParams(
            sinr_min=np.full(cfg.num_users, 10.0 ** (cfg.sinr_min_db / 10.0)),
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
        )
        self.jammer = Jammer(jammer, cfg.num_users, streams["jammer"])
        self.log_enabled = log
        self.trajectory: list[dict] = []
        self._draw_channels()
        self.t = 0
        self.phase = PhaseConfig.zeros(cfg.num_elements)
        self.pending_jam: JammerAction | None = None
        self.prev_jam_dbm = np.full(cfg.num_users, float(np.min(jammer.power_grid_dbm)))
        self.prev_sinr_db = np.full(cfg.num_users, SINR_FLOOR_DB)
        self.last_obs: Observation | None = None

    # -- channels

    def _draw_channels(self) -> None:
        c = self.cfg
        ch = sample_channels(
            self.geometry,
            c.pathloss,
            (c.num_antennas, c.num_elements, c.num_users, c.num_jammer_antennas),
            self._chan_rng,
        )
        self.full_channels = ch
        self._sinr_cache: dict = {}
        self._gain_cache: dict = {}
        self.channels = ch if c.irs_enabled else ch.without_irs()
        self.reference_gain_db = 10 * np.log10(
            np.linalg.norm(effective_channels(self.channels, PhaseConfig.zeros(c.num_elements)), axis=1) ** 2
        )
        self.codebook = self._build_codebook() if c.action_mode == "codebook" else []

    def _build_codebook(self) -> list[PhaseConfig]:
        """Zero phases, then gain-maximizing configurations, then random fill.

        The designed entries are, in order: one per UE maximizing that UE's
        effective gain, one maximizing the total gain and one maximizing the
        weakest UE's gain. Each is found by coordinate ascent over the
        quantized levels starting from per-UE co-phasing.
        """
        c = self.cfg
        lv = c.n_phase_levels
        ch = self.channels
        book = [PhaseConfig.zeros(c.num_elements)]
        co_phased = []
        for k in range(c.num_users):
            terms = ch.g_ru[k].conj()[:, None] * ch.G  # (M, N)
            ref = ch.g_bu[k].conj()
            if np.linalg.norm(ref) == 0:
                ref = terms.sum(axis=0)
            theta = -np.angle(terms @ ref.conj()) % TWO_PI
            co_phased.append(np.round(theta / TWO_PI * lv).astype(int) % lv)

        def gains(levels):
            return np.linalg.norm(effective_rows(ch, PhaseConfig.from_levels(levels, lv)), axis=1) ** 2

        targets = [lambda g, k=k: g[k] for k in range(c.num_users)] + [np.sum, np.min]
        starts = co_phased + [co_phased[0], co_phased[0]]
        for score, init in zip(targets, starts):
            book.append(PhaseConfig.from_levels(coordinate_ascent_levels(lambda l: score(gains(l)), init, lv), lv))
        while len(book) < c.codebook_size:
            book.append(PhaseConfig.from_levels(self._rng.integers(lv, size=c.num_elements), lv))
        return book[: c.codebook_size]

    # -- observation

    def gains_db(self, phase: PhaseConfig | None = None) -> np.ndarray:
        phase = self.phase if phase is None else phase
        key = phase.theta.tobytes()
        hit = self._gain_cache.get(key)
        if hit is None:
            if len(self._gain_cache) >= SINR_CACHE_SIZE:
                self._gain_cache.clear()
            H = effective_channels(self.channels, phase)
            hit = self._gain_cache[key] = 10 * np.log10(np.linalg.norm(H, axis=1) ** 2)
        return hit

    def observe(self) -> Observation:
        jam = self.prev_jam_dbm
        if self.cfg.jam_estimation_noise_db > 0:
            jam = jam + self._rng.normal(0.0, self.cfg.jam_estimation_noise_db, size=jam.shape)
        gain = self.gains_db() - self.reference_gain_db
        margin = self.prev_sinr_db - self.cfg.sinr_min_db
        raw = (np.asarray(jam, dtype=float), gain, margin)
        positions = np.concatenate([b.position(r) for b, r in zip(self.bins.features(), raw)])
        flat = np.clip(np.floor(positions), 0, self.radix - 1).astype(int)
        K = self.cfg.num_users
        state = SystemState(tuple(flat[:K].tolist()), tuple(flat[K : 2 * K].tolist()), tuple(flat[2 * K :].tolist()))
        return Observation(state, int(flat @ self.strides), positions, raw)

    def reset(self) -> Observation:
        """Start an episode.

        The first call (or every call with ``phase_reset="episode"``) zeroes
        the phases and the slot history; later calls continue the realization
        from where the previous episode stopped.
        """
        fresh = self.t == 0 or self.cfg.phase_reset == "episode" or self.cfg.redraw_per_episode
        if self.cfg.redraw_per_episode and self.t > 0:
            self._draw_channels()
        if fresh:
            self.phase = PhaseConfig.zeros(self.cfg.num_elements)
            self.prev_jam_dbm = np.full(self.cfg.num_users, float(np.min(self.jammer_policy.power_grid_dbm)))
            self.prev_sinr_db = np.full(self.cfg.num_users, SINR_FLOOR_DB)
        self.pending_jam = None
        self.last_obs = self.observe()
        return self.last_obs

    # -- dynamics

    def draw_jam(self) -> JammerAction:
        """Jammer action for the current slot; idempotent until the slot is applied."""
        if self.pending_jam is None:
            self.pending_jam = self.jammer.act(self.channels)
        return self.pending_jam

    def apply_move(self, index: int) -> int:
        """Apply the phase part of ``index`` and return its power-profile id."""
        pid, mid = self.space.split(index)
        move = self.space.moves[mid]
        if self.cfg.action_mode == "codebook":
            self.phase = self.codebook[move].copy()
        elif move is not None:
            m, level = move
            theta = self.phase.theta.copy()
            theta[m] = TWO_PI * level / self.cfg.n_phase_levels
            self.phase = PhaseConfig(theta)
        return pid

    def step(self, index: int) -> StepOutcome:
        pid = self.apply_move(index)
        out = self.apply(PowerAllocation(self.space.profiles[pid]), self.phase)
        out.action = int(index)
        if self.log_enabled:
            self.trajectory[-1]["action"] = int(index)
        return out

    def evaluate(self, pa: PowerAllocation, phase: PhaseConfig, jam: JammerAction, channels=None):
        """SINRs of every UE for a given decision, without advancing time."""
        ch = self.channels if channels is None else channels
        H = effective_channels(ch, phase)
        W = transmit_beamformers(ch, phase, self.cfg.beamforming, pa.p, self.cfg.noise, h_eff=H)
        return sinr_from_parts(gain_matrix(H, W), pa.p, jam.received(ch), self.cfg.noise)

    def _cached_sinrs(self, pa: PowerAllocation, phase: PhaseConfig, jam: JammerAction) -> np.ndarray:
        # channels are static between redraws, so a decision and jamming pair always gives the same SINRs
        key = (phase.theta.tobytes(), pa.p.tobytes(), jam.p_j.tobytes(), jam.z.tobytes())
        hit = self._sinr_cache.get(key)
        if hit is None:
            if len(self._sinr_cache) >= SINR_CACHE_SIZE:
                self._sinr_cache.clear()
            hit = self._sinr_cache[key] = self.evaluate(pa, phase, jam)
        return hit.copy()

    def apply(self, pa: PowerAllocation, phase: PhaseConfig) -> StepOutcome:
        pa.check(self.cfg.p_max)
        self.phase = phase
        jam = self.draw_jam()
        if np.all(pa.p == 0):
            sinrs = np.zeros(self.cfg.num_users)
        else:
            sinrs = self._cached_sinrs(pa, phase, jam)
        parts = reward_parts(sinrs, pa, self.rp)
        r = parts[0] - parts[1] - parts[2]
        protected = outage_indicator(sinrs, self.rp) == 0
        self.jammer.observe(r)
        before = self.last_obs
        self.prev_jam_dbm = watt_to_dbm(jam.p_j)
        with np.errstate(divide="ignore"):
            self.prev_sinr_db = np.maximum(10 * np.log10(sinrs), SINR_FLOOR_DB)
        self.pending_jam = None
        self.t += 1
        nxt = self.observe()
        self.last_obs = nxt
        if self.log_enabled:
            self.trajectory.append(
                {
                    "t": self.t - 1,
                    "state": None if before is None else before.state.flat().tolist(),
                    "action": None,
                    "reward": r,
                    "sinr_db": self.prev_sinr_db.tolist(),
                    "jam_dbm": self.prev_jam_dbm.tolist(),
                    "powers": pa.p.tolist(),
                    "next_state": nxt.state.flat().tolist(),
                }
            )
        return StepOutcome(
            next_obs=nxt,
            reward=r,
            sinrs=sinrs,
            rate=parts[0],
            protected=protected,
            powers_used=pa,
            jam_powers=jam.p_j,
            parts=parts,
        )
