"""Monte-Carlo EPR-Bohm experiment with time-window coincidence matching.

A source emits pairs at Poisson times. For each pair, analyzer settings are
drawn uniformly (in one shared angular frame) and the joint outcome is sampled
from the quantum distribution. Each wing's click gets independent Gaussian
timing jitter and may be lost with probability ``1 - detector_efficiency``.
Correlations are then estimated only from pairs re-associated by a greedy
coincidence window, as in a real time-tagged Bell test.

Randomness comes in fixed-size shards. Shard ``k`` draws from a stream derived
from ``(seed, k)``, so any number of workers produces the same event log.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import InvalidConfig, MissingSettingPair, NoPairsAtSettings, UnsortedInput

SOURCES = ("singlet", "product")
U64_MAX = 2**64 - 1
SETTING_ATOL = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    n_pairs: int = 10_000
    pair_rate: float = 1e3
    jitter_sigma: float = 1e-4
    window: float = 1e-3
    settings_a: tuple = (0.0, math.pi / 2)
    settings_b: tuple = (math.pi / 4, 3 * math.pi / 4)
    seed: int = 0
    detector_efficiency: float = 1.0
    source: str = "singlet"
    polarization_mode: bool = False
    shard_size: int = 1 << 16

    def __post_init__(self):
        object.__setattr__(self, "settings_a", tuple(float(x) for x in self.settings_a))
        object.__setattr__(self, "settings_b", tuple(float(x) for x in self.settings_b))
        if isinstance(self.n_pairs, bool) or not isinstance(self.n_pairs, int) or self.n_pairs < 1:
            raise InvalidConfig("n_pairs", f"must be an integer >= 1, got {self.n_pairs!r}")
        if not (self.pair_rate > 0 and math.isfinite(self.pair_rate)):
            raise InvalidConfig("pair_rate", f"must be positive and finite, got {self.pair_rate!r}")
        if not (self.jitter_sigma >= 0 and math.isfinite(self.jitter_sigma)):
            raise InvalidConfig("jitter_sigma", f"must be >= 0, got {self.jitter_sigma!r}")
        if not (self.window >= 0 and math.isfinite(self.window)):
            raise InvalidConfig("window", f"must be >= 0, got {self.window!r}")
        if not (0 < self.detector_efficiency <= 1):
            raise InvalidConfig("detector_efficiency",
                                f"must lie in (0, 1], got {self.detector_efficiency!r}")
        for name in ("settings_a", "settings_b"):
            vals = getattr(self, name)
            if not vals or not all(math.isfinite(x) for x in vals):
                raise InvalidConfig(name, "must be a non-empty list of finite angles")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= U64_MAX:
            raise InvalidConfig("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.source not in SOURCES:
            raise InvalidConfig("source", f"must be one of {SOURCES}, got {self.source!r}")
        if not isinstance(self.shard_size, int) or self.shard_size < 1:
            raise InvalidConfig("shard_size", f"must be a positive integer, got {self.shard_size!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(unknown[0], "unknown configuration key")
        kwargs = dict(data)
        for key in ("pair_rate", "jitter_sigma", "window", "detector_efficiency"):
            if key in kwargs:
                val = kwargs[key]
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise InvalidConfig(key, f"must be a number, got {val!r}")
                kwargs[key] = float(val)
        for key in ("settings_a", "settings_b"):
            if key in kwargs:
                val = kwargs[key]
                if not isinstance(val, list) or any(
                        isinstance(x, bool) or not isinstance(x, (int, float)) for x in val):
                    raise InvalidConfig(key, f"must be a list of numbers, got {val!r}")
        if "polarization_mode" in kwargs and not isinstance(kwargs["polarization_mode"], bool):
            raise InvalidConfig("polarization_mode", "must be true or false")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["settings_a"] = list(self.settings_a)
        d["settings_b"] = list(self.settings_b)
        return d

    @property
    def angle_factor(self) -> float:
        """2 for photon polarization (angle doubling), 1 for spin-1/2."""
        return 2.0 if self.polarization_mode else 1.0


@dataclass(frozen=True)
class DetectionEvent:
    wing: str
    timestamp: float
    setting: float
    outcome: int


@dataclass(frozen=True)
class CoincidencePair:
    event_a: DetectionEvent
    event_b: DetectionEvent
    dt: float


@dataclass(frozen=True, eq=False)
class EventStream:
    """One wing's detections as parallel arrays, sorted by timestamp."""

    wing: str
    timestamps: np.ndarray
    settings: np.ndarray
    outcomes: np.ndarray
    pair_ids: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.timestamps)

    def event(self, i: int) -> DetectionEvent:
        return DetectionEvent(self.wing, float(self.timestamps[i]), float(self.settings[i]),
                              int(self.outcomes[i]))

    def events(self) -> Iterator[DetectionEvent]:
        for i in range(len(self)):
            yield self.event(i)

    @classmethod
    def from_timestamps(cls, wing: str, timestamps: Sequence[float]) -> "EventStream":
        t = np.asarray(timestamps, dtype=float)
        return cls(wing, t, np.zeros(len(t)), np.ones(len(t), dtype=np.int8))


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    """Counter-derived independent stream for shard ``shard`` of run ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(shard,))))


def singlet_joint_cdf(cos_term: np.ndarray) -> tuple:
    """Cumulative thresholds over outcomes (-,-), (-,+), (+,-), (+,+).

    Joint law ``P(alpha, beta) = (1 - alpha * beta * cos_term) / 4``.
    """
    p_same = (1.0 - cos_term) / 4.0
    return p_same, 0.5, 0.5 + (1.0 + cos_term) / 4.0


def _simulate_shard(cfg: ExperimentConfig, shard: int, n: int) -> dict:
    rng = shard_rng(cfg.seed, shard)
    sa = np.asarray(cfg.settings_a)
    sb = np.asarray(cfg.settings_b)
    k = cfg.angle_factor

    gaps = rng.exponential(1.0 / cfg.pair_rate, n)
    local_t = np.cumsum(gaps)
    a = sa[rng.integers(len(sa), size=n)]
    b = sb[rng.integers(len(sb), size=n)]

    if cfg.source == "singlet":
        u = rng.random(n)
        c0, c1, c2 = singlet_joint_cdf(np.cos(k * (a - b)))
        idx = (u >= c0).astype(np.int8) + (u >= c1) + (u >= c2)
        alpha = np.where(idx >= 2, 1, -1).astype(np.int8)
        beta = np.where(idx % 2 == 1, 1, -1).astype(np.int8)
    else:
        # separable mixture: spins prepared along a random in-plane direction lam and its opposite
        lam = rng.uniform(0.0, 2 * math.pi, n)
        ua = rng.random(n)
        ub = rng.random(n)
        alpha = np.where(ua < (1 + np.cos(k * (a - lam))) / 2, 1, -1).astype(np.int8)
        beta = np.where(ub < (1 - np.cos(k * (b - lam))) / 2, 1, -1).astype(np.int8)

    jit_a = rng.normal(0.0, cfg.jitter_sigma, n)
    jit_b = rng.normal(0.0, cfg.jitter_sigma, n)
    det_a = rng.random(n) < cfg.detector_efficiency
    det_b = rng.random(n) < cfg.detector_efficiency
    return dict(local_t=local_t, a=a, b=b, alpha=alpha, beta=beta,
                jit_a=jit_a, jit_b=jit_b, det_a=det_a, det_b=det_b)


def _shard_sizes(cfg: ExperimentConfig) -> list[int]:
    full, rest = divmod(cfg.n_pairs, cfg.shard_size)
    return [cfg.shard_size] * full + ([rest] if rest else [])


def run_pair_source(cfg: ExperimentConfig, workers: int = 1) -> tuple[EventStream, EventStream]:
    """Simulate the source and both detectors; returns time-sorted streams (A, B)."""
    sizes = _shard_sizes(cfg)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(lambda kn: _simulate_shard(cfg, *kn), enumerate(sizes)))
    else:
        shards = [_simulate_shard(cfg, k, n) for k, n in enumerate(sizes)]

    # offsets are a sequential prefix sum so the result is worker-count independent
    offset = 0.0
    emit = []
    for sh in shards:
        emit.append(offset + sh["local_t"])
        offset = offset + float(sh["local_t"][-1])
    t_emit = np.concatenate(emit)
    cat = {key: np.concatenate([sh[key] for sh in shards]) for key in shards[0] if key != "local_t"}
    pair_ids = np.arange(cfg.n_pairs, dtype=np.int64)

    def wing(name, setting, outcome, jitter, detected):
        t = (t_emit + jitter)[detected]
        order = np.argsort(t, kind="stable")
        return EventStream(name, t[order], setting[detected][order],
                           outcome[detected][order], pair_ids[detected][order])

    return (wing("A", cat["a"], cat["alpha"], cat["jit_a"], cat["det_a"]),
            wing("B", cat["b"], cat["beta"], cat["jit_b"], cat["det_b"]))


@dataclass(frozen=True, eq=False)
class CoincidenceResult:
    events_a: EventStream
    events_b: EventStream
    index_a: np.ndarray
    index_b: np.ndarray
    window: float

    @property
    def n_pairs(self) -> int:
        return len(self.index_a)

    @property
    def unmatched_a(self) -> int:
        return len(self.events_a) - self.n_pairs

    @property
    def unmatched_b(self) -> int:
        return len(self.events_b) - self.n_pairs

    @property
    def dt(self) -> np.ndarray:
        return self.events_a.timestamps[self.index_a] - self.events_b.timestamps[self.index_b]

    def pairs(self) -> Iterator[CoincidencePair]:
        for i, j, d in zip(self.index_a, self.index_b, self.dt):
            yield CoincidencePair(self.events_a.event(int(i)), self.events_b.event(int(j)), float(d))

    def correctly_associated(self) -> float:
        """Fraction of coincidences joining two clicks of the same emitted pair."""
        if self.events_a.pair_ids is None or self.n_pairs == 0:
            return float("nan")
        same = self.events_a.pair_ids[self.index_a] == self.events_b.pair_ids[self.index_b]
        return float(np.mean(same))


def _as_stream(x, wing: str) -> EventStream:
    return x if isinstance(x, EventStream) else EventStream.from_timestamps(wing, x)


def match_coincidences(events_a, events_b, window: float,
                       backend: str | None = None) -> CoincidenceResult:
    """Greedy earliest-first pairing of cross-wing clicks with ``|dt| < window``.

    ``events_a``/``events_b`` are :class:`EventStream` objects or plain
    timestamp sequences, each sorted ascending.
    """
    sa, sb = _as_stream(events_a, "A"), _as_stream(events_b, "B")
    for s in (sa, sb):
        if len(s) > 1 and np.any(np.diff(s.timestamps) < 0):
            raise UnsortedInput(f"wing {s.wing} timestamps are not sorted")
    if window < 0:
        raise InvalidConfig("window", f"must be >= 0, got {window!r}")
    ia, ib = kernels.greedy_match(sa.timestamps, sb.timestamps, window, backend=backend)
    return CoincidenceResult(sa, sb, ia, ib, float(window))


@dataclass(frozen=True)
class Correlation:
    setting_a: float
    setting_b: float
    value: float
    stderr: float
    n: int

    def to_json(self) -> dict:
        return {"setting_a": self.setting_a, "setting_b": self.setting_b, "E": self.value,
                "stderr": None if math.isnan(self.stderr) else self.stderr, "n": self.n}


def estimate_correlation(coincidences: CoincidenceResult, setting_a: float,
                         setting_b: float) -> Correlation:
    """Mean of ``outcome_a * outcome_b`` over pairs at the given settings.

    The standard error is the sample standard deviation over ``sqrt(n)``
    (NaN for a single pair).
    """
    sa = coincidences.events_a.settings[coincidences.index_a]
    sb = coincidences.events_b.settings[coincidences.index_b]
    mask = (np.abs(sa - setting_a) <= SETTING_ATOL) & (np.abs(sb - setting_b) <= SETTING_ATOL)
    n = int(mask.sum())
    if n == 0:
        raise NoPairsAtSettings(f"no coincidences at settings ({setting_a!r}, {setting_b!r})")
    prod = (coincidences.events_a.outcomes[coincidences.index_a][mask].astype(np.int64)
            * coincidences.events_b.outcomes[coincidences.index_b][mask])
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return Correlation(float(setting_a), float(setting_b), mean, se, n)


@dataclass(frozen=True)
class ChshValue:
    s: float
    stderr: float

    def to_json(self) -> dict:
        return {"S": self.s, "stderr": self.stderr}


def _value_and_se(e) -> tuple[float, float]:
    if e is None:
        raise MissingSettingPair("a correlation required for S is missing")
    if isinstance(e, Correlation):
        return e.value, (0.0 if math.isnan(e.stderr) else e.stderr)
    if isinstance(e, tuple):
        return float(e[0]), float(e[1])
    return float(e), 0.0


def chsh_statistic(e_ab, e_abp, e_apb, e_apbp) -> ChshValue:
    """``|E(a,b) - E(a,b') + E(a',b) + E(a',b')|`` with quadrature-propagated error.

    Each argument is a :class:`Correlation`, an ``(E, stderr)`` tuple or a bare float.
    """
    vals = [_value_and_se(e) for e in (e_ab, e_abp, e_apb, e_apbp)]
    s = abs(vals[0][0] - vals[1][0] + vals[2][0] + vals[3][0])
    se = math.sqrt(sum(v[1] ** 2 for v in vals))
    return ChshValue(s, se)


def closed_form_correlation(a: float, b: float, source: str = "singlet",
                            polarization_mode: bool = False) -> float:
    k = 2.0 if polarization_mode else 1.0
    c = -math.cos(k * (a - b))
    return c if source == "singlet" else c / 2


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    coincidences: CoincidenceResult
    correlations: tuple
    chsh: ChshValue | None

    @property
    def coincidence_fraction(self) -> float:
        return self.coincidences.n_pairs / self.config.n_pairs

    def to_json(self) -> dict:
        c = self.coincidences
        return {
            "seed": self.config.seed,
            "window": self.config.window,
            "n_pairs_emitted": self.config.n_pairs,
            "detections": {"A": len(c.events_a), "B": len(c.events_b)},
            "coincidences": c.n_pairs,
            "unmatched": {"A": c.unmatched_a, "B": c.unmatched_b},
            "coincidence_fraction": self.coincidence_fraction,
            "correlations": [e.to_json() for e in self.correlations],
            "chsh": None if self.chsh is None else self.chsh.to_json(),
            "config": self.config.to_dict(),
        }


def run_experiment(cfg: ExperimentConfig, workers: int = 1,
                   backend: str | None = None) -> ExperimentResult:
    """Source, matching, per-setting correlations and (for 2x2 settings) CHSH."""
    ev_a, ev_b = run_pair_source(cfg, workers=workers)
    coinc = match_coincidences(ev_a, ev_b, cfg.window, backend=backend)
    table = {}
    for a in cfg.settings_a:
        for b in cfg.settings_b:
            try:
                table[(a, b)] = estimate_correlation(coinc, a, b)
            except NoPairsAtSettings:
                table[(a, b)] = None
    chsh = None
    if len(cfg.settings_a) == 2 and len(cfg.settings_b) == 2 and all(table.values()):
        (a, ap), (b, bp) = cfg.settings_a, cfg.settings_b
        chsh = chsh_statistic(table[(a, b)], table[(a, bp)], table[(ap, b)], table[(ap, bp)])
    return ExperimentResult(cfg, coinc, tuple(e for e in table.values() if e is not None), chsh)


def event_log_csv(events_a: EventStream, events_b: EventStream) -> str:
    """Merged event log ``wing,timestamp,setting,outcome`` sorted by time (A before B on ties)."""
    t = np.concatenate([events_a.timestamps, events_b.timestamps])
    w = np.concatenate([np.zeros(len(events_a), dtype=np.int8), np.ones(len(events_b), dtype=np.int8)])
    s = np.concatenate([events_a.settings, events_b.settings]).tolist()
    o = np.concatenate([events_a.outcomes, events_b.outcomes]).tolist()
    order = np.lexsort((w, t)).tolist()
    tl = t.tolist()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["wing", "timestamp", "setting", "outcome"])
    names = ("A", "B")
    wl = w.tolist()
    writer.writerows((names[wl[i]], repr(tl[i]), repr(s[i]), o[i]) for i in order)
    return buf.getvalue()


def window_sweep(cfg: ExperimentConfig, windows: Sequence[float],
                 backend: str | None = None) -> list[tuple[float, float]]:
    """Coincidence fraction for each window over one simulated event record."""
    ev_a, ev_b = run_pair_source(cfg)
    return [(float(w), match_coincidences(ev_a, ev_b, w, backend).n_pairs / cfg.n_pairs)
            for w in windows]
