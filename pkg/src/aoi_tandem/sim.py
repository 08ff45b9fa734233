"""Discrete-event simulator of the two-server tandem status-update system.

The simulator is the independent oracle for the engine and the closed
forms.  It tracks the source-1 age sawtooth exactly: between events the age
grows linearly, so time averages of the age, its square, and exp(s * age)
are accumulated from closed-form segment integrals with no discretization.

Every service time and interarrival time is exponential, so residual times
are resampled after each event instead of being carried in an event
calendar (memorylessness makes the two equivalent).  Arrival streams that
cannot change the state or the statistics (blocked arrivals at a busy
transmitter; a source-2 arrival preempting a source-2 packet) are thinned
out of the event race; this leaves the law of the process unchanged and is
what ``events`` counts.

The hot loop is JIT-compiled.  Replications are seeded independently via a
SplitMix64 mix of (base seed, replication index), truncated to 32 bits
(the JIT RNG seeds a Mersenne Twister from 32 bits), and identical
configurations reproduce bit-identical estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InfeasibleEvent, InvalidConfig, MismatchedConfig
from .models import Policy, PolicyKind, SinkHandoff, SystemParams

__all__ = [
    "Arrival",
    "TransmitterDone",
    "SinkDone",
    "Packet",
    "SystemState",
    "SimConfig",
    "ReplicationResult",
    "SimEstimate",
    "replication_seed",
    "advance",
    "step",
    "path_accumulate",
    "run_simulation",
    "merge_replications",
]


# --- events and single-step dynamics -----------------------------------------

@dataclass(frozen=True)
class Arrival:
    source: int


@dataclass(frozen=True)
class TransmitterDone:
    pass


@dataclass(frozen=True)
class SinkDone:
    pass


@dataclass(frozen=True)
class Packet:
    source: int
    generated: float


@dataclass(frozen=True)
class SystemState:
    """Server occupancy plus the per-source age origins.

    ``origin[i - 1]`` is the generation time of the freshest delivered
    source-i update; the source-i age at ``clock`` is ``clock - origin``.
    """

    clock: float = 0.0
    transmitter: Packet | None = None
    sink: Packet | None = None
    origin: tuple[float, float] = (0.0, 0.0)

    def age(self, source: int = 1) -> float:
        return self.clock - self.origin[source - 1]


def advance(state: SystemState, dt: float) -> SystemState:
    """Let time pass with no event; all ages grow by ``dt``."""
    if dt < 0.0:
        raise InfeasibleEvent("cannot advance by a negative time")
    return SystemState(state.clock + dt, state.transmitter, state.sink, state.origin)


def step(state: SystemState, event, policy: Policy) -> SystemState:
    """Apply one event at ``state.clock`` and return the new state.

    Preemptive: an arrival displaces any transmitter occupant; a finished
    transmitter packet displaces any sink occupant.  Blocking: an arrival
    finding the transmitter busy is discarded; a finished transmitter
    packet meeting a busy sink either replaces the occupant or is dropped,
    per the policy's sink hand-off variant.  A sink completion always
    delivers, resetting the delivered source's age origin.
    """
    preemptive = policy.kind == PolicyKind.PREEMPTIVE
    if isinstance(event, Arrival):
        if event.source not in (1, 2):
            raise InfeasibleEvent(f"unknown source {event.source}")
        packet = Packet(event.source, state.clock)
        if preemptive or state.transmitter is None:
            return SystemState(state.clock, packet, state.sink, state.origin)
        return state  # blocked and cleared
    if isinstance(event, TransmitterDone):
        if state.transmitter is None:
            raise InfeasibleEvent("transmitter completion with an idle transmitter")
        packet = state.transmitter
        if preemptive or state.sink is None or policy.sink_handoff == SinkHandoff.REPLACE:
            return SystemState(state.clock, None, packet, state.origin)
        return SystemState(state.clock, None, state.sink, state.origin)  # dropped
    if isinstance(event, SinkDone):
        if state.sink is None:
            raise InfeasibleEvent("sink completion with an idle sink server")
        origin = list(state.origin)
        origin[state.sink.source - 1] = state.sink.generated
        return SystemState(state.clock, state.transmitter, None, tuple(origin))
    raise InfeasibleEvent(f"unknown event {event!r}")


# --- exact segment integrals ---------------------------------------------------

@njit(cache=True)
def _segment_integrals(start_age, length, s_points):
    i1 = start_age * length + 0.5 * length * length
    b = start_age + length
    a = start_age
    i2 = (b * b * b - a * a * a) / 3.0
    ie = np.empty(s_points.size)
    for k in range(s_points.size):
        s = s_points[k]
        if s == 0.0:
            ie[k] = length
        else:
            ie[k] = math.exp(s * start_age) * math.expm1(s * length) / s
    return i1, i2, ie


def path_accumulate(start_age: float, length: float, s_list) -> tuple[float, float, np.ndarray]:
    """Exact integrals of age, age^2 and exp(s * age) over one linear
    segment where the age runs from ``start_age`` to ``start_age + length``."""
    if length < 0.0:
        raise ValueError("segment length must be non-negative")
    return _segment_integrals(float(start_age), float(length),
                              np.asarray(s_list, dtype=float))


# --- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """One simulation experiment.

    ``horizon`` counts delivered source-1 packets by default
    (``horizon_mode="deliveries"``), which equalizes statistical precision
    across loads; ``horizon_mode="time"`` interprets it as simulated time.
    The first ``warmup`` fraction of the horizon is discarded.
    """

    params: SystemParams
    policy: Policy
    horizon: float
    warmup: float = 0.1
    seed: int = 0
    replications: int = 1
    mgf_points: tuple[float, ...] = ()
    horizon_mode: str = "deliveries"

    def __post_init__(self):
        if self.params.lambda1 <= 0.0:
            raise InvalidConfig("lambda1 must be positive to track source 1")
        if not self.horizon > 0.0:
            raise InvalidConfig("horizon must be positive")
        if self.horizon_mode not in ("deliveries", "time"):
            raise InvalidConfig(f"unknown horizon_mode {self.horizon_mode!r}")
        if self.horizon_mode == "deliveries" and int(self.horizon) < 1:
            raise InvalidConfig("delivery horizon must be at least one packet")
        if not 0.0 <= self.warmup < 0.5:
            raise InvalidConfig("warmup fraction must lie in [0, 0.5)")
        if int(self.replications) < 1:
            raise InvalidConfig("at least one replication is required")
        try:
            points = tuple(float(s) for s in self.mgf_points)
            policy = Policy(kind=PolicyKind(self.policy.kind),
                            sink_handoff=SinkHandoff(self.policy.sink_handoff))
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        if any(not math.isfinite(s) for s in points):
            raise InvalidConfig("mgf points must be finite")
        object.__setattr__(self, "mgf_points", points)
        object.__setattr__(self, "policy", policy)


_MASK64 = (1 << 64) - 1


def replication_seed(base_seed: int, index: int) -> int:
    """SplitMix64 mix of (base seed, replication index), reduced to 32 bits.

    z = base + (index + 1) * 0x9E3779B97F4A7C15 followed by the standard
    SplitMix64 finalizer, all mod 2^64, then truncated to the low 32 bits.
    """
    z = (int(base_seed) + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & 0xFFFFFFFF


# --- replication kernel ----------------------------------------------------------

@njit(cache=True)
def _run_replication_kernel(lam1, lam2, mu, alpha, preemptive, replace_handoff,
                            horizon, deliveries_mode, warmup, seed, s_points):
    np.random.seed(seed)
    t = 0.0
    tx_src = 0
    tx_gen = 0.0
    sk_src = 0
    sk_gen = 0.0
    origin = 0.0
    delivered = 0
    events = 0

    collecting = False
    window_start = 0.0
    int_age = 0.0
    int_age2 = 0.0
    int_exp = np.zeros(s_points.size)

    if deliveries_mode:
        target = int(horizon)
        warm_deliveries = int(warmup * horizon)
        if warm_deliveries == 0:
            collecting = True
        stats_start = 0.0
        t_end = np.inf
    else:
        target = -1
        warm_deliveries = -1
        stats_start = warmup * horizon
        if stats_start == 0.0:
            collecting = True
        t_end = horizon

    duration = 0.0
    while True:
        r1 = 0.0
        r2 = 0.0
        if preemptive:
            r1 = lam1
            if tx_src != 2:
                r2 = lam2
        elif tx_src == 0:
            r1 = lam1
            r2 = lam2
        rmu = mu if tx_src != 0 else 0.0
        ral = alpha if sk_src != 0 else 0.0
        total = r1 + r2 + rmu + ral

        dt = np.random.exponential() / total
        t_next = t + dt

        # statistics over [t, t_next), clipped to the collection window
        if collecting or (not deliveries_mode and t_next > stats_start):
            lo = t
            if not collecting:
                collecting = True
                window_start = stats_start
                lo = stats_start
            hi = t_next if t_next < t_end else t_end
            if hi > lo:
                a = lo - origin
                seg = hi - lo
                int_age += a * seg + 0.5 * seg * seg
                b = a + seg
                int_age2 += (b * b * b - a * a * a) / 3.0
                for k in range(s_points.size):
                    s = s_points[k]
                    if s == 0.0:
                        int_exp[k] += seg
                    else:
                        int_exp[k] += math.exp(s * a) * math.expm1(s * seg) / s

        if not deliveries_mode and t_next >= t_end:
            duration = t_end - stats_start
            break

        events += 1
        t = t_next
        u = np.random.random() * total
        if u < r1:
            tx_src = 1
            tx_gen = t
        elif u < r1 + r2:
            tx_src = 2
            tx_gen = t
        elif u < r1 + r2 + rmu:
            if preemptive or sk_src == 0 or replace_handoff:
                sk_src = tx_src
                sk_gen = tx_gen
            tx_src = 0
        else:
            if sk_src == 1:
                origin = sk_gen
                delivered += 1
                if deliveries_mode:
                    if not collecting and delivered == warm_deliveries:
                        collecting = True
                        window_start = t
                    if delivered >= target:
                        duration = t - window_start
                        break
            sk_src = 0

    return duration, int_age, int_age2, int_exp, delivered, events


# --- estimates --------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationResult:
    """Time-average accumulators of one replication."""

    config: SimConfig
    seed: int
    mean: float
    second_moment: float
    mgf: tuple[float, ...]
    duration: float
    deliveries: int
    events: int

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "mean": self.mean,
            "second_moment": self.second_moment,
            "mgf": list(self.mgf),
            "duration": self.duration,
            "deliveries": self.deliveries,
            "events": self.events,
        }


@dataclass(frozen=True)
class SimEstimate:
    """Aggregated simulation estimate with normal-theory 95% intervals
    across replications (``None`` with a single replication)."""

    config: SimConfig
    mean: float
    second_moment: float
    std: float
    ci95_mean: float | None
    mgf: tuple[tuple[float, float, float | None], ...]  # (s, estimate, ci95)
    events_processed: int
    per_replication: tuple[ReplicationResult, ...]

    def to_json_dict(self) -> dict:
        cfg = self.config
        return {
            "mean": self.mean,
            "second_moment": self.second_moment,
            "std": self.std,
            "ci95_mean": self.ci95_mean,
            "mgf": [{"s": s, "value": v, "ci95": c} for s, v, c in self.mgf],
            "seed": cfg.seed,
            "replications": cfg.replications,
            "horizon": cfg.horizon,
            "horizon_mode": cfg.horizon_mode,
            "warmup": cfg.warmup,
            "policy": cfg.policy.kind.value,
            "sink_handoff": cfg.policy.sink_handoff.value,
            "params": {
                "lambda1": cfg.params.lambda1,
                "lambda2": cfg.params.lambda2,
                "mu": cfg.params.mu,
                "alpha": cfg.params.alpha,
            },
            "events_processed": self.events_processed,
            "per_replication": [r.to_json_dict() for r in self.per_replication],
        }


def _replicate(config: SimConfig, index: int) -> ReplicationResult:
    seed = replication_seed(config.seed, index)
    duration, int_age, int_age2, int_exp, delivered, events = _run_replication_kernel(
        config.params.lambda1,
        config.params.lambda2,
        config.params.mu,
        config.params.alpha,
        config.policy.kind == PolicyKind.PREEMPTIVE,
        config.policy.sink_handoff == SinkHandoff.REPLACE,
        float(config.horizon),
        config.horizon_mode == "deliveries",
        config.warmup,
        seed,
        np.asarray(config.mgf_points, dtype=float),
    )
    return ReplicationResult(
        config=config,
        seed=seed,
        mean=int_age / duration,
        second_moment=int_age2 / duration,
        mgf=tuple(float(v / duration) for v in int_exp),
        duration=duration,
        deliveries=delivered,
        events=events,
    )


def _ci95(values: np.ndarray) -> float | None:
    if values.size < 2:
        return None
    return float(1.96 * values.std(ddof=1) / math.sqrt(values.size))


def merge_replications(results) -> SimEstimate:
    """Fold per-replication accumulators into one estimate.

    All accumulators must come from the same configuration; the point
    estimate is the unweighted mean across replications and the intervals
    use the replication-level sample variance.
    """
    results = tuple(results)
    if not results:
        raise MismatchedConfig("no replications to merge")
    config = results[0].config
    if any(r.config != config for r in results):
        raise MismatchedConfig("replications built from different configurations")

    means = np.array([r.mean for r in results])
    seconds = np.array([r.second_moment for r in results])
    mean = float(means.mean())
    second = float(seconds.mean())
    std = math.sqrt(max(second - mean * mean, 0.0))
    mgf = []
    for k, s in enumerate(config.mgf_points):
        vals = np.array([r.mgf[k] for r in results])
        mgf.append((float(s), float(vals.mean()), _ci95(vals)))
    return SimEstimate(
        config=config,
        mean=mean,
        second_moment=second,
        std=std,
        ci95_mean=_ci95(means),
        mgf=tuple(mgf),
        events_processed=int(sum(r.events for r in results)),
        per_replication=results,
    )


def run_simulation(config: SimConfig) -> SimEstimate:
    """Run all replications and merge them.

    Fully reproducible: the result is a pure function of the
    configuration, including its seed.
    """
    return merge_replications(_replicate(config, r) for r in range(config.replications))


# --- slow reference driver (used by the test suite) -------------------------------

def _reference_replication(config: SimConfig, index: int) -> ReplicationResult:
    """Pure-Python mirror of the kernel built on :func:`step`.

    Draws from a ``RandomState`` seeded identically to the kernel's
    generator, so the event sequence (and therefore every accumulated
    statistic) matches the kernel bit for bit.  Only suitable for short
    horizons.
    """
    if config.horizon_mode != "deliveries" or config.warmup != 0.0:
        raise InvalidConfig("reference driver supports delivery horizons without warmup")
    seed = replication_seed(config.seed, index)
    rng = np.random.RandomState(seed)
    params, policy = config.params, config.policy
    preemptive = policy.kind == PolicyKind.PREEMPTIVE
    s_points = np.asarray(config.mgf_points, dtype=float)

    state = SystemState()
    target = int(config.horizon)
    delivered = 0
    events = 0
    int_age = 0.0
    int_age2 = 0.0
    int_exp = np.zeros(s_points.size)

    while True:
        tx, sink = state.transmitter, state.sink
        r1 = r2 = 0.0
        if preemptive:
            r1 = params.lambda1
            if tx is None or tx.source != 2:
                r2 = params.lambda2
        elif tx is None:
            r1, r2 = params.lambda1, params.lambda2
        rmu = params.mu if tx is not None else 0.0
        ral = params.alpha if sink is not None else 0.0
        total = r1 + r2 + rmu + ral

        dt = rng.exponential() / total
        i1, i2, ie = path_accumulate(state.age(1), dt, s_points)
        int_age += i1
        int_age2 += i2
        int_exp += ie

        events += 1
        state = advance(state, dt)
        u = rng.random_sample() * total
        if u < r1:
            state = step(state, Arrival(1), policy)
        elif u < r1 + r2:
            state = step(state, Arrival(2), policy)
        elif u < r1 + r2 + rmu:
            state = step(state, TransmitterDone(), policy)
        else:
            delivers_source1 = sink is not None and sink.source == 1
            state = step(state, SinkDone(), policy)
            if delivers_source1:
                delivered += 1
                if delivered >= target:
                    break

    duration = state.clock
    return ReplicationResult(
        config=config,
        seed=seed,
        mean=int_age / duration,
        second_moment=int_age2 / duration,
        mgf=tuple(float(v / duration) for v in int_exp),
        duration=duration,
        deliveries=delivered,
        events=events,
    )
