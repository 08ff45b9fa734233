"""Builders for the two tandem-server packet-management models.

Both models track the age of source 1 through a three-component age vector:

* component 0 — current age at the sink,
* component 1 — what the age would become if the sink-server packet
  finished right now,
* component 2 — what the age would become if the transmitter-server packet
  made it all the way to the sink.

Under the preemptive policy every arrival displaces the packet in service
(either server); the chain distinguishes which source occupies which server,
giving nine states.  Under the blocking policy arrivals that find the
transmitter busy are discarded, and only idle/busy occupancy matters, giving
four states.  The blocking hand-off at a busy sink server is ambiguous and is
configurable: ``REPLACE`` swaps the sink occupant for the finished packet,
``DROP`` discards the finished packet and keeps the occupant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams
from .shs import ShsModel, Transition, validate_model

__all__ = [
    "SystemParams",
    "PolicyKind",
    "SinkHandoff",
    "Policy",
    "build_preemptive",
    "build_blocking",
    "build_model",
    "swap_sources",
    "PREEMPTIVE_STATES",
    "BLOCKING_STATES",
]

PREEMPTIVE_STATES = ("00", "10", "20", "01", "11", "21", "02", "12", "22")
BLOCKING_STATES = ("II", "BI", "IB", "BB")


@dataclass(frozen=True)
class SystemParams:
    """Arrival and service rates, all in 1/time.

    ``lambda2`` may be zero (single-source analysis); the other rates must
    be positive for any analysis of source 1.
    """

    lambda1: float
    lambda2: float
    mu: float
    alpha: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "mu", "alpha"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParams(f"{name} must be finite, got {value}")
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise InvalidParams("arrival rates must be non-negative")
        if self.mu <= 0.0 or self.alpha <= 0.0:
            raise InvalidParams("service rates mu and alpha must be positive")

    @property
    def lam(self) -> float:
        """Total arrival rate."""
        return self.lambda1 + self.lambda2

    @property
    def rho1(self) -> float:
        return self.lambda1 / self.mu

    @property
    def rho2(self) -> float:
        return self.lambda2 / self.mu

    @property
    def rho(self) -> float:
        return self.rho1 + self.rho2

    @property
    def alpha_bar(self) -> float:
        """Sink rate normalized by the transmitter rate."""
        return self.alpha / self.mu

    def s_bar(self, s: float) -> float:
        """Exponent normalized by the transmitter rate."""
        return s / self.mu


class PolicyKind(str, enum.Enum):
    PREEMPTIVE = "preemptive"
    BLOCKING = "blocking"


class SinkHandoff(str, enum.Enum):
    """What a finished transmitter packet does to a busy sink server."""

    REPLACE = "replace"
    DROP = "drop"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    sink_handoff: SinkHandoff = SinkHandoff.REPLACE  # ignored for PREEMPTIVE


def _reset(*targets: str) -> np.ndarray:
    """Binary reset map from per-component assignments.

    ``targets[j]`` names the pre-transition component copied into component
    j ("x0", "x1", "x2"), or "0" for a component that starts fresh at age
    zero.
    """
    n = len(targets)
    a = np.zeros((n, n))
    for j, name in enumerate(targets):
        if name != "0":
            a[int(name[1:]), j] = 1.0
    return a


# (id, source, target, rate key, post-transition age assignments)
_PREEMPTIVE_TABLE = (
    (1, "00", "10", "l1", ("x0", "x1", "0")),
    (2, "00", "20", "l2", ("x0", "x1", "x1")),
    (3, "10", "10", "l1", ("x0", "x1", "0")),
    (4, "10", "20", "l2", ("x0", "x1", "x1")),
    (5, "10", "01", "mu", ("x0", "x2", "x2")),
    (6, "20", "10", "l1", ("x0", "x1", "0")),
    (7, "20", "02", "mu", ("x0", "x0", "x2")),
    (8, "01", "11", "l1", ("x0", "x1", "0")),
    (9, "01", "21", "l2", ("x0", "x1", "x1")),
    (10, "01", "00", "al", ("x1", "x1", "x2")),
    (11, "11", "11", "l1", ("x0", "x1", "0")),
    (12, "11", "21", "l2", ("x0", "x1", "x1")),
    (13, "11", "01", "mu", ("x0", "x2", "x2")),
    (14, "11", "10", "al", ("x1", "x1", "x2")),
    (15, "21", "11", "l1", ("x0", "x1", "0")),
    (16, "21", "02", "mu", ("x0", "x0", "x2")),
    (17, "21", "20", "al", ("x1", "x1", "x1")),
    (18, "02", "12", "l1", ("x0", "x0", "0")),
    (19, "02", "22", "l2", ("x0", "x0", "x0")),
    (20, "02", "00", "al", ("x0", "x1", "x2")),
    (21, "12", "12", "l1", ("x0", "x0", "0")),
    (22, "12", "22", "l2", ("x0", "x0", "x0")),
    (23, "12", "01", "mu", ("x0", "x2", "x2")),
    (24, "12", "10", "al", ("x0", "x1", "x2")),
    (25, "22", "12", "l1", ("x0", "x0", "0")),
    (26, "22", "02", "mu", ("x0", "x0", "x2")),
    (27, "22", "20", "al", ("x0", "x1", "x1")),
)

_BLOCKING_TABLE = (
    (1, "II", "BI", "l1", ("x0", "x1", "0")),
    (2, "II", "BI", "l2", ("x0", "x1", "x1")),
    (3, "BI", "BI", "l1", ("x0", "x1", "x2")),
    (4, "BI", "IB", "mu", ("x0", "x2", "x2")),
    (5, "IB", "II", "al", ("x1", "x1", "x2")),
    (6, "IB", "BB", "l1", ("x0", "x1", "0")),
    (7, "IB", "BB", "l2", ("x0", "x1", "x1")),
    (8, "BB", "BB", "l1", ("x0", "x1", "x2")),
    # row 9 depends on the sink hand-off variant, see build_blocking
    (10, "BB", "BI", "al", ("x1", "x1", "x2")),
)

_HANDOFF_ROW = {
    SinkHandoff.REPLACE: (9, "BB", "IB", "mu", ("x0", "x2", "x2")),
    SinkHandoff.DROP: (9, "BB", "IB", "mu", ("x0", "x1", "x2")),
}


def _build(states: tuple[str, ...], table, params: SystemParams) -> ShsModel:
    rates = {"l1": params.lambda1, "l2": params.lambda2,
             "mu": params.mu, "al": params.alpha}
    index = {label: i for i, label in enumerate(states)}
    transitions = []
    for tid, src, dst, key, targets in sorted(table):
        rate = rates[key]
        if rate == 0.0:  # zero-rate rows are omitted, states are kept
            continue
        transitions.append(Transition(
            id=tid, source=index[src], target=index[dst],
            rate=rate, reset=_reset(*targets),
        ))
    return validate_model(ShsModel(
        states=states, age_dim=3, transitions=tuple(transitions), aoi_component=0,
    ))


def _require_source1(params: SystemParams) -> None:
    if params.lambda1 <= 0.0:
        raise InvalidParams("lambda1 must be positive to analyze source 1")


def build_preemptive(params: SystemParams) -> ShsModel:
    """Nine-state preemptive model (27 transitions when both sources are
    active; the source-2 rows are omitted when lambda2 is zero)."""
    _require_source1(params)
    return _build(PREEMPTIVE_STATES, _PREEMPTIVE_TABLE, params)


def build_blocking(params: SystemParams,
                   sink_handoff: SinkHandoff = SinkHandoff.REPLACE) -> ShsModel:
    """Four-state blocking model (10 transitions when both sources are
    active) under the requested sink hand-off variant."""
    _require_source1(params)
    table = _BLOCKING_TABLE + (_HANDOFF_ROW[SinkHandoff(sink_handoff)],)
    return _build(BLOCKING_STATES, table, params)


def build_model(params: SystemParams, policy: Policy) -> ShsModel:
    if policy.kind == PolicyKind.PREEMPTIVE:
        return build_preemptive(params)
    return build_blocking(params, policy.sink_handoff)


def swap_sources(params: SystemParams) -> SystemParams:
    """Relabel the sources so that analyzing the result gives source-2 age.

    Requires lambda2 > 0, since the swapped model analyzes source 2.
    """
    if params.lambda2 <= 0.0:
        raise InvalidParams("lambda2 must be positive to analyze source 2")
    return SystemParams(lambda1=params.lambda2, lambda2=params.lambda1,
                        mu=params.mu, alpha=params.alpha)
