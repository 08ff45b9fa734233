"""Piecewise-linear-age SHS models: a finite Markov chain whose transitions
apply binary reset maps to a unit-rate age vector.

A model is the sole input to the linear-system engine in :mod:`.engine`.
Models are immutable after validation and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IndexOutOfRange, NonBinaryReset, RateNotPositive, ReducibleChain

__all__ = ["Transition", "ShsModel", "compute_a_hat", "validate_model"]


def _as_binary(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonBinaryReset(f"reset map must be square, got shape {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise NonBinaryReset("reset map entries must be 0 or 1")
    a.setflags(write=False)
    return a


def compute_a_hat(reset) -> np.ndarray:
    """Diagonal flag matrix marking age components zeroed by ``reset``.

    Entry (j, j) is 1 iff column j of the reset map is all zero, i.e. the
    post-transition component j starts fresh at age 0; all other entries
    are 0.
    """
    a = _as_binary(reset)
    hat = np.diag((a.sum(axis=0) == 0.0).astype(float))
    hat.setflags(write=False)
    return hat


@dataclass(frozen=True, eq=False)
class Transition:
    """One rated transition with its binary reset map.

    ``reset_hat`` is derived from ``reset`` on construction and cached.
    """

    id: int
    source: int
    target: int
    rate: float
    reset: np.ndarray
    reset_hat: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "reset", _as_binary(self.reset))
        object.__setattr__(self, "reset_hat", compute_a_hat(self.reset))

    def apply(self, ages) -> np.ndarray:
        """Post-transition age vector x' = x A."""
        return np.asarray(ages, dtype=float) @ self.reset


@dataclass(frozen=True, eq=False)
class ShsModel:
    """Finite state set plus rated, reset-mapped transitions.

    ``aoi_component`` names the age component carrying the age of the
    tracked source; sums over its column yield the age statistics.
    """

    states: tuple[str, ...]
    age_dim: int
    transitions: tuple[Transition, ...]
    aoi_component: int = 0

    @property
    def state_count(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        return self.states.index(label)

    def outgoing_rates(self) -> np.ndarray:
        """Total outgoing rate per state, self-transitions included."""
        out = np.zeros(self.state_count)
        for tr in self.transitions:
            out[tr.source] += tr.rate
        return out

    def incoming(self) -> list[list[Transition]]:
        """Transitions grouped by target state."""
        by_target: list[list[Transition]] = [[] for _ in range(self.state_count)]
        for tr in self.transitions:
            by_target[tr.target].append(tr)
        return by_target


def _unique_recurrent_class(model: ShsModel) -> None:
    """Reject chains without a unique recurrent class.

    Self-loops are ignored.  States outside the recurrent class are allowed
    (they carry zero stationary probability, e.g. states unreachable when an
    arrival rate is zero), but every state must be able to drain into the
    recurrent class and no state may be absorbing.
    """
    n = model.state_count
    succ: list[set[int]] = [set() for _ in range(n)]
    has_out = [False] * n
    for tr in model.transitions:
        has_out[tr.source] = True
        if tr.source != tr.target:
            succ[tr.source].add(tr.target)

    for q in range(n):
        if not has_out[q]:
            raise ReducibleChain(f"state {model.states[q]!r} has no outgoing transition")

    reach = []
    for q in range(n):
        seen = {q}
        stack = [q]
        while stack:
            for nxt in succ[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        reach.append(seen)

    # q is recurrent iff every state it can reach can reach it back
    recurrent = [q for q in range(n) if all(q in reach[p] for p in reach[q])]
    if not recurrent:
        raise ReducibleChain("no recurrent class found")
    witness = recurrent[0]
    if any(witness not in reach[q] for q in recurrent):
        raise ReducibleChain("chain has more than one recurrent class")


def validate_model(model: ShsModel) -> ShsModel:
    """Check structural invariants and return the model, canonicalized.

    Raises :class:`NonBinaryReset`, :class:`RateNotPositive`,
    :class:`IndexOutOfRange` or :class:`ReducibleChain` on malformed input.
    """
    n = model.state_count
    if n < 1:
        raise IndexOutOfRange("model needs at least one state")
    if model.age_dim < 1:
        raise IndexOutOfRange("age_dim must be positive")
    if not 0 <= model.aoi_component < model.age_dim:
        raise IndexOutOfRange(
            f"aoi_component {model.aoi_component} outside age vector of size {model.age_dim}"
        )

    transitions = []
    for tr in model.transitions:
        if not (0 <= tr.source < n) or not (0 <= tr.target < n):
            raise IndexOutOfRange(
                f"transition {tr.id}: endpoints ({tr.source}, {tr.target}) outside [0, {n})"
            )
        if not tr.rate > 0.0:
            raise RateNotPositive(f"transition {tr.id}: rate {tr.rate} is not positive")
        if tr.reset.shape != (model.age_dim, model.age_dim):
            raise NonBinaryReset(
                f"transition {tr.id}: reset map shape {tr.reset.shape} does not match "
                f"age_dim {model.age_dim}"
            )
        # reset_hat is derived in __post_init__; rebuilding keeps it honest
        transitions.append(replace(tr))

    validated = ShsModel(
        states=tuple(model.states),
        age_dim=model.age_dim,
        transitions=tuple(transitions),
        aoi_component=model.aoi_component,
    )
    _unique_recurrent_class(validated)
    return validated
