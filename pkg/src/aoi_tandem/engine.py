"""Dense linear-system engine for age statistics of a validated SHS model.

Everything reduces to three families of linear systems over the per-state
correlation vectors:

* stationary balance           pi_q * sum(out rates) = sum(in rates * pi)
* first moments (order 1)      v_q * sum(out) = pi_q * 1 + sum(in) v * A
* exponential order (at s)     v_q * (sum(out) - s) = sum(in) [v * A + pi * 1 * A_hat]

and, for higher moments, the order-k derivative of the exponential system at
s = 0:

    w^k_q * sum(out) = k * w^{k-1}_q + sum(in) w^k * A,    w^0_q = pi_q * 1.

Systems are at most a few dozen unknowns; dense LU with partial pivoting is
used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainExceeded, NegativeSolution, SingularSystem
from .shs import ShsModel

__all__ = [
    "CorrelationVectors",
    "SolveReport",
    "stationary_distribution",
    "first_moment_vectors",
    "mgf_vectors",
    "mgf",
    "aoi_moments",
    "mgf_domain_bound",
    "finite_difference_mean",
    "solve",
]

# Residual thresholds (relative): balance/moment solves must be essentially
# exact; the exponential system is allowed to degrade before it is declared
# out of domain.
_RESIDUAL_STRICT = 1e-9
_RESIDUAL_MGF = 1e-6
_NONNEG_TOL = -1e-10     # exact-zero components sit on the boundary
_POSITIVITY_TOL = -1e-8
MAX_MOMENT_ORDER = 8


@dataclass(frozen=True)
class CorrelationVectors:
    """Per-state age correlation vectors.

    ``order`` is the derivative order of the exponential system these solve:
    0 for the vectors at some exponent ``s``, 1 for plain first moments,
    k for the k-th derivative at s = 0.
    """

    values: np.ndarray  # shape (state_count, age_dim)
    order: int
    s: float = 0.0


@dataclass(frozen=True)
class SolveReport:
    """Full engine output for one model."""

    pi: np.ndarray
    avg_aoi: float
    moments: list[float]
    mgf_samples: list[tuple[float, float]]
    domain_bound: float
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _relative_residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(a @ x - b, ord=np.inf)
    den = np.linalg.norm(a, ord=np.inf) * np.linalg.norm(x, ord=np.inf)
    den += np.linalg.norm(b, ord=np.inf)
    return float(num / den) if den > 0.0 else float(num)


def _solve_dense(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("solution is not finite")
    return x, _relative_residual(a, x, b)


def _balance_system(model: ShsModel) -> tuple[np.ndarray, np.ndarray]:
    """Balance equations with the last row replaced by normalization.

    The raw balance system is rank deficient by one; replacing the row of
    the highest-index state keeps it square and well conditioned.
    """
    n = model.state_count
    a = np.zeros((n, n))
    a[np.arange(n), np.arange(n)] = model.outgoing_rates()
    for tr in model.transitions:
        a[tr.target, tr.source] -= tr.rate
    a[n - 1, :] = 1.0
    b = np.zeros(n)
    b[n - 1] = 1.0
    return a, b


def _stationary(model: ShsModel) -> tuple[np.ndarray, float]:
    pi, residual = _solve_dense(*_balance_system(model))
    if residual > _RESIDUAL_STRICT:
        raise SingularSystem(f"balance residual {residual:.3e} exceeds {_RESIDUAL_STRICT:.0e}")
    if np.any(pi < _NONNEG_TOL):
        raise SingularSystem("stationary vector has negative entries")
    return np.clip(pi, 0.0, None), residual


def stationary_distribution(model: ShsModel) -> np.ndarray:
    """Stationary probabilities of the embedded Markov chain."""
    return _stationary(model)[0]


def _assemble_lhs(model: ShsModel, s: float) -> np.ndarray:
    """Matrix of the stacked per-component system, unknowns flattened
    state-major: x[q * age_dim + j] = v_q[j]."""
    nst, dim = model.state_count, model.age_dim
    n = nst * dim
    a = np.zeros((n, n))
    out = model.outgoing_rates()
    for q in range(nst):
        for j in range(dim):
            a[q * dim + j, q * dim + j] = out[q] - s
    for tr in model.transitions:
        rows = slice(tr.target * dim, (tr.target + 1) * dim)
        cols = slice(tr.source * dim, (tr.source + 1) * dim)
        a[rows, cols] -= tr.rate * tr.reset.T
    return a


def _solve_stacked(model: ShsModel, s: float, b: np.ndarray) -> tuple[np.ndarray, float]:
    x, residual = _solve_dense(_assemble_lhs(model, s), b.reshape(-1))
    return x.reshape(model.state_count, model.age_dim), residual


def _first_moments(model: ShsModel, pi: np.ndarray) -> tuple[np.ndarray, float]:
    b = np.repeat(np.asarray(pi, dtype=float)[:, None], model.age_dim, axis=1)
    v, residual = _solve_stacked(model, 0.0, b)
    if residual > _RESIDUAL_STRICT:
        raise SingularSystem(f"first-moment residual {residual:.3e}")
    if np.any(v < _NONNEG_TOL):
        raise NegativeSolution("first-moment vectors have negative components")
    return v, residual


def first_moment_vectors(model: ShsModel, pi: np.ndarray) -> tuple[CorrelationVectors, float]:
    """Non-negative first-moment vectors and the resulting average age.

    Raises :class:`NegativeSolution` when the system has no non-negative
    solution, which signals an inadmissible model.
    """
    v, _ = _first_moments(model, pi)
    avg = float(v[:, model.aoi_component].sum())
    return CorrelationVectors(values=v, order=1), avg


def mgf_vectors(model: ShsModel, pi: np.ndarray, s: float) -> CorrelationVectors:
    """Exponential correlation vectors at exponent ``s``.

    Raises :class:`DomainExceeded` when the system is singular, leaves a
    large residual, or produces negative components; all three indicate
    s at or beyond the domain bound.
    """
    nst, dim = model.state_count, model.age_dim
    b = np.zeros((nst, dim))
    for target, incoming in enumerate(model.incoming()):
        for tr in incoming:
            b[target] += tr.rate * pi[tr.source] * np.diag(tr.reset_hat)
    try:
        v, residual = _solve_stacked(model, s, b)
    except SingularSystem as exc:
        raise DomainExceeded(f"exponent {s}: {exc}") from exc
    if residual > _RESIDUAL_MGF:
        raise DomainExceeded(f"exponent {s}: residual {residual:.3e}")
    if np.any(v < _POSITIVITY_TOL):
        raise DomainExceeded(f"exponent {s}: negative components in solution")
    return CorrelationVectors(values=np.clip(v, 0.0, None), order=0, s=s)


def mgf(model: ShsModel, s: float, pi: np.ndarray | None = None) -> float:
    """MGF of the tracked age component at exponent ``s``."""
    if pi is None:
        pi = stationary_distribution(model)
    vectors = mgf_vectors(model, pi, s)
    return float(vectors.values[:, model.aoi_component].sum())


def aoi_moments(model: ShsModel, m: int, pi: np.ndarray | None = None) -> list[float]:
    """Raw moments of the tracked age, orders 0 through ``m``.

    Computed by repeatedly differentiating the exponential system at s = 0;
    the order-1 system coincides with the first-moment system.
    """
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m > MAX_MOMENT_ORDER:
        raise ValueError(f"moment order {m} exceeds the conditioning guard {MAX_MOMENT_ORDER}")
    if pi is None:
        pi = stationary_distribution(model)
    w = np.repeat(np.asarray(pi, dtype=float)[:, None], model.age_dim, axis=1)
    moments = [float(pi.sum())]
    for k in range(1, m + 1):
        w, residual = _solve_stacked(model, 0.0, k * w)
        if residual > _RESIDUAL_STRICT:
            raise SingularSystem(f"order-{k} moment residual {residual:.3e}")
        moments.append(float(w[:, model.aoi_component].sum()))
    return moments


def mgf_domain_bound(model: ShsModel, pi: np.ndarray | None = None,
                     rel_tol: float = 1e-9, max_iter: int = 200) -> float:
    """Numerical estimate of the largest workable MGF exponent.

    Bisects on [0, min total outgoing rate] using the engine's own
    out-of-domain signal.  The returned value is a verified-good exponent
    (the true bound is at least as large) and is always positive.
    """
    if pi is None:
        pi = stationary_distribution(model)
    hi = float(model.outgoing_rates().min())

    def ok(s: float) -> bool:
        try:
            mgf_vectors(model, pi, s)
        except DomainExceeded:
            return False
        return True

    if ok(hi):
        return hi
    lo, bad = 0.0, hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + bad)
        if ok(mid):
            lo = mid
        else:
            bad = mid
        if bad - lo <= rel_tol * hi:
            break
    return lo


def finite_difference_mean(model: ShsModel, h: float = 1e-5,
                           pi: np.ndarray | None = None) -> float:
    """Central finite difference of the MGF at 0; a cross-check for the
    order-1 moment."""
    if pi is None:
        pi = stationary_distribution(model)
    return (mgf(model, h, pi) - mgf(model, -h, pi)) / (2.0 * h)


def solve(model: ShsModel, s_values: tuple[float, ...] = (),
          moment_order: int = 2) -> SolveReport:
    """One-stop solve: stationary vector, moments, MGF samples, bound."""
    residuals: dict[str, float] = {}
    pi, residuals["stationary"] = _stationary(model)
    v, residuals["first_moment"] = _first_moments(model, pi)
    avg = float(v[:, model.aoi_component].sum())
    moments = aoi_moments(model, moment_order, pi)
    samples = [(float(s), mgf(model, s, pi)) for s in s_values]
    bound = mgf_domain_bound(model, pi)
    return SolveReport(
        pi=pi,
        avg_aoi=avg,
        moments=moments,
        mgf_samples=samples,
        domain_bound=bound,
        residuals=residuals,
    )
