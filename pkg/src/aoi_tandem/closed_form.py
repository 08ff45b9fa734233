"""Closed-form evaluators for both policies, exactly as printed.

All expressions live in normalized variables sb = s/mu and ab = alpha/mu.
The two MGFs share a quartic denominator core

    core(sb) = sb (1-sb) (rho-sb) (rho+1-sb) + ab^2 psi1 + ab psi2

with the auxiliary polynomials psi1, psi2 of :func:`psi`.

The per-state expressions (:func:`per_state_vs_preemptive`,
:func:`per_state_vs_blocking`) are reproduced verbatim even where they are
internally inconsistent; see the DISC identifiers in :mod:`.crossval`.  The
linear-system engine is the authority on the true values, and the
comparison between the two is itself a deliverable diagnostic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import PoleProximity
from .models import PolicyKind, SystemParams

__all__ = [
    "PaperDiscrepancyWarning",
    "RationalMgf",
    "psi",
    "psi_core",
    "psi_hat",
    "mgf_preemptive",
    "mgf_blocking",
    "stationary_preemptive",
    "stationary_blocking",
    "per_state_vs_preemptive",
    "per_state_vs_blocking",
    "rational_mgf",
    "moments_closed_form",
    "reference_limits",
]


class PaperDiscrepancyWarning(UserWarning):
    """Emitted when evaluating a printed expression known to be internally
    inconsistent with the rest of the closed-form results."""


def psi(params: SystemParams, s_bar: float) -> tuple[float, float]:
    """The two auxiliary polynomials of the shared denominator core."""
    r1, r2, rho, sb = params.rho1, params.rho2, params.rho, s_bar
    psi1 = rho * sb - r1 + sb * (1.0 - sb)
    psi2 = (
        r1 * r1 * (sb - 1.0)
        + r1 * r2 * (2.0 * sb - 1.0)
        + r1 * (-1.0 + 4.0 * sb - 3.0 * sb * sb)
        + r2 * sb * (r2 + 2.0 - 3.0 * sb)
        + sb * (1.0 - 3.0 * sb + 2.0 * sb * sb)
    )
    return psi1, psi2


def psi_core(params: SystemParams, s_bar: float) -> float:
    """Shared quartic denominator core of both MGFs."""
    rho, ab, sb = params.rho, params.alpha_bar, s_bar
    psi1, psi2 = psi(params, sb)
    return sb * (1.0 - sb) * (rho - sb) * (rho + 1.0 - sb) + ab * ab * psi1 + ab * psi2


def psi_hat(params: SystemParams, s_bar: float) -> float:
    """Auxiliary polynomial of the preemptive per-state expressions."""
    r1, r2, rho, ab, sb = params.rho1, params.rho2, params.rho, params.alpha_bar, s_bar
    return (
        ab * ab
        + ab * (2.0 * rho - 2.0 - 3.0 * sb)
        + rho * rho
        + r1 * (2.0 * r2 + 2.0 - 3.0 * sb)
        + r2 * r2
        + r2 * (2.0 - 3.0 * sb)
        + 1.0
        - 3.0 * sb
        + 2.0 * sb * sb
    )


def _guard(denominator: float, scale: float, where: str) -> float:
    if abs(denominator) < 1e-12 * max(1.0, abs(scale)):
        raise PoleProximity(f"{where}: denominator {denominator:.3e} too close to zero")
    return denominator


def mgf_preemptive(params: SystemParams, s: float) -> float:
    """Source-1 age MGF under the preemptive policy."""
    sb = params.s_bar(s)
    r1, rho, ab = params.rho1, params.rho, params.alpha_bar
    num = r1 * ab * (sb - ab - rho - 1.0)
    den = psi_core(params, sb)
    scale = ab * r1 * (ab + rho + 1.0)  # |core(0)|
    return num / _guard(den, scale, "preemptive MGF")


def mgf_blocking(params: SystemParams, s: float) -> float:
    """Source-1 age MGF under the blocking policy."""
    sb = params.s_bar(s)
    r1, rho, ab = params.rho1, params.rho, params.alpha_bar
    num = r1 * ab * ab * (sb - ab - rho) * (rho + 1.0 - sb) * (ab + rho + 1.0 - sb)
    core = psi_core(params, sb)
    den = (ab - sb) * (1.0 - sb) * (ab + rho) * (rho + 1.0) * core
    scale = ab * (ab + rho) * (rho + 1.0) * ab * r1 * (ab + rho + 1.0)
    return num / _guard(den, scale, "blocking MGF")


def stationary_preemptive(params: SystemParams) -> np.ndarray:
    """The nine stationary probabilities, state order
    (00, 10, 20, 01, 11, 21, 02, 12, 22)."""
    l1, l2, mu, al = params.lambda1, params.lambda2, params.mu, params.alpha
    lam = l1 + l2
    norm = (lam + al) * (lam + mu)
    ma = mu + al
    return np.array([
        al * mu / norm,
        al * l1 * (al + mu + lam) / (ma * norm),
        al * l2 * (al + mu + lam) / (ma * norm),
        l1 * mu / norm,
        l1 * l1 * mu / (ma * norm),
        l1 * l2 * mu / (ma * norm),
        l2 * mu / norm,
        l1 * l2 * mu / (ma * norm),
        l2 * l2 * mu / (ma * norm),
    ])


def stationary_blocking(params: SystemParams) -> np.ndarray:
    """The four stationary probabilities, by position.

    Positions 0..3 follow the printed vector; positions 1 and 2 hold the
    BI and IB states respectively (the printed state numbering says the
    opposite, but only this reading satisfies the global balance), so the
    result aligns with the engine's (II, BI, IB, BB) state order.
    """
    l1, l2, mu, al = params.lambda1, params.lambda2, params.mu, params.alpha
    lam = l1 + l2
    norm = (lam + mu) * (lam + al)
    return np.array([
        al * mu / norm,
        al * lam * (al + lam + mu) / ((al + mu) * norm),
        mu * lam / norm,
        mu * lam * lam / ((al + mu) * norm),
    ])


def per_state_vs_preemptive(params: SystemParams, s: float) -> dict[str, float]:
    """Printed per-state exponential correlation components (preemptive),
    keyed by state label.

    Reproduced as printed.  Several entries are known not to match the
    engine solution (their s = 0 values disagree with the stationary
    probabilities and the total misses the MGF); they are evaluated anyway
    and flagged downstream.
    """
    sb = params.s_bar(s)
    r1, r2, rho, ab = params.rho1, params.rho2, params.rho, params.alpha_bar
    core = psi_core(params, sb)
    scale = ab * r1 * (ab + rho + 1.0)

    v00_num = r1 * ab * (sb - ab) * (1.0 - sb) * (ab + rho + 1.0 - sb)
    v00_den = (ab + rho - sb) * (1.0 + rho - sb) * core
    v00 = v00_num / _guard(v00_den, scale, "per-state v00")

    hat = psi_hat(params, sb)
    share_12 = _guard((ab + rho - sb) * (1.0 - sb) * (ab + rho + 1.0 - sb),
                      1.0, "per-state v10/v20")
    k = ab + rho + 1.0 - 2.0 * sb
    share_3 = _guard((ab + 1.0 - sb) * (1.0 - sb) * (ab + rho + 1.0 - sb),
                     1.0, "per-state v30")
    share_45 = _guard((ab + 1.0 - sb) * (ab - sb) * (1.0 - sb) * (ab + rho + 1.0 - sb),
                      1.0, "per-state v40/v50/v70/v80")
    share_6 = _guard((ab - sb) * (1.0 - sb) * (ab + rho + 1.0 - sb),
                     1.0, "per-state v60")

    return {
        "00": v00,
        "10": v00 * r1 * hat / share_12,
        "20": v00 * r2 * hat / share_12,
        "01": v00 * r1 * k / share_3,
        "11": v00 * r1 * r1 * k / share_45,
        "21": v00 * r1 * r2 * k / share_45,
        "02": v00 * r2 * k / share_6,
        "12": v00 * r1 * r2 * k / share_45,
        "22": v00 * r2 * r2 * k / share_45,
    }


def per_state_vs_blocking(params: SystemParams, s: float) -> dict[str, float]:
    """Printed per-state exponential correlation components (blocking),
    keyed by state label with positions 1 and 2 read as BI and IB.

    The BI entry is known to fail the s = 0 consistency check against the
    stationary probabilities (it gives rho*ab/((ab+1)(ab+rho)(rho+1))
    instead of pi_BI), and the four entries sum to less than the MGF; a
    :class:`PaperDiscrepancyWarning` is emitted.
    """
    warnings.warn(
        "DISC-2: the printed blocking per-state expressions are internally "
        "inconsistent (BI entry fails the s=0 check; entries do not sum to "
        "the MGF); engine values are authoritative",
        PaperDiscrepancyWarning,
        stacklevel=2,
    )
    sb = params.s_bar(s)
    r1, rho, ab = params.rho1, params.rho, params.alpha_bar
    core = psi_core(params, sb)
    scale = ab * r1 * (ab + rho + 1.0)
    shared = -(ab * ab) * r1 * (ab + rho + 1.0 - sb)
    base = _guard((ab + rho) * (rho + 1.0) * core, scale, "per-state blocking")
    return {
        "II": shared / base,
        "BI": shared * rho / (base * _guard((ab + 1.0 - sb) * (1.0 - sb), 1.0, "BI share")),
        "IB": shared * rho / (base * _guard((ab - sb) * (1.0 - sb), 1.0, "IB share")),
        "BB": shared * rho * rho
        / (base * _guard((ab - sb) * (ab + 1.0 - sb) * (1.0 - sb), 1.0, "BB share")),
    }


@dataclass(frozen=True)
class RationalMgf:
    """MGF as a ratio of polynomials in the normalized exponent sb = s/mu.

    Coefficient arrays run from the constant term upward.  ``scale`` maps
    s to sb.  Construction normalizes both polynomials so the value at 0
    is the ratio of two equal-magnitude numbers (an MGF is 1 at 0).
    """

    numerator: np.ndarray
    denominator: np.ndarray
    scale: float

    def __call__(self, s: float) -> float:
        sb = s / self.scale
        num = npoly.polyval(sb, self.numerator)
        den = npoly.polyval(sb, self.denominator)
        if abs(den) < 1e-12:
            raise PoleProximity(f"denominator {den:.3e} at s={s}")
        return num / den

    def derivatives_at_zero(self, m: int) -> list[float]:
        """d^k/ds^k of the ratio at s = 0 for k = 0..m, via the quotient
        rule on coefficient arrays: if M = N/D then M^(k) = P_k / D^(k+1)
        with P_0 = N and P_{k+1} = P_k' D - (k+1) P_k D'."""
        n, d = self.numerator, self.denominator
        dprime = npoly.polyder(d)
        p = n.copy()
        out = [float(npoly.polyval(0.0, p) / npoly.polyval(0.0, d))]
        d_at_zero = float(npoly.polyval(0.0, d))
        for k in range(1, m + 1):
            p = npoly.polysub(npoly.polymul(npoly.polyder(p), d),
                              k * npoly.polymul(p, dprime))
            value = float(npoly.polyval(0.0, p)) / d_at_zero ** (k + 1)
            out.append(value / self.scale ** k)
        return out

    def smallest_positive_pole(self, samples: int = 4096) -> float | None:
        """Smallest positive real denominator root, in s units.

        Scans up to the Cauchy coefficient bound for sign changes and
        refines by bisection; near-zero grid minima without a sign change
        (even-multiplicity roots) are accepted when the value is
        negligible against the coefficient scale.
        """
        d = np.trim_zeros(self.denominator, trim="b")
        if d.size <= 1:
            return None
        bound = 1.0 + float(np.max(np.abs(d[:-1])) / abs(d[-1]))
        grid = np.linspace(0.0, bound, samples)
        vals = npoly.polyval(grid, d)
        tol = 1e-9 * float(np.max(np.abs(d)))
        for i in range(samples - 1):
            if vals[i] == 0.0 and grid[i] > 0.0:
                return grid[i] * self.scale
            if vals[i] * vals[i + 1] < 0.0:
                lo, hi = grid[i], grid[i + 1]
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if npoly.polyval(lo, d) * npoly.polyval(mid, d) <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                return 0.5 * (lo + hi) * self.scale
            if 0.0 < abs(vals[i + 1]) < tol and 0 < i + 1 < samples - 1:
                if abs(vals[i + 1]) <= abs(vals[i]) and i + 2 < samples and abs(vals[i + 1]) <= abs(vals[i + 2]):
                    return grid[i + 1] * self.scale
        return None


def _core_polynomial(params: SystemParams) -> np.ndarray:
    """Coefficients of the shared denominator core in sb."""
    r1, r2, rho, ab = params.rho1, params.rho2, params.rho, params.alpha_bar
    quartic = npoly.polymul(
        npoly.polymul([0.0, 1.0], [1.0, -1.0]),
        npoly.polymul([rho, -1.0], [rho + 1.0, -1.0]),
    )
    psi1 = np.array([-r1, rho + 1.0, -1.0])
    psi2 = (
        npoly.polyadd(
            npoly.polyadd([-r1 * r1, r1 * r1], [-r1 * r2, 2.0 * r1 * r2]),
            npoly.polyadd([-r1, 4.0 * r1, -3.0 * r1], [0.0, r2 * (r2 + 2.0), -3.0 * r2]),
        )
    )
    psi2 = npoly.polyadd(psi2, [0.0, 1.0, -3.0, 2.0])
    return npoly.polyadd(quartic, npoly.polyadd(ab * ab * psi1, ab * psi2))


def rational_mgf(params: SystemParams, policy: PolicyKind) -> RationalMgf:
    """Polynomial form of the policy's MGF, normalized to 1 at 0."""
    r1, rho, ab = params.rho1, params.rho, params.alpha_bar
    core = _core_polynomial(params)
    if PolicyKind(policy) == PolicyKind.PREEMPTIVE:
        num = np.array([r1 * ab * (-(ab + rho + 1.0)), r1 * ab])
        den = core
    else:
        num = r1 * ab * ab * npoly.polymul(
            npoly.polymul([-(ab + rho), 1.0], [rho + 1.0, -1.0]),
            [ab + rho + 1.0, -1.0],
        )
        den = (ab + rho) * (rho + 1.0) * npoly.polymul(
            npoly.polymul([ab, -1.0], [1.0, -1.0]), core,
        )
    norm = npoly.polyval(0.0, den)
    if norm == 0.0:
        raise PoleProximity("denominator vanishes at 0")
    return RationalMgf(numerator=np.asarray(num) / norm,
                       denominator=np.asarray(den) / norm,
                       scale=params.mu)


def moments_closed_form(params: SystemParams, policy: PolicyKind, m: int) -> list[float]:
    """Raw age moments, orders 0..m, by exact differentiation of the
    rational MGF."""
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m > 8:
        raise ValueError("moment order capped at 8")
    return rational_mgf(params, policy).derivatives_at_zero(m)


@dataclass(frozen=True)
class ReferenceLimits:
    """Known limiting values of the preemptive average age."""

    instant_sink_mean: float          # alpha -> infinity (pure LCFS with preemption)
    single_source_mean: float | None  # lambda2 = 0, else None


def reference_limits(params: SystemParams) -> ReferenceLimits:
    instant = (1.0 + params.rho) / (params.mu * params.rho1)
    single = None
    if params.lambda2 == 0.0:
        single = 1.0 / params.lambda1 + 1.0 / params.mu + 1.0 / params.alpha
    return ReferenceLimits(instant_sink_mean=instant, single_source_mean=single)
