"""Oscillating reaction terms built from disjoint bumps.

A bump nonlinearity is a nonnegative continuous f supported on a finite
union of disjoint intervals [a_k, b_k], each bump carrying a prescribed
mass m_k = integral of f over the bump.  The primitive F is then a
staircase of cumulative masses with closed-form circular-segment ramps.

Two families are provided:

* ``factorial_bumps``  intervals centered at k!(k+2)/2 with half-width
  1/(4(k+1)!) and masses (k+1)!^p - k!^p, oscillating at infinity.  The
  probe ratios F(b_k)/b_k^p approach 2^p from below while F(a_{k+1})/
  a_{k+1}^p decays to zero, which is what opens the multiplier interval.
* ``geometric_origin_bumps`` / ``origin_bumps``  intervals accumulating
  at zero for the oscillation-at-the-origin experiments.

The default bump profile is a semicircle vanishing at both endpoints, so f
is continuous with 1/2-Hoelder modulus at the endpoints.  A wider circular
arc (radius exceeding the half-width, hence a jump at the endpoints) is
kept behind ``profile="wide-arc"`` for comparison; the masses, the only
quantity the multiplicity analysis consumes, are identical either way.

Факtorial growth outruns double precision quickly, so masses, primitive
values and probe positions are all carried in the log domain as well: an
object whose pointwise data no longer fit in floats (masses past the float
range, or intervals narrower than one ulp of their midpoint, which happens
from k = 11 on) can still be built with ``log_domain=True`` and then
serves the oscillation diagnostics only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "BumpNonlinearity",
    "OscillationDiagnostics",
    "factorial_bumps",
    "origin_bumps",
    "geometric_origin_bumps",
    "positive_part",
    "oscillation_diagnostics",
]

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class BumpNonlinearity:
    """Piecewise bump reaction term; arrays are ascending in position.

    starts/ends: bump intervals; masses: integral of f per bump;
    log_starts/log_ends/log_masses: always finite; arc_radii: profile
    radius >= half-width (equality = endpoint-vanishing semicircle).
    evaluable is False for log-domain-only objects (pointwise f and F
    unavailable, probe ratios still exact).
    """

    starts: np.ndarray
    ends: np.ndarray
    masses: np.ndarray
    log_starts: np.ndarray
    log_ends: np.ndarray
    log_masses: np.ndarray
    arc_radii: np.ndarray
    oscillation_end: str          # "infinity" or "origin"
    k_max: int
    limit_ratio: Optional[float] = None   # known limit of F(b_k)/b_k^p
    label: str = "bumps"
    evaluable: bool = True

    def __post_init__(self):
        if self.oscillation_end not in ("infinity", "origin"):
            raise ValueError(f"unknown oscillation end {self.oscillation_end!r}")
        if len(self.starts) == 0:
            raise ValueError("at least one bump is required")
        if np.any(np.diff(self.log_starts) <= 0):
            raise ValueError("bump intervals must be strictly increasing")
        if self.evaluable:
            a, b = self.starts, self.ends
            if not (np.all(a < b) and np.all(a[1:] > b[:-1])):
                raise ValueError("bump intervals must be disjoint and increasing")
            if np.any(a < 0):
                raise ValueError("bumps must live on the positive half-line")
            w = 0.5 * (b - a)
            if np.any(self.arc_radii < w * (1.0 - 1e-9)):
                raise ValueError("arc radius below half-width")

    # -- derived geometry ---------------------------------------------------

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.starts + self.ends)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.ends - self.starts)

    @property
    def cumulative_masses(self) -> np.ndarray:
        """cumulative_masses[i] = total mass of bumps 0..i-1 (length k+1)."""
        return np.concatenate([[0.0], np.cumsum(self.masses)])

    @property
    def profile_normalizations(self) -> np.ndarray:
        """Integral of the unscaled arc sqrt(R^2 - z^2) over one bump."""
        w, r = self.half_widths, self.arc_radii
        return w * np.sqrt(np.maximum(r * r - w * w, 0.0)) + r * r * np.arcsin(
            np.clip(w / r, -1.0, 1.0))

    @property
    def is_continuous(self) -> bool:
        """True when every profile vanishes at its endpoints."""
        return bool(np.all(self.arc_radii <= self.half_widths * (1 + 1e-9)))

    # -- evaluation ----------------------------------------------------------

    def f(self, t) -> np.ndarray:
        """Reaction term; vanishes outside the bumps and on t <= 0."""
        self._require_evaluable("f")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.starts, t, side="right") - 1
        ii = np.maximum(idx, 0)
        inside = (idx >= 0) & (t > self.starts[ii]) & (t < self.ends[ii])
        z = t - self.mids[ii]
        r = self.arc_radii[ii]
        arc = np.sqrt(np.maximum(r * r - z * z, 0.0))
        return np.where(inside,
                        self.masses[ii] * arc / self.profile_normalizations[ii],
                        0.0)

    def F(self, t) -> np.ndarray:
        """Primitive int_0^t f; constant between bumps, zero for t <= 0."""
        self._require_evaluable("F")
        t = np.maximum(np.atleast_1d(np.asarray(t, dtype=float)), 0.0)
        cum = self.cumulative_masses
        complete = np.searchsorted(self.ends, t, side="right")
        out = cum[complete].copy()
        idx = np.searchsorted(self.starts, t, side="right") - 1
        ii = np.maximum(idx, 0)
        inside = (idx >= 0) & (idx >= complete)
        w = self.half_widths[ii]
        r = self.arc_radii[ii]
        z = np.clip(t - self.mids[ii], -w, w)
        # circular segment: int_{-w}^{z} sqrt(R^2 - x^2) dx, closed form
        seg = 0.5 * (z * np.sqrt(np.maximum(r * r - z * z, 0.0))
                     + r * r * np.arcsin(np.clip(z / r, -1.0, 1.0)))
        seg_lo = 0.5 * (-w * np.sqrt(np.maximum(r * r - w * w, 0.0))
                        + r * r * np.arcsin(np.clip(-w / r, -1.0, 1.0)))
        partial = self.masses[ii] * (seg - seg_lo) / self.profile_normalizations[ii]
        return out + np.where(inside, partial, 0.0)

    def f_prime(self, t) -> np.ndarray:
        """Derivative of f inside bumps (unbounded at semicircle endpoints)."""
        self._require_evaluable("f_prime")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.starts, t, side="right") - 1
        ii = np.maximum(idx, 0)
        inside = (idx >= 0) & (t > self.starts[ii]) & (t < self.ends[ii])
        z = t - self.mids[ii]
        r = self.arc_radii[ii]
        arc = np.sqrt(np.maximum(r * r - z * z, 1e-300))
        return np.where(inside,
                        -self.masses[ii] * z / (arc * self.profile_normalizations[ii]),
                        0.0)

    def _require_evaluable(self, op: str) -> None:
        if not self.evaluable:
            raise OverflowError(
                f"{op}: this truncation exceeds double precision (masses or "
                f"interval widths); only log-domain diagnostics are available"
            )

    # -- structural probe values (log-domain, safe at any truncation) --------

    def log_F_at_ends(self) -> np.ndarray:
        """log F(b_k) per bump via a cumulative log-sum-exp."""
        out = np.empty(len(self.log_masses))
        running = -math.inf
        for i, v in enumerate(self.log_masses):
            running = np.logaddexp(running, v)
            out[i] = running
        return out

    def probe_ratio_at_end(self, k: int, p: float) -> float:
        """F(b_k) / b_k^p computed in the log domain."""
        logF = self.log_F_at_ends()[k]
        return math.exp(logF - p * self.log_ends[k])

    def probe_ratio_at_gap(self, k: int, p: float) -> float:
        """F just before bump k+1 starts, over a_{k+1}^p (log domain)."""
        if k + 1 >= len(self.starts):
            raise IndexError("no gap above the last bump")
        logF = self.log_F_at_ends()[k]
        return math.exp(logF - p * self.log_starts[k + 1])

    def table_rows(self, p: float) -> list:
        """(k, a_k, b_k, m_k, F(b_k), F(b_k)/b_k^p, F(a_{k+1})/a_{k+1}^p)."""
        logF = self.log_F_at_ends()
        rows = []
        for i in range(len(self.starts)):
            fb = math.exp(logF[i]) if logF[i] < _LOG_FLOAT_MAX else math.inf
            ratio_b = self.probe_ratio_at_end(i, p)
            ratio_a = (self.probe_ratio_at_gap(i, p)
                       if i + 1 < len(self.starts) else math.nan)
            rows.append((i + 1, self.starts[i], self.ends[i],
                         self.masses[i], fb, ratio_b, ratio_a))
        return rows


@dataclass(frozen=True)
class OscillationDiagnostics:
    """Finite-trend proxies for the two oscillation limits.

    a_limit_estimate is the smallest gap-probe ratio (liminf proxy),
    b_limit_estimate the largest bump-end ratio (limsup proxy); probe_rows
    carry the per-bump trend ordered toward the oscillation end so the
    caller can judge convergence.  No claim about the true limits is made.
    """

    a_limit_estimate: float
    b_limit_estimate: float
    probe_rows: list
    end: str

    def __post_init__(self):
        if not self.a_limit_estimate <= self.b_limit_estimate + 1e-15:
            raise AssertionError("liminf proxy exceeded limsup proxy")


def oscillation_diagnostics(nl: BumpNonlinearity, p: float,
                            end: Optional[str] = None) -> OscillationDiagnostics:
    """Probe F(t)/t^p at the structural points b_k and just below a_{k+1}.

    For these nondecreasing primitives max over |z| <= t of F(z) equals
    F(t), so one probe family serves both limits.  Requires at least three
    bumps so a trend is visible.
    """
    end = end or nl.oscillation_end
    if end not in ("infinity", "origin"):
        raise ValueError(f"unknown oscillation end {end!r}")
    k = len(nl.starts)
    if k < 3:
        raise ValueError(f"need at least 3 bumps for a trend, got {k}")
    ratios_b = [nl.probe_ratio_at_end(i, p) for i in range(k)]
    ratios_a = [nl.probe_ratio_at_gap(i, p) for i in range(k - 1)]
    rows = []
    order = range(k) if end == "infinity" else range(k - 1, -1, -1)
    for i in order:
        t_b = nl.ends[i]
        t_a = nl.starts[i + 1] if i + 1 < k else math.nan
        rows.append((i + 1, t_b, ratios_b[i],
                     t_a, ratios_a[i] if i + 1 < k else math.nan))
    return OscillationDiagnostics(
        a_limit_estimate=float(min(ratios_a)),
        b_limit_estimate=float(max(ratios_b)),
        probe_rows=rows,
        end=end,
    )


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def factorial_bumps(p: float, k_max: int, profile: str = "semicircle",
                    log_domain: bool = False) -> BumpNonlinearity:
    """Bump family with factorial spacing, oscillating at infinity.

    Bump k (k = 1..k_max) occupies [a_k, b_k] with

        a_k = (2 k!(k+2)! - 1) / (4 (k+1)!)
        b_k = (2 k!(k+2)! + 1) / (4 (k+1)!)

    (midpoint k!(k+2)/2, half-width 1/(4(k+1)!)) and carries mass
    (k+1)!^p - k!^p.  Interval endpoints are exact rationals evaluated in
    integer arithmetic; masses are exact integers when p is integral.

    With profile "wide-arc" the arc radius is 1/(4 sqrt((k+1)!)), which
    exceeds the half-width, so f jumps at the endpoints; the default
    semicircle uses radius = half-width and is continuous.

    Raises OverflowError unless ``log_domain=True`` when the truncation
    outgrows double precision: masses past the float range, or intervals
    narrower than the float spacing at their midpoint (k >= 11).  The
    log-domain object supports the oscillation diagnostics only.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    if profile not in ("semicircle", "wide-arc"):
        raise ValueError(f"unknown profile {profile!r}")

    starts, ends, radii = [], [], []
    log_starts, log_ends = [], []
    log_masses, masses = [], []
    p_is_int = float(p).is_integer()
    for k in range(1, k_max + 1):
        fk = math.factorial(k)
        fk1 = math.factorial(k + 1)
        fk2 = math.factorial(k + 2)
        num_a = 2 * fk * fk2 - 1
        num_b = 2 * fk * fk2 + 1
        den = 4 * fk1
        starts.append(_int_ratio(num_a, den))
        ends.append(_int_ratio(num_b, den))
        log_starts.append(_log_int(num_a) - _log_int(den))
        log_ends.append(_log_int(num_b) - _log_int(den))
        half_width = 0.5 * (ends[-1] - starts[-1])
        radii.append(half_width if profile == "semicircle"
                     else max(0.25 / math.sqrt(fk1), half_width))
        # log m_k = p log (k+1)! + log(1 - (k+1)^(-p))
        lm = p * math.lgamma(k + 2) + math.log1p(-float(k + 1) ** (-p))
        log_masses.append(lm)
        if p_is_int and lm < _LOG_FLOAT_MAX:
            masses.append(float(fk1 ** int(p) - fk ** int(p)))
        else:
            masses.append(math.exp(lm) if lm < _LOG_FLOAT_MAX else math.inf)

    positions_ok = all(a < b for a, b in zip(starts, ends))
    masses_ok = all(math.isfinite(m) for m in masses)
    evaluable = positions_ok and masses_ok
    if not evaluable and not log_domain:
        reason = ("(k_max+1)!^p overflows the float range"
                  if not masses_ok else
                  "bump intervals fall below double-precision resolution")
        raise OverflowError(
            f"{reason} at k_max = {k_max}; pass log_domain=True to keep "
            f"log-domain diagnostics only"
        )
    return BumpNonlinearity(
        starts=np.array(starts), ends=np.array(ends),
        masses=np.array(masses),
        log_starts=np.array(log_starts), log_ends=np.array(log_ends),
        log_masses=np.array(log_masses),
        arc_radii=np.array(radii),
        oscillation_end="infinity", k_max=k_max,
        limit_ratio=2.0 ** p,
        label=f"factorial(p={p:g}, k_max={k_max}, {profile})",
        evaluable=evaluable,
    )


def _int_ratio(num: int, den: int) -> float:
    """Correctly rounded float of an exact integer ratio."""
    try:
        return num / den
    except OverflowError:
        return math.exp(_log_int(num) - _log_int(den))


def _log_int(n: int) -> float:
    """log of a (possibly huge) positive integer."""
    if n.bit_length() <= 900:
        return math.log(n)
    shift = n.bit_length() - 900
    return math.log(n >> shift) + shift * math.log(2.0)


def origin_bumps(starts: Sequence[float], widths: Sequence[float],
                 masses: Sequence[float], label: str = "origin") -> BumpNonlinearity:
    """General bump family accumulating at the origin.

    The caller supplies strictly decreasing bump starts a_k (toward 0),
    widths, and masses; overlapping intervals are rejected.
    """
    a = np.asarray(starts, dtype=float)
    w = np.asarray(widths, dtype=float)
    m = np.asarray(masses, dtype=float)
    if len(a) == 0:
        raise ValueError("empty bump specification")
    if not (len(a) == len(w) == len(m)):
        raise ValueError("starts, widths, masses must have equal length")
    if np.any(a <= 0):
        raise ValueError("bump starts must be positive")
    if np.any(np.diff(a) >= 0):
        raise ValueError("bump starts must strictly decrease toward 0")
    if np.any(w <= 0) or np.any(m <= 0):
        raise ValueError("widths and masses must be positive")
    b = a + w
    if np.any(b[1:] >= a[:-1]):
        raise ValueError("bump intervals overlap")
    order = np.argsort(a)
    a, b, m = a[order], b[order], m[order]
    return BumpNonlinearity(
        starts=a, ends=b, masses=m,
        log_starts=np.log(a), log_ends=np.log(b), log_masses=np.log(m),
        arc_radii=0.5 * (b - a),
        oscillation_end="origin", k_max=len(a), label=label,
    )


def geometric_origin_bumps(p: float, k_max: int, base: float = 4.0,
                           mass_base: float = 8.0) -> BumpNonlinearity:
    """Origin family: a_k = base^-k, width base^-k / 2, m_k = mass_base^(-k p)."""
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if base <= 2.0:
        raise ValueError("base must exceed 2 so the intervals stay disjoint")
    kk = np.arange(1, k_max + 1, dtype=float)
    return origin_bumps(base ** (-kk), base ** (-kk) / 2.0,
                        mass_base ** (-kk * p),
                        label=f"geometric-origin(p={p:g}, k_max={k_max}, "
                              f"base={base:g}, mass_base={mass_base:g})")


def positive_part(f: Callable) -> Callable:
    """Truncation f+ : t -> f(t) for t > 0, 0 for t <= 0.

    Warns when f(0) != 0 since the truncation is then discontinuous at 0.
    Idempotent on nonnegative-through-zero inputs.
    """
    f0 = float(np.atleast_1d(f(0.0))[0])
    if f0 != 0.0:
        warnings.warn(
            f"f(0) = {f0:g} != 0: the positive-part truncation is "
            f"discontinuous at 0",
            stacklevel=2,
        )

    def clipped(t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t1 = np.atleast_1d(t)
        out = np.where(t1 > 0.0, np.atleast_1d(f(t1)), 0.0)
        return out[0] if scalar else out

    return clipped
