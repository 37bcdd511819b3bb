"""Problem data and every closed-form constant of the variational setup.

The nonlocal Dirichlet problem lives on a bounded domain with a weight
alpha and a multiplier lambda.  All admissibility hypotheses (p*s > N,
positive inradius, essentially bounded weight) are enforced here, and the
explicit constants that control the multiplicity analysis are evaluated
exactly:

* ``kappa``              coefficient of the cone-function seminorm bound
* ``unit_ball_volume``   omega_N
* ``geometric_constant`` the constant C comparing the two oscillation limits
* ``lambda_interval``    the admissible multiplier interval (lambda1, lambda2)
* ``estimate_embedding_constant``  discrete lower estimate of the sup-norm
  embedding constant K, which has no known closed form.

Infinite quantities (a divergent oscillation limit, an unbounded multiplier
interval) are represented by ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize as _scipy_minimize
from scipy.special import gammaln

__all__ = [
    "DomainSpec",
    "WeightSpec",
    "ProblemParams",
    "ConstantSet",
    "LambdaInterval",
    "kappa",
    "unit_ball_volume",
    "geometric_constant",
    "lambda_interval",
    "estimate_embedding_constant",
]


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in dimension n: pi^(n/2) / Gamma(n/2 + 1)."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0))


def kappa(p: float, n_dim: int, s: float) -> float:
    """Coefficient of the cone test-function seminorm bound.

    The Gagliardo seminorm (p-th power) of the cone of inradius tau is
    bounded by ``kappa(p, N, s) * omega_N**2 * tau**(N - p*s)``.  The value
    is the sum of three explicit terms; it is strictly positive whenever
    p*s > N.

    Evaluated in extended precision (``np.longdouble``) because the third
    term is a difference that loses digits when p*s approaches N.
    """
    _check_hypotheses(p, n_dim, s)
    pl = np.longdouble(p)
    nl = np.longdouble(n_dim)
    sl = np.longdouble(s)
    ln2 = np.log(np.longdouble(2.0))
    ps = pl * sl
    t1 = np.exp((pl * (3.0 - sl) - nl) * ln2) / pl * (1.0 - np.exp(-nl * ln2)) ** 2
    t2 = np.exp((2.0 + ps - nl) * ln2) / (ps * (nl + pl * (1.0 - sl)))
    # 1 - 2**(ps - N) written via expm1 to avoid cancellation near ps = N
    t3 = 2.0 / ((nl - ps) * ps) * (-np.expm1((ps - nl) * ln2))
    return float(t1 + t2 + t3)


def _check_hypotheses(p: float, n_dim: int, s: float) -> None:
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must satisfy 0 < s < 1, got s = {s}")
    if p <= 1.0:
        raise ValueError(f"exponent must satisfy p > 1, got p = {p}")
    if n_dim < 1:
        raise ValueError(f"dimension must be >= 1, got N = {n_dim}")
    if p * s <= n_dim:
        raise ValueError(
            f"hypothesis p > N/s violated: p*s = {p * s:.6g} <= N = {n_dim}"
        )


@dataclass(frozen=True)
class DomainSpec:
    """Bounded domain: an interval, a ball, or an axis-aligned box.

    Carries the derived geometry the constants need: Lebesgue measure,
    inradius tau and Chebyshev center x0 (deepest interior point).
    """

    kind: str
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = ()
    radius: float = 0.0

    @staticmethod
    def interval(a: float, b: float) -> "DomainSpec":
        if not b > a:
            raise ValueError(f"interval needs b > a, got ({a}, {b})")
        return DomainSpec(kind="interval", lo=(float(a),), hi=(float(b),))

    @staticmethod
    def ball(center: Sequence[float], radius: float) -> "DomainSpec":
        if radius <= 0:
            raise ValueError(f"ball radius must be positive, got {radius}")
        return DomainSpec(kind="ball", center=tuple(float(c) for c in center),
                          radius=float(radius))

    @staticmethod
    def box(lo: Sequence[float], hi: Sequence[float]) -> "DomainSpec":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box needs matching nonempty lo/hi")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"box needs hi > lo per axis, got {lo}, {hi}")
        return DomainSpec(kind="box", lo=lo, hi=hi)

    @property
    def dimension(self) -> int:
        if self.kind == "interval":
            return 1
        if self.kind == "ball":
            return len(self.center)
        return len(self.lo)

    @property
    def measure(self) -> float:
        if self.kind == "interval":
            return self.hi[0] - self.lo[0]
        if self.kind == "ball":
            n = self.dimension
            return unit_ball_volume(n) * self.radius ** n
        return float(np.prod([h - l for l, h in zip(self.lo, self.hi)]))

    @property
    def inradius(self) -> float:
        """tau = sup over x in the domain of dist(x, boundary)."""
        if self.kind == "interval":
            return 0.5 * (self.hi[0] - self.lo[0])
        if self.kind == "ball":
            return self.radius
        return 0.5 * min(h - l for l, h in zip(self.lo, self.hi))

    @property
    def chebyshev_center(self) -> tuple:
        if self.kind == "interval":
            return (0.5 * (self.lo[0] + self.hi[0]),)
        if self.kind == "ball":
            return self.center
        return tuple(0.5 * (l + h) for l, h in zip(self.lo, self.hi))

    def sample_points(self, count: int) -> np.ndarray:
        """Deterministic dense sample of the domain, shape (m, dimension).

        Used to estimate essential bounds of a user-supplied weight.
        """
        n = self.dimension
        if self.kind == "interval":
            a, b = self.lo[0], self.hi[0]
            pts = np.linspace(a, b, count + 2)[1:-1]
            return pts[:, None]
        per_axis = max(2, int(round(count ** (1.0 / n))))
        if self.kind == "box":
            axes = [np.linspace(l, h, per_axis + 2)[1:-1]
                    for l, h in zip(self.lo, self.hi)]
        else:
            c = np.asarray(self.center)
            axes = [np.linspace(ci - self.radius, ci + self.radius, per_axis + 2)[1:-1]
                    for ci in c]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        if self.kind == "ball":
            keep = np.linalg.norm(mesh - np.asarray(self.center), axis=1) < self.radius
            mesh = mesh[keep]
        return mesh


@dataclass(frozen=True)
class WeightSpec:
    """Essentially bounded positive weight alpha with its essential bounds.

    For a constant weight the bounds are closed-form; otherwise they are
    estimated by dense sampling (the sample count is recorded so reports
    can state the provenance).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    alpha0: float
    alpha_inf: float
    sample_count: int = 0
    label: str = "alpha"

    def __post_init__(self):
        if not (0.0 < self.alpha0 <= self.alpha_inf < math.inf):
            raise ValueError(
                f"weight bounds must satisfy 0 < alpha0 <= alpha_inf < inf, "
                f"got ({self.alpha0}, {self.alpha_inf})"
            )

    @staticmethod
    def constant(value: float) -> "WeightSpec":
        if value <= 0:
            raise ValueError(f"constant weight must be positive, got {value}")
        v = float(value)
        return WeightSpec(evaluator=lambda x: np.full(np.shape(x)[0] if np.ndim(x) else 1, v),
                          alpha0=v, alpha_inf=v, label=f"constant({v:g})")

    @staticmethod
    def from_callable(fn: Callable[[np.ndarray], np.ndarray],
                      domain: DomainSpec,
                      samples: int = 10_000,
                      label: str = "alpha") -> "WeightSpec":
        pts = domain.sample_points(samples)
        arg = pts[:, 0] if domain.dimension == 1 else pts
        vals = np.asarray(fn(arg), dtype=float)
        a0, ainf = float(vals.min()), float(vals.max())
        return WeightSpec(evaluator=fn, alpha0=a0, alpha_inf=ainf,
                          sample_count=len(vals), label=label)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(x), dtype=float)


@dataclass(frozen=True)
class ProblemParams:
    """Full parameter set of the nonlocal problem.

    Rejects any violation of the standing hypotheses at construction so
    every downstream computation can assume admissibility.
    """

    s: float
    p: float
    domain: DomainSpec
    alpha: WeightSpec
    lam: float = 0.0

    def __post_init__(self):
        _check_hypotheses(self.p, self.domain.dimension, self.s)
        if self.domain.measure <= 0:
            raise ValueError("domain measure must be positive")
        if self.domain.inradius <= 0:
            raise ValueError("domain inradius must be positive")

    @property
    def n_dim(self) -> int:
        return self.domain.dimension

    @property
    def ps(self) -> float:
        return self.p * self.s

    @property
    def tau(self) -> float:
        return self.domain.inradius

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(s=self.s, p=self.p, domain=self.domain,
                             alpha=self.alpha, lam=lam)


def geometric_constant(params: ProblemParams, K: float) -> float:
    """Constant C comparing the oscillation limits.

    The multiplier interval is nonempty exactly when the liminf-type limit
    A is below C times the limsup-type limit B.
    """
    if K <= 0:
        raise ValueError(f"embedding constant must be positive, got K = {K}")
    n = params.n_dim
    kap = kappa(params.p, n, params.s)
    om = unit_ball_volume(n)
    tau = params.tau
    return (tau ** params.ps
            / (2.0 ** n * kap * K ** params.p * params.domain.measure * om)
            * (params.alpha.alpha0 / params.alpha.alpha_inf))


@dataclass(frozen=True)
class LambdaInterval:
    """Admissible multiplier interval (lower, upper); upper may be inf."""

    lower: float
    upper: float

    @property
    def is_empty(self) -> bool:
        return not self.lower < self.upper

    def contains(self, lam: float) -> bool:
        return self.lower < lam < self.upper


def lambda_interval(params: ProblemParams, a_limit: float, b_limit: float,
                    K: float) -> LambdaInterval:
    """Multiplier interval (lambda1, lambda2) from the oscillation limits.

    lambda1 = kappa * omega_N * 2^N / (p * tau^(p*s) * alpha0 * B) and
    lambda2 = 1 / (p * ||alpha||_inf * |Omega| * K^p * A).  A divergent B
    gives lambda1 = 0; a vanishing A gives lambda2 = inf; B = 0 degenerates
    to an empty interval.
    """
    if K <= 0:
        raise ValueError(f"embedding constant must be positive, got K = {K}")
    if a_limit < 0:
        raise ValueError(f"A limit must be nonnegative, got {a_limit}")
    if b_limit < 0:
        raise ValueError(f"B limit must be nonnegative, got {b_limit}")
    n = params.n_dim
    kap = kappa(params.p, n, params.s)
    om = unit_ball_volume(n)
    if b_limit == 0.0:
        lam1 = math.inf
    elif math.isinf(b_limit):
        lam1 = 0.0
    else:
        lam1 = (kap * om * 2.0 ** n
                / (params.p * params.tau ** params.ps * params.alpha.alpha0 * b_limit))
    if a_limit == 0.0:
        lam2 = math.inf
    else:
        lam2 = 1.0 / (params.p * params.alpha.alpha_inf * params.domain.measure
                      * K ** params.p * a_limit)
    return LambdaInterval(lower=lam1, upper=lam2)


@dataclass
class ConstantSet:
    """Every constant of the setup plus the provenance of the K estimate."""

    kappa: float
    omega_n: float
    tau: float
    measure: float
    alpha0: float
    alpha_inf: float
    k_est: float
    constant_c: float
    interval: LambdaInterval
    a_limit: float
    b_limit: float
    k_grid_nodes: int = 0
    alpha_samples: int = 0

    def rows(self) -> list:
        """(key, value, units, provenance) rows for the report writer."""
        kp = (f"discrete estimate, grid n={self.k_grid_nodes}"
              if self.k_grid_nodes else "caller supplied")
        ap = (f"sampled at {self.alpha_samples} points"
              if self.alpha_samples else "closed form")
        return [
            ("kappa", self.kappa, "1", "closed form"),
            ("omega_N", self.omega_n, "1", "closed form"),
            ("tau", self.tau, "length", "closed form"),
            ("measure", self.measure, "length^N", "closed form"),
            ("alpha0", self.alpha0, "1", ap),
            ("alpha_inf", self.alpha_inf, "1", ap),
            ("K", self.k_est, "1", kp),
            ("C", self.constant_c, "1", f"closed form with K ({kp})"),
            ("A_limit", self.a_limit, "1", "oscillation diagnostics"),
            ("B_limit", self.b_limit, "1", "oscillation diagnostics"),
            ("lambda1", self.interval.lower, "1", f"closed form with K ({kp})"),
            ("lambda2", self.interval.upper, "1", f"closed form with K ({kp})"),
            ("interval_empty", float(self.interval.is_empty), "bool",
             "lambda1 < lambda2"),
        ]


# ---------------------------------------------------------------------------
# Discrete embedding-constant estimate
# ---------------------------------------------------------------------------

def estimate_embedding_constant(grid, params: ProblemParams,
                                method: str = "auto") -> float:
    """Lower estimate of K = sup ||u||_inf / ||u|| on the grid subspace.

    Per interior node the constrained problem max u(x_i) over unit discrete
    norm is solved; by p-homogeneity this equals minimizing the discrete
    norm subject to u(x_i) = 1, a convex problem for p >= 2.  For p = 2 the
    minimum is available in closed form through the inverse of the discrete
    energy form, so the estimate is exact on the subspace; otherwise each
    node gets an independent quasi-Newton solve.

    The estimate is monotone nondecreasing under grid refinement up to
    quadrature error and is always a lower bound for the continuum K.
    """
    from .discretization import EnergyModel

    if grid.n < 1:
        raise ValueError("grid must have at least one interior node")
    model = EnergyModel(grid, params)
    if method == "auto":
        method = "exact" if params.p == 2.0 else "pernode"
    if method == "exact":
        if params.p != 2.0:
            raise ValueError("exact path requires p = 2")
        cf = cho_factor(model.quadratic_form())
        diag = cho_solve(cf, np.eye(grid.n)).diagonal()
        return float(np.sqrt(diag.max()))
    if method != "pernode":
        raise ValueError(f"unknown method {method!r}")

    p = params.p
    best = 0.0
    for i in range(grid.n):
        val = _min_norm_with_pinned_node(model, i)
        best = max(best, val ** (-1.0 / p))
    return best


def _min_norm_with_pinned_node(model, i: int) -> float:
    """Minimize the p-th power of the discrete norm subject to u_i = 1."""
    n = model.grid.n

    def split(v):
        u = np.empty(n)
        u[:i] = v[:i]
        u[i] = 1.0
        u[i + 1:] = v[i:]
        return u

    def objective(v):
        u = split(v)
        val = model.gagliardo_p(u)
        g = model.gagliardo_grad(u)
        return val, np.delete(g, i)

    v0 = np.zeros(n - 1)
    res = _scipy_minimize(objective, v0, jac=True, method="L-BFGS-B",
                          options=dict(maxiter=2000, ftol=1e-14, gtol=1e-12))
    if not res.success and np.max(np.abs(res.jac)) > 1e-6:
        raise RuntimeError(
            f"norm minimization did not converge at node {i}: {res.message}; "
            f"best objective {res.fun:.6g}"
        )
    return float(res.fun)
