"""Closed-form constants and empirical tests of the concentration bounds.

Everything here is either a pure formula evaluator (same inputs, same floats)
or a measurement with an explicitly certified slack. Grid suprema are lower
estimates of box suprema; before any comparison with a bound we add the
covering slack B*d*eps with eps = r/sqrt(n), which makes the reported
statistic an upper bound on the grid-free supremum (the feature class has
per-point Lipschitz constant at most B*d/2, the deviation at most B*d).

The biased feature relu(w.x + b) is reduced to the bias-free form by
augmenting x with a constant coordinate, so the effective dimension for the
reconstruction statistics is m*d + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import quad

from . import _rng
from .ensemble import SymmetricDistribution, WeightEnsemble, reconstruction_scale
from .operators import OperatorSpec

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# formula evaluators


def lemma_bound(B: float, r: float, d: int, n: int, delta: float) -> float:
    """High-probability sup deviation bound for the bias-free random feature
    average: B*r*d*(2*sqrt(2*d*log(n+1)/n) + sqrt(log(2/delta)/(2*n)))."""
    if min(B, r, d, n) <= 0 or not 0.0 < delta < 1.0:
        raise ValueError("arguments must be positive with delta in (0, 1)")
    return B * r * d * (
        2.0 * math.sqrt(2.0 * d * math.log(n + 1.0) / n)
        + math.sqrt(math.log(2.0 / delta) / (2.0 * n))
    )


def feasibility_threshold(m: int, d: int, delta: float) -> float:
    """c(m, delta, d) = 1152 m^2 (md+1)^2 (4 sqrt(md+1) + sqrt(log(4md/delta)))^2."""
    md = m * d
    root = 4.0 * math.sqrt(md + 1.0) + math.sqrt(math.log(4.0 * md / delta))
    return 1152.0 * m * m * (md + 1.0) ** 2 * root * root


class E2Bound(NamedTuple):
    value: float
    feasible: bool
    threshold: float


def e2_bound(m: int, d: int, n: int, delta: float) -> E2Bound:
    """Reconstruction deviation bound E2 over x in [-2,2]^(m*d), plus the
    feasibility predicate n/log(n+1) >= c(m, delta, d) under which E2 <= 1/(2m)."""
    if min(m, d, n) <= 0 or not 0.0 < delta < 1.0:
        raise ValueError("arguments must be positive with delta in (0, 1)")
    md = m * d
    value = 12.0 * math.sqrt(2.0) * (md + 1.0) * (
        4.0 * math.sqrt((md + 1.0) * math.log(n + 1.0) / n)
        + math.sqrt(math.log(4.0 * md / delta) / n)
    )
    threshold = feasibility_threshold(m, d, delta)
    return E2Bound(value=value, feasible=n / math.log(n + 1.0) >= threshold, threshold=threshold)


def e1_bound(B_m: float, m: int, d: int, n: int, delta: float) -> float:
    """Random-feature approximation bound E1 for the integral representation."""
    md = m * d
    return math.sqrt(2.0) * B_m * (md + 1.0) * (
        4.0 * math.sqrt((md + 1.0) * math.log(n + 1.0) / n)
        + math.sqrt(math.log(4.0 / delta) / n)
    )


def approximation_constant(B_m: float, m: int, d: int, delta: float) -> float:
    """C(m, delta, d) = sqrt(2) B_m (md+1)(3m^2 d+1)(4 sqrt(md+1) + sqrt(log(4md/delta)))."""
    md = m * d
    return math.sqrt(2.0) * B_m * (md + 1.0) * (3.0 * m * m * d + 1.0) * (
        4.0 * math.sqrt(md + 1.0) + math.sqrt(math.log(4.0 * md / delta))
    )


@dataclass(frozen=True)
class ErrorBudget:
    """All bound-side quantities for one (operator, m, d, n, delta) setup."""

    B_m: float
    m: int
    d: int
    n: int
    delta: float
    E1: float
    E2: float
    C_mdd: float
    c_mdd: float
    tail_EF: float
    total_bound: float
    feasible: bool
    b_m_source: str  # "certified" | "assumed"


def theorem_budget(
    spec: OperatorSpec,
    m: int,
    d: int,
    n: int,
    delta: float,
    B_m: Optional[float] = None,
) -> ErrorBudget:
    """Assemble the full error budget E1 + (B_m m^2 d / 4) E2 + E_F(m) and the
    closed-form total C(m,delta,d)*sqrt(log(n+1)/n) + E_F(m).

    When the spec carries no certified representation bound, B_m must be
    supplied (or defaults to 1.0) and the budget is flagged "assumed".
    """
    if spec.representation_bound is not None and B_m is None:
        B_m = float(spec.representation_bound(m))
        source = "certified"
    else:
        B_m = 1.0 if B_m is None else float(B_m)
        source = "assumed"
    e2 = e2_bound(m, d, n, delta)
    tail = float(spec.tail(m))
    C = approximation_constant(B_m, m, d, delta)
    total = C * math.sqrt(math.log(n + 1.0) / n) + tail
    return ErrorBudget(
        B_m=B_m,
        m=m,
        d=d,
        n=n,
        delta=delta,
        E1=e1_bound(B_m, m, d, n, delta),
        E2=e2.value,
        C_mdd=C,
        c_mdd=e2.threshold,
        tail_EF=tail,
        total_bound=total,
        feasible=e2.feasible,
        b_m_source=source,
    )


# ---------------------------------------------------------------------------
# reconstruction measurements


def reconstruct(ens: WeightEnsemble, x: np.ndarray) -> np.ndarray:
    """Empirical input reconstruction (2/(n*M2)) W^T relu(Wx + b).

    Accepts a single window (m*d,) or a batch (..., m*d), all entries in
    [-2, 2].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ens.md:
        raise ValueError(f"expected windows of length {ens.md}, got {x.shape[-1]}")
    if x.size and np.abs(x).max() > 2.0 + 1e-9:
        raise ValueError("windows must lie in [-2, 2]^(m*d)")
    scale = reconstruction_scale(ens.source) / ens.n
    z = np.maximum(x @ ens.W.T + ens.b, 0.0)
    return scale * (z @ ens.W)


def reconstruction_mc_check(
    dist: SymmetricDistribution,
    md: int,
    xs: np.ndarray,
    draws: int,
    seed: int,
    chunk: int = 1_000_000,
):
    """Monte Carlo test of E[(2/M2) w relu(w.x + b)] = x.

    Returns (means, ses): for each row x of ``xs``, the per-coordinate sample
    mean of (2/M2) * w * relu(w.x + b) over ``draws`` fresh (w, b) samples and
    its standard error. Draws are streamed in chunks; the stream is shared
    across the x rows, which only correlates their errors, not their sizes.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    K = xs.shape[0]
    if xs.shape[1] != md:
        raise ValueError("x rows must have length md")
    scale = reconstruction_scale(dist)
    rng = _rng.philox(seed)
    sums = np.zeros((K, md))
    sqsums = np.zeros((K, md))
    left = int(draws)
    while left > 0:
        size = min(chunk, left)
        block = dist.sample(rng, (size, md + 1))
        w = block[:, :md]
        b = block[:, md]
        z = np.maximum(w @ xs.T + b[:, None], 0.0)  # (size, K)
        sums += scale * (z.T @ w)
        sqsums += scale * scale * ((z * z).T @ (w * w))
        left -= size
    means = sums / draws
    variances = np.maximum(sqsums / draws - means * means, 0.0)
    ses = np.sqrt(variances / draws)
    return means, ses


# ---------------------------------------------------------------------------
# grid suprema for the reconstruction error (the empirical E2 statistic)

_BLOCK = 16384  # weight rows per pass; keeps the streamed block L2-resident

if _HAVE_NUMBA:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _accum_md2(w1, w2, b, x1, x2, acc1, acc2):  # pragma: no cover - jitted
        # single-precision inner sums feeding double accumulators: the fp32
        # rounding (~1e-7 absolute on the final statistic) is 5 orders below
        # the covering slack this statistic carries
        for p in numba.prange(x1.shape[0]):
            a1 = np.float32(0.0)
            a2 = np.float32(0.0)
            xp1 = x1[p]
            xp2 = x2[p]
            for i in range(w1.shape[0]):
                t = w1[i] * xp1 + w2[i] * xp2 + b[i]
                z = t if t > np.float32(0.0) else np.float32(0.0)
                a1 += w1[i] * z
                a2 += w2[i] * z
            acc1[p] += a1
            acc2[p] += a2


def _grid_gap_md2_numba(ens: WeightEnsemble, X: np.ndarray) -> float:
    w1 = np.ascontiguousarray(ens.W[:, 0], dtype=np.float32)
    w2 = np.ascontiguousarray(ens.W[:, 1], dtype=np.float32)
    b = np.ascontiguousarray(ens.b, dtype=np.float32)
    x1 = np.ascontiguousarray(X[:, 0], dtype=np.float32)
    x2 = np.ascontiguousarray(X[:, 1], dtype=np.float32)
    acc1 = np.zeros(X.shape[0])
    acc2 = np.zeros(X.shape[0])
    for i0 in range(0, ens.n, _BLOCK):
        i1 = min(i0 + _BLOCK, ens.n)
        _accum_md2(w1[i0:i1], w2[i0:i1], b[i0:i1], x1, x2, acc1, acc2)
    scale = reconstruction_scale(ens.source) / ens.n
    gap = np.maximum(np.abs(X[:, 0] - scale * acc1), np.abs(X[:, 1] - scale * acc2))
    return float(gap.max())


def _grid_gap_numpy(ens: WeightEnsemble, X: np.ndarray, chunk: int = 2048) -> float:
    scale = reconstruction_scale(ens.source) / ens.n
    worst = 0.0
    for j0 in range(0, X.shape[0], chunk):
        xc = X[j0 : j0 + chunk]
        z = np.maximum(xc @ ens.W.T + ens.b, 0.0)
        rec = scale * (z @ ens.W)
        worst = max(worst, float(np.abs(xc - rec).max()))
    return worst


def covering_axis(r: float, n: int) -> np.ndarray:
    """Tensor-grid axis over [-r, r] with spacing <= r/sqrt(n)."""
    points = int(np.ceil(2.0 * np.sqrt(n))) + 1
    return np.linspace(-r, r, points)


@dataclass(frozen=True)
class GridSupResult:
    """Grid supremum of the reconstruction error plus its certified slack."""

    raw_sup: float
    slack: float
    statistic: float
    spacing: float
    points_per_axis: int
    feature_bound: float


def grid_sup_reconstruction_error(
    ens: WeightEnsemble,
    r: float = 2.0,
    points_per_axis: Optional[int] = None,
    use_numba: Optional[bool] = None,
) -> GridSupResult:
    """sup over a covering grid of |x - reconstruct(x)|_inf, plus the slack
    B*(md+1)*eps with eps = r/sqrt(n) (B = feature bound (2/M2)*support).

    statistic = raw grid sup + slack upper-bounds the grid-free supremum; the
    slack uses max(eps, actual spacing) so a caller-coarsened grid stays a
    certified upper bound.
    """
    md = ens.md
    if points_per_axis is None:
        axis = covering_axis(r, ens.n)
    else:
        axis = np.linspace(-r, r, int(points_per_axis))
    spacing = float(axis[1] - axis[0]) if axis.size > 1 else 2.0 * r
    mesh = np.meshgrid(*([axis] * md), indexing="ij")
    X = np.stack([g.ravel() for g in mesh], axis=1)
    if use_numba is None:
        use_numba = _HAVE_NUMBA and md == 2 and ens.n * X.shape[0] > 10**7
    if use_numba and md == 2 and _HAVE_NUMBA:
        raw = _grid_gap_md2_numba(ens, X)
    else:
        raw = _grid_gap_numpy(ens, X)
    feature_bound = reconstruction_scale(ens.source) * ens.source.support_radius
    eps = max(r / math.sqrt(ens.n), spacing)
    slack = feature_bound * (md + 1) * eps
    return GridSupResult(
        raw_sup=raw,
        slack=slack,
        statistic=raw + slack,
        spacing=spacing,
        points_per_axis=axis.size,
        feature_bound=feature_bound,
    )


# ---------------------------------------------------------------------------
# deviation trials for the bias-free lemma


@dataclass(frozen=True)
class GridReference:
    """Exact f values on the trial grid plus the numeric error budget."""

    X: np.ndarray  # (G, d)
    f_values: np.ndarray  # (G,)
    error_budget: float
    method: str  # "quadrature" | "monte-carlo"


def integral_reference(
    g: Callable[[np.ndarray], np.ndarray],
    d: int,
    r: float,
    points_per_axis: int,
    n: int,
    seed: int = 0,
    mc_factor: int = 100,
    quad_tol: float = 1e-10,
) -> GridReference:
    """Ground-truth f(x) = integral of g(w) relu(w.x) over [-1/2,1/2]^d on the
    trial grid: adaptive quadrature for d <= 2, large-sample Monte Carlo
    (mc_factor * n draws) for d = 3. d > 3 is out of contract."""
    axis = np.linspace(-r, r, points_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    X = np.stack([grid.ravel() for grid in mesh], axis=1)
    if d == 1:
        vals = np.empty(X.shape[0])
        errs = np.empty(X.shape[0])
        for j, x in enumerate(X[:, 0]):
            # kink of relu(w*x) sits at w = 0
            val, err = quad(
                lambda w: float(g(np.array([[w]]))[0]) * max(w * x, 0.0),
                -0.5,
                0.5,
                points=[0.0],
                epsabs=quad_tol,
                epsrel=quad_tol,
                limit=200,
            )
            vals[j] = val
            errs[j] = err
        return GridReference(X=X, f_values=vals, error_budget=float(errs.max()), method="quadrature")
    if d == 2:
        vals = np.empty(X.shape[0])
        errs = np.empty(X.shape[0])
        for j, x in enumerate(X):
            vals[j], errs[j] = _f_exact_2d(g, x, quad_tol)
        return GridReference(X=X, f_values=vals, error_budget=float(errs.max()), method="quadrature")
    if d == 3:
        rng = _rng.philox(seed)
        draws = mc_factor * n
        w = rng.uniform(-0.5, 0.5, size=(draws, 3))
        feats = np.maximum(w @ X.T, 0.0)
        gw = np.asarray(g(w), dtype=np.float64)
        vals = (gw @ feats) / draws
        # 4-sigma Monte Carlo budget per grid point
        second = ((gw * gw) @ (feats * feats)) / draws
        se = np.sqrt(np.maximum(second - vals * vals, 0.0) / draws)
        return GridReference(
            X=X, f_values=vals, error_budget=float(4.0 * se.max()), method="monte-carlo"
        )
    raise ValueError("reference integrals are only provided for d <= 3")


def _f_exact_2d(g, x, tol):
    """Integrate g(w) * relu(w.x) over the square by splitting the inner
    integral at the kink line w.x = 0."""
    x1, x2 = float(x[0]), float(x[1])

    def inner(w1):
        def integrand(w2):
            t = w1 * x1 + w2 * x2
            return float(g(np.array([[w1, w2]]))[0]) * t if t > 0.0 else 0.0

        pts = []
        if abs(x2) > 1e-300:
            root = -w1 * x1 / x2
            if -0.5 < root < 0.5:
                pts = [root]
        val, err = quad(integrand, -0.5, 0.5, points=pts or None, epsabs=tol, epsrel=tol, limit=100)
        return val, err

    inner_errs = []

    def outer_integrand(w1):
        val, err = inner(w1)
        inner_errs.append(err)
        return val

    val, outer_err = quad(outer_integrand, -0.5, 0.5, points=[0.0], epsabs=tol, epsrel=tol, limit=100)
    budget = outer_err + (max(inner_errs) if inner_errs else 0.0)
    return val, budget


@dataclass(frozen=True)
class DeviationTrial:
    """One empirical test of the deviation event; ``violated`` iff the slacked
    statistic exceeds the bound."""

    empirical_sup: float
    bound: float
    violated: bool
    n: int
    d: int
    delta: float
    grid_points: int
    raw_grid_sup: float
    slack: float
    reference_budget: float


def deviation_trial(
    g: Callable[[np.ndarray], np.ndarray],
    g_bound: float,
    d: int,
    n: int,
    r: float,
    delta: float,
    seed: int,
    grid_points: Optional[int] = None,
    reference: Optional[GridReference] = None,
) -> DeviationTrial:
    """Draw n weights, measure the slacked grid sup of |f - feature average|
    over [-r, r]^d, and compare against lemma_bound.

    The reference integral may be precomputed and shared across trials (f
    does not depend on the draw). Its numeric budget must stay below 1% of
    the bound, otherwise the trial is meaningless and an error is raised.
    """
    if grid_points is None:
        grid_points = int(np.ceil(2.0 * np.sqrt(n))) + 1
    if reference is None:
        reference = integral_reference(g, d, r, grid_points, n, seed=_rng.derive_seed(seed, "ref"))
    bound = lemma_bound(g_bound, r, d, n, delta)
    if reference.error_budget > 0.01 * bound:
        raise ValueError(
            f"reference budget {reference.error_budget:.3g} exceeds 1% of bound {bound:.3g}"
        )
    rng = _rng.philox(seed)
    w = rng.uniform(-0.5, 0.5, size=(n, d))
    gw = np.asarray(g(w), dtype=np.float64)
    if np.abs(gw).max(initial=0.0) > g_bound + 1e-12:
        raise ValueError("g exceeds its declared bound on the drawn weights")
    feats = np.maximum(w @ reference.X.T, 0.0)  # (n, G)
    avg = (gw @ feats) / n
    raw = float(np.abs(reference.f_values - avg).max())
    spacing = 2.0 * r / (grid_points - 1) if grid_points > 1 else 2.0 * r
    slack = g_bound * d * max(r / math.sqrt(n), spacing)
    statistic = raw + slack + reference.error_budget
    return DeviationTrial(
        empirical_sup=statistic,
        bound=bound,
        violated=statistic > bound,
        n=n,
        d=d,
        delta=delta,
        grid_points=grid_points,
        raw_grid_sup=raw,
        slack=slack,
        reference_budget=reference.error_budget,
    )
