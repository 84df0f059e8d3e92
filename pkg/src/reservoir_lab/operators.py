"""Concrete causal time-invariant target operators.

Targets are specified through their window functionals: for memory m, the
functional eats the last m inputs (oldest first, flattened to length m*d) and
earlier history is zero-padded away. Each spec carries an analytic memory
tail E_F(m) (or a certified upper bound), so horizon and bound computations
never rely on sampling.

Window values are defined on [-1,1]^(m*d) and extended to [-2,2]^(m*d) by
clipping each coordinate into [-1,1]; the extension is what the reservoir
analysis evaluates on slightly-inflated reconstructed windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _rng
from .reservoir import InputSequence


class MemoryHorizonError(RuntimeError):
    """Raised when the tail does not reach the requested level below the cap."""


@dataclass(frozen=True)
class WeightingSequence:
    """Geometric weighting sequence eta_t = lam^t, eta: Z+ -> (0, 1]."""

    lam: float
    kind: str = "geometric"

    def __post_init__(self):
        if self.kind != "geometric":
            raise ValueError(f"unsupported weighting kind {self.kind!r}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("geometric rate must be in (0, 1)")

    def __call__(self, t):
        t = np.asarray(t)
        if np.any(t < 0):
            raise ValueError("weighting sequence is defined on t >= 0")
        out = self.lam ** np.asarray(t, dtype=np.float64)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OperatorSpec:
    """A target operator given by window functionals plus analytic memory data.

    Attributes
    ----------
    label:
        Registry-style identifier.
    d:
        Input dimension per time step.
    bound:
        Uniform bound B with |F| <= B.
    window_fn:
        Vectorized callable: (N, m*d) array of windows (oldest first), m ->
        (N,) values of F*_m.
    tail:
        E_F(m), the worst-case error of the m-window truncation; analytic or
        a certified upper bound, non-increasing in m.
    lipschitz:
        Optional m -> L(m), an exact (or certified) sup-norm modulus slope of
        F*_m, i.e. omega_{F*_m}(delta) <= L(m)*delta with equality for linear
        functionals.
    fading_modulus:
        Optional (delta, eta) -> analytic omega_{F*}(delta; eta) upper bound.
    representation_bound:
        Optional m -> certified B_m for the ReLU integral representation of
        F*_m; None means budgets fall back to an assumed value.
    """

    label: str
    d: int
    bound: float
    window_fn: Callable[[np.ndarray, int], np.ndarray]
    tail: Callable[[int], float]
    lipschitz: Optional[Callable[[int], float]] = None
    fading_modulus: Optional[Callable[[float, WeightingSequence], float]] = None
    representation_bound: Optional[Callable[[int], float]] = None

    def window_value(self, x: np.ndarray, m: int) -> np.ndarray:
        """Evaluate F*_m on one window or a batch of windows."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != m * self.d:
            raise ValueError(f"window length {x.shape[-1]} != m*d = {m * self.d}")
        if x.size and np.abs(x).max() > 2.0 + 1e-9:
            raise ValueError("windows must lie in [-2, 2]^(m*d)")
        vals = np.asarray(self.window_fn(np.clip(x, -1.0, 1.0), m), dtype=np.float64)
        return vals.reshape(x.shape[:-1])


def make_exp_filter(lam: float, nonlinearity: str = "linear") -> OperatorSpec:
    """Exponential moving filter F(u)_t = sum_k lam^k u_{t-k} (d = 1).

    ``tanh_composed`` applies tanh to the same sum; its tail keeps the linear
    tail since tanh is 1-Lipschitz.
    """
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    if nonlinearity not in ("linear", "tanh_composed"):
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")

    def coeffs(m: int) -> np.ndarray:
        # oldest-first window: coefficient lam^(m-1-j) for column j
        return lam ** np.arange(m - 1, -1, -1, dtype=np.float64)

    def window_fn(x: np.ndarray, m: int) -> np.ndarray:
        s = x @ coeffs(m)
        return np.tanh(s) if nonlinearity == "tanh_composed" else s

    def tail(m: int) -> float:
        if m < 1:
            raise ValueError("memory must be >= 1")
        return lam**m / (1.0 - lam)

    def lipschitz(m: int) -> float:
        return (1.0 - lam**m) / (1.0 - lam)

    def fading_modulus(delta: float, eta: WeightingSequence) -> float:
        # omega_{F*}(delta; eta) = sum_k lam^k * min(2, delta/eta_k), summed
        # until the certified geometric remainder is negligible.
        if delta <= 0:
            return 0.0
        total = 0.0
        k = 0
        while True:
            term = lam**k * min(2.0, delta / eta(k))
            total += term
            remainder = 2.0 * lam ** (k + 1) / (1.0 - lam)
            if remainder <= 1e-16 * max(total, 1e-300) or k > 200000:
                return total + remainder
            k += 1

    linear_bound = 1.0 / (1.0 - lam)
    bound = math.tanh(linear_bound) if nonlinearity == "tanh_composed" else linear_bound
    suffix = "" if nonlinearity == "linear" else ",kind=tanh"
    return OperatorSpec(
        label=f"exp_filter:lambda={lam:g}{suffix}",
        d=1,
        bound=bound,
        window_fn=window_fn,
        tail=tail,
        lipschitz=lipschitz,
        fading_modulus=fading_modulus,
    )


def make_finite_memory(
    k: int,
    f: Callable[[np.ndarray], np.ndarray],
    d: int = 1,
    bound: float = 1.0,
    pre_tail: Optional[Callable[[int], float]] = None,
    lipschitz: Optional[Callable[[int], float]] = None,
    label: Optional[str] = None,
) -> OperatorSpec:
    """Operator with exact finite memory k: F(u)_t = f(u_{t-k+1}, ..., u_t).

    ``f`` must be vectorized over stacked (N, k*d) windows. For m < k the
    window is zero-padded in front; the corresponding tail values come from
    ``pre_tail`` when the caller knows them analytically, else the certified
    fallback 2*bound is used.
    """
    k = int(k)
    if k < 1:
        raise ValueError("memory k must be >= 1")

    def window_fn(x: np.ndarray, m: int) -> np.ndarray:
        if m >= k:
            win = x[..., (m - k) * d :]
        else:
            pad = np.zeros(x.shape[:-1] + ((k - m) * d,))
            win = np.concatenate([pad, x], axis=-1)
        return f(win)

    def tail(m: int) -> float:
        if m < 1:
            raise ValueError("memory must be >= 1")
        if m >= k:
            return 0.0
        return pre_tail(m) if pre_tail is not None else 2.0 * bound

    return OperatorSpec(
        label=label or f"finite_memory:k={k}",
        d=d,
        bound=bound,
        window_fn=window_fn,
        tail=tail,
        lipschitz=lipschitz,
    )


def truncate(spec: OperatorSpec, k: int) -> OperatorSpec:
    """The finite-memory surrogate u -> F*_k(u_{t-k+1:t}).

    Replacing the original operator by its truncation leaves a residual of
    spec.tail(k) against the true target; that residual is the caller's to
    account for (it shows up as a floor in theory budgets, not in the
    surrogate's own tail, which vanishes for m >= k).
    """
    k = int(k)
    if k < 1:
        raise ValueError("truncation memory must be >= 1")

    def f(win: np.ndarray) -> np.ndarray:
        return spec.window_fn(win, k)

    if spec.lipschitz is not None:
        L_k = spec.lipschitz(k)

        def pre_tail(m: int) -> float:
            # zeroing the first (k-m)*d coordinates is a perturbation <= 1
            return min(2.0 * spec.bound, L_k)

        def lipschitz(m: int) -> float:
            return spec.lipschitz(min(m, k))

    else:
        pre_tail = None
        lipschitz = None

    return make_finite_memory(
        k,
        f,
        d=spec.d,
        bound=spec.bound,
        pre_tail=pre_tail,
        lipschitz=lipschitz,
        label=f"{spec.label}|truncated:k={k}",
    )


def memory_horizon(spec: OperatorSpec, eps: float, cap: int = 1_000_000) -> int:
    """Least m with E_F(m) <= eps (exponential search + bisection).

    Raises MemoryHorizonError when no m <= cap reaches the level, i.e. the
    tail decays too slowly for the requested accuracy.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if spec.tail(1) <= eps:
        return 1
    hi = 1
    while spec.tail(hi) > eps:
        if hi >= cap:
            raise MemoryHorizonError(
                f"tail of {spec.label} still {spec.tail(hi):.3g} > {eps:.3g} at m={hi}"
            )
        hi = min(2 * hi, cap)
    lo = hi // 2  # tail(lo) > eps, tail(hi) <= eps
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if spec.tail(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class WeightedDistance:
    """Observed weighted distance over a finite window plus certified slack."""

    value: float
    tail_slack: float

    @property
    def upper(self) -> float:
        return self.value + self.tail_slack


def weighted_distance(u, v, eta: WeightingSequence) -> WeightedDistance:
    """Weighted sup distance between two finite past windows.

    The arrays are read as u_{-T+1}, ..., u_0 (row j at depth T-1-j). The sup
    over the unseen past of two [-1,1]-valued sequences is at most
    2*eta(depth), returned as the slack term.
    """
    ua = u.u if isinstance(u, InputSequence) else np.atleast_2d(np.asarray(u, dtype=float))
    va = v.u if isinstance(v, InputSequence) else np.atleast_2d(np.asarray(v, dtype=float))
    if ua.ndim == 2 and ua.shape[1] != va.shape[1]:
        raise ValueError(f"incompatible input dimensions {ua.shape[1]} and {va.shape[1]}")
    if ua.shape != va.shape:
        raise ValueError("windows must cover the same time range")
    T = ua.shape[0]
    if T == 0:
        return WeightedDistance(0.0, 2.0 * eta(0))
    depths = np.arange(T - 1, -1, -1)
    per_step = np.abs(ua - va).max(axis=1)
    return WeightedDistance(float((eta(depths) * per_step).max()), 2.0 * float(eta(T)))


@dataclass(frozen=True)
class ModulusEstimate:
    """Modulus of continuity data for one F*_m.

    ``analytic`` estimates satisfy omega(delta) = L*delta exactly (linear
    targets) or as a certified upper slope; ``empirical-lower`` estimates are
    sampled lower bounds and must not be used as upper bounds.
    """

    deltas: np.ndarray
    omegas: np.ndarray
    source: str  # "analytic" | "empirical-lower"
    L: Optional[float] = None

    def omega(self, delta: float) -> float:
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.source == "analytic":
            return self.L * delta
        idx = np.searchsorted(self.deltas, delta, side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.omegas[min(idx, len(self.omegas) - 1)])

    def omega_inverse(self, eps: float) -> float:
        if self.source == "analytic":
            if self.L == 0.0:
                return math.inf
            return eps / self.L
        ok = self.omegas <= eps
        if not ok.any():
            return 0.0
        if ok.all():
            # modulus saturated within the ladder; nothing constrains delta
            return math.inf
        return float(self.deltas[np.nonzero(ok)[0][-1]])


def modulus_estimate(spec: OperatorSpec, m: int, grid: int = 24, seed: int = 0) -> ModulusEstimate:
    """Modulus data for F*_m: analytic when the spec carries a slope, else an
    empirical lower estimate from paired random perturbations."""
    deltas = np.geomspace(1e-3, 2.0, int(grid))
    if spec.lipschitz is not None:
        L = float(spec.lipschitz(m))
        return ModulusEstimate(deltas=deltas, omegas=L * deltas, source="analytic", L=L)
    rng = _rng.philox(seed)
    md = m * spec.d
    pairs = 128
    omegas = np.empty_like(deltas)
    for i, delta in enumerate(deltas):
        x = rng.uniform(-1.0, 1.0, size=(pairs, md))
        step = delta * rng.choice([-1.0, 1.0], size=(pairs, md))
        y = np.clip(x + step, -1.0, 1.0)
        # corner probes: push from the boundary inward by exactly delta
        xc = rng.choice([-1.0, 1.0], size=(pairs, md))
        yc = np.clip(xc - delta * xc, -1.0, 1.0)
        fx = np.concatenate([spec.window_value(x, m), spec.window_value(xc, m)])
        fy = np.concatenate([spec.window_value(y, m), spec.window_value(yc, m)])
        omegas[i] = np.abs(fx - fy).max()
    return ModulusEstimate(
        deltas=deltas, omegas=np.maximum.accumulate(omegas), source="empirical-lower"
    )


@dataclass(frozen=True)
class FadingMemoryDelta:
    """Certified input-closeness level delta guaranteeing |F*(u)-F*(v)| <= eps."""

    m: int
    delta: float
    source: str


def fading_memory_delta(
    spec: OperatorSpec,
    eta: WeightingSequence,
    eps: float,
    horizon_cap: int = 1_000_000,
    seed: int = 0,
) -> FadingMemoryDelta:
    """The composed continuity diagnostic: m = m_F(eps/3) and
    delta = eta_{m-1} * omega_{F*_m}^{-1}(eps/3).

    For constant functionals the inverse modulus is +inf and the returned
    delta is +inf: every pair of inputs already satisfies the bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = memory_horizon(spec, eps / 3.0, cap=horizon_cap)
    est = modulus_estimate(spec, m, seed=seed)
    om_inv = est.omega_inverse(eps / 3.0)
    if math.isinf(om_inv):
        return FadingMemoryDelta(m=m, delta=math.inf, source=est.source)
    return FadingMemoryDelta(m=m, delta=float(eta(m - 1)) * om_inv, source=est.source)


def _parse_spec_id(spec_id: str):
    name, _, rest = spec_id.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not key or not val:
                raise ValueError(f"malformed operator parameter {item!r} in {spec_id!r}")
            params[key.strip()] = val.strip()
    return name.strip(), params


def get_operator(spec_id: str) -> OperatorSpec:
    """Resolve a registry id like ``exp_filter:lambda=0.5`` or ``product:k=2``."""
    name, params = _parse_spec_id(spec_id)
    if name == "exp_filter":
        lam = float(params.pop("lambda", 0.5))
        kind = params.pop("kind", "linear")
        nonlinearity = "tanh_composed" if kind in ("tanh", "tanh_composed") else "linear"
        _reject_unknown(spec_id, params)
        return make_exp_filter(lam, nonlinearity)
    if name == "product":
        k = int(params.pop("k", 2))
        _reject_unknown(spec_id, params)
        return make_finite_memory(
            k,
            lambda win: np.prod(win, axis=-1),
            d=1,
            bound=1.0,
            pre_tail=lambda m: 1.0,  # zero-padding kills the product; sup |prod u| = 1
            lipschitz=lambda m: float(min(m, k)),
            label=f"product:k={k}",
        )
    if name == "identity":
        _reject_unknown(spec_id, params)
        return make_finite_memory(
            1,
            lambda win: win[..., -1],
            d=1,
            bound=1.0,
            lipschitz=lambda m: 1.0,
            label="identity",
        )
    raise ValueError(f"unknown operator {name!r}")


def _reject_unknown(spec_id, params):
    if params:
        raise ValueError(f"unknown parameter(s) {sorted(params)} in operator id {spec_id!r}")
