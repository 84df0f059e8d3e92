"""Sampling of the random internal weights.

The reservoir is built from ``n`` i.i.d. rows ``(w_i^T, b_i)`` drawn from the
``(m*d+1)``-fold product of a symmetric scalar distribution with bounded
support. Symmetry and the second moment ``M2`` are what make the ReLU input
reconstruction identity exact, so the distribution objects carry their
analytic moments and refuse unbounded laws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _rng

ENSEMBLE_FORMAT = "reservoir-lab/ensemble"
ENSEMBLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SymmetricDistribution:
    """Symmetric scalar law with bounded support and known moments.

    Construct through :func:`uniform`, :func:`two_point` or
    :func:`rademacher_mixture`; the constructor itself only records the
    analytic data.

    Attributes
    ----------
    kind:
        One of ``"uniform"``, ``"two_point"``, ``"rademacher_mixture"``.
    params:
        Kind-specific parameter tuple (see the factory docstrings).
    second_moment:
        The analytic variance M2 (the mean is 0 by symmetry).
    support_radius:
        Finite radius R with all mass in [-R, R].
    """

    kind: str
    params: tuple
    second_moment: float
    support_radius: float
    fourth_moment: float
    sixth_moment: float

    def __post_init__(self):
        if not np.isfinite(self.support_radius) or self.support_radius <= 0:
            raise ValueError("support_radius must be finite and positive")
        if self.second_moment <= 0:
            raise ValueError("second_moment must be positive")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. floats of the given shape."""
        if self.kind == "uniform":
            (r,) = self.params
            return rng.uniform(-r, r, size=size)
        if self.kind == "two_point":
            (c,) = self.params
            return c * (2.0 * rng.integers(0, 2, size=size) - 1.0)
        if self.kind == "rademacher_mixture":
            atoms, probs = self.params
            scales = np.asarray(atoms)[rng.choice(len(atoms), size=size, p=list(probs))]
            signs = 2.0 * rng.integers(0, 2, size=size) - 1.0
            return scales * signs
        raise ValueError(f"unknown distribution kind {self.kind!r}")

    def descriptor(self) -> dict:
        """JSON-serializable description (part of the file format)."""
        return {
            "kind": self.kind,
            "params": _params_to_jsonable(self.params),
            "second_moment": self.second_moment,
            "support_radius": self.support_radius,
        }


def _params_to_jsonable(params):
    out = []
    for p in params:
        if isinstance(p, tuple):
            out.append(list(p))
        else:
            out.append(p)
    return out


def uniform(r: float) -> SymmetricDistribution:
    """Uniform law on [-r, r]; M2 = r^2/3."""
    r = float(r)
    if r <= 0 or not np.isfinite(r):
        raise ValueError("uniform half-width must be positive and finite")
    return SymmetricDistribution(
        kind="uniform",
        params=(r,),
        second_moment=r * r / 3.0,
        support_radius=r,
        fourth_moment=r**4 / 5.0,
        sixth_moment=r**6 / 7.0,
    )


def two_point(c: float) -> SymmetricDistribution:
    """Atoms at +-c with equal mass; M2 = c^2."""
    c = float(c)
    if c <= 0 or not np.isfinite(c):
        raise ValueError("two_point atom must be positive and finite")
    return SymmetricDistribution(
        kind="two_point",
        params=(c,),
        second_moment=c * c,
        support_radius=c,
        fourth_moment=c**4,
        sixth_moment=c**6,
    )


def rademacher_mixture(atoms) -> SymmetricDistribution:
    """Mixture of scaled Rademacher laws.

    ``atoms`` is a sequence of (scale, weight) pairs; each component puts
    weight/2 on +-scale. Weights must sum to 1.
    """
    scales = tuple(float(c) for c, _ in atoms)
    probs = tuple(float(p) for _, p in atoms)
    if not scales:
        raise ValueError("mixture needs at least one atom")
    if any(c <= 0 or not np.isfinite(c) for c in scales):
        raise ValueError("mixture scales must be positive and finite")
    if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    m2 = sum(p * c * c for c, p in zip(scales, probs))
    return SymmetricDistribution(
        kind="rademacher_mixture",
        params=(scales, probs),
        second_moment=m2,
        support_radius=max(scales),
        fourth_moment=sum(p * c**4 for c, p in zip(scales, probs)),
        sixth_moment=sum(p * c**6 for c, p in zip(scales, probs)),
    )


def distribution_from_descriptor(desc: dict) -> SymmetricDistribution:
    kind = desc["kind"]
    params = desc["params"]
    if kind == "uniform":
        dist = uniform(params[0])
    elif kind == "two_point":
        dist = two_point(params[0])
    elif kind == "rademacher_mixture":
        dist = rademacher_mixture(list(zip(params[0], params[1])))
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    for key in ("second_moment", "support_radius"):
        if abs(getattr(dist, key) - desc[key]) > 1e-12 * max(1.0, abs(desc[key])):
            raise ValueError(f"stored {key} disagrees with analytic value")
    return dist


def reconstruction_scale(dist: SymmetricDistribution) -> float:
    """Coefficient 2/M2 turning averaged w*relu(w.x+b) features back into x."""
    if dist.second_moment <= 0:
        raise ValueError("second moment must be positive")
    return 2.0 / dist.second_moment


@dataclass(frozen=True)
class WeightEnsemble:
    """Frozen random weights W (n x m*d, row-major by sample) and bias b (n)."""

    W: np.ndarray
    b: np.ndarray
    n: int
    m: int
    d: int
    source: SymmetricDistribution
    seed: int

    def __post_init__(self):
        if self.W.shape != (self.n, self.m * self.d):
            raise ValueError("W shape inconsistent with (n, m*d)")
        if self.b.shape != (self.n,):
            raise ValueError("b shape inconsistent with n")
        self.W.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def md(self) -> int:
        return self.m * self.d


def sample_ensemble(
    dist: SymmetricDistribution, n: int, m: int, d: int, seed: int
) -> WeightEnsemble:
    """Draw the ensemble row by row from dist^(m*d+1), deterministically.

    The (n, m*d+1) block is drawn in one contiguous row-major call, so row i
    is exactly the i-th sample (w_i^T, b_i) and the layout is part of the
    reproducibility contract.
    """
    n, m, d = int(n), int(m), int(d)
    if min(n, m, d) < 1:
        raise ValueError("n, m, d must all be >= 1")
    cols = m * d + 1
    if n > (np.iinfo(np.intp).max // 8) // cols:
        raise OverflowError(f"n*(m*d+1) = {n}*{cols} exceeds the platform size type")
    rng = _rng.philox(seed)
    block = dist.sample(rng, (n, cols)).astype(np.float64, copy=False)
    W = np.ascontiguousarray(block[:, : m * d])
    b = np.ascontiguousarray(block[:, m * d])
    return WeightEnsemble(W=W, b=b, n=n, m=m, d=d, source=dist, seed=int(seed))


def save_ensemble(ens: WeightEnsemble, path) -> Path:
    """Write a self-describing, version-tagged .npz container."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_name(path.name + ".npz")
    meta = {
        "format": ENSEMBLE_FORMAT,
        "version": ENSEMBLE_FORMAT_VERSION,
        "rng": _rng.RNG_ALGORITHM,
        "dims": {"n": ens.n, "m": ens.m, "d": ens.d},
        "seed": ens.seed,
        "distribution": ens.source.descriptor(),
    }
    np.savez(path, meta=json.dumps(meta, sort_keys=True), W=ens.W, b=ens.b)
    return path


def load_ensemble(path) -> WeightEnsemble:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"].item()))
        if meta.get("format") != ENSEMBLE_FORMAT:
            raise ValueError(f"not an ensemble container: {meta.get('format')!r}")
        if meta.get("version") != ENSEMBLE_FORMAT_VERSION:
            raise ValueError(f"unsupported ensemble format version {meta.get('version')!r}")
        if meta.get("rng") != _rng.RNG_ALGORITHM:
            raise ValueError(f"ensemble was written with generator {meta.get('rng')!r}")
        dims = meta["dims"]
        dist = distribution_from_descriptor(meta["distribution"])
        W = np.ascontiguousarray(data["W"], dtype=np.float64)
        b = np.ascontiguousarray(data["b"], dtype=np.float64)
    radius = dist.support_radius
    if np.abs(W).max(initial=0.0) > radius or np.abs(b).max(initial=0.0) > radius:
        raise ValueError("stored entries fall outside the declared support")
    return WeightEnsemble(
        W=W, b=b, n=dims["n"], m=dims["m"], d=dims["d"], source=dist, seed=meta["seed"]
    )
