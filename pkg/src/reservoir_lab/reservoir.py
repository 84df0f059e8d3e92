"""Structured echo state network with implicit shift/embed actions.

State update:

    s_t = relu( W ( c/n * P W^T s_{t-1} + Q u_t ) + b ),   c = 2/M2,

where P is the nilpotent block superdiagonal shift and Q embeds the current
input into the last size-d block. Neither matrix is ever materialized; their
actions are index arithmetic on length m*d vectors, which is the performance
contract of this module (O(m*d) per application instead of O(m^2 d^2)).

Block convention: block i of a length m*d vector occupies indices
(i-1)*d .. i*d-1, i = 1..m, oldest first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import WeightEnsemble, reconstruction_scale


def relu(x):
    return np.maximum(x, 0.0)


def shift_apply(r: np.ndarray, m: int, d: int) -> np.ndarray:
    """Apply the block shift P: output block i is input block i+1, last block 0.

    Operates on the last axis, so stacked windows (T, m*d) shift row-wise.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != m * d:
        raise ValueError(f"expected last axis {m * d}, got {r.shape[-1]}")
    out = np.zeros_like(r)
    if m > 1:
        out[..., : (m - 1) * d] = r[..., d:]
    return out


def embed_apply(u: np.ndarray, m: int) -> np.ndarray:
    """Apply Q: place u in the last size-d block of an otherwise zero vector."""
    u = np.asarray(u, dtype=np.float64)
    d = u.shape[-1]
    out = np.zeros(u.shape[:-1] + (m * d,), dtype=np.float64)
    out[..., (m - 1) * d :] = u
    return out


@dataclass(frozen=True)
class StateVector:
    """Reservoir state s (length n) at time index t."""

    s: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=np.float64))
        if self.s.ndim != 1:
            raise ValueError("state must be a vector")


@dataclass(frozen=True)
class InputSequence:
    """Input sequence u_t, entries in [-1, 1]^d, starting at time t0."""

    u: np.ndarray
    t0: int = 1

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2:
            raise ValueError("inputs must be (T, d)")
        if u.size and not np.isfinite(u).all():
            raise ValueError("inputs contain non-finite entries")
        if u.size and np.abs(u).max() > 1.0 + 1e-12:
            raise ValueError("inputs must lie in [-1, 1]")
        object.__setattr__(self, "u", u)
        u.setflags(write=False)

    def __len__(self) -> int:
        return self.u.shape[0]

    @property
    def d(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class ShiftReservoir:
    """The composite system: ensemble + ReLU activation + scale 2/(n*M2)."""

    ensemble: WeightEnsemble
    activation: str = "relu"
    c_over_n: float = field(init=False)

    def __post_init__(self):
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        scale = reconstruction_scale(self.ensemble.source) / self.ensemble.n
        object.__setattr__(self, "c_over_n", scale)
        check = self.c_over_n * self.ensemble.n * self.ensemble.source.second_moment / 2.0
        if abs(check - 1.0) > 1e-12:
            raise ValueError("c_over_n * n * M2 / 2 deviates from 1 beyond rounding")

    @property
    def n(self) -> int:
        return self.ensemble.n

    @property
    def m(self) -> int:
        return self.ensemble.m

    @property
    def d(self) -> int:
        return self.ensemble.d


def _update_core(res: ShiftReservoir, s: np.ndarray, u_t: np.ndarray) -> np.ndarray:
    ens = res.ensemble
    pre = res.c_over_n * shift_apply(ens.W.T @ s, res.m, res.d)
    pre[(res.m - 1) * res.d :] += u_t
    return relu(ens.W @ pre + ens.b)


def _check_state(res: ShiftReservoir, s: np.ndarray, what: str) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (res.n,):
        raise ValueError(f"{what} must have length n={res.n}, got {s.shape}")
    if not np.isfinite(s).all():
        raise ValueError(f"{what} contains non-finite entries")
    if res.activation == "relu" and s.size and s.min() < 0.0:
        raise ValueError(f"{what} has negative entries; relu states are nonnegative")
    return s


def state_update(res: ShiftReservoir, s_prev: StateVector, u_t: np.ndarray) -> StateVector:
    """One step of the reservoir map."""
    u_t = np.asarray(u_t, dtype=np.float64).reshape(-1)
    if u_t.shape != (res.d,):
        raise ValueError(f"input must have length d={res.d}, got {u_t.shape}")
    if not np.isfinite(u_t).all():
        raise ValueError("input contains non-finite entries")
    s = _check_state(res, s_prev.s, "previous state")
    return StateVector(_update_core(res, s, u_t), s_prev.t + 1)


def zero_state(res: ShiftReservoir, t: int = 0) -> StateVector:
    return StateVector(np.zeros(res.n), t)


def run_trajectory(
    res: ShiftReservoir, u: InputSequence, s0: StateVector | None = None
) -> list[StateVector]:
    """Fold the state update over the input sequence.

    Returns states for t = t0 .. t0+T-1. Work is O(n*m*d) per step and only
    the running state is kept beyond the returned list.
    """
    if u.d != res.d:
        raise ValueError(f"input dimension {u.d} != reservoir d={res.d}")
    if s0 is None:
        s0 = zero_state(res, u.t0 - 1)
    s = _check_state(res, s0.s, "initial state")
    t = s0.t
    out = []
    for row in u.u:
        s = _update_core(res, s, row)
        t += 1
        out.append(StateVector(s, t))
    return out


def trajectory_matrix(
    res: ShiftReservoir, u: InputSequence, s0: StateVector | None = None
) -> np.ndarray:
    """Like run_trajectory but filling a (T, n) array directly."""
    if u.d != res.d:
        raise ValueError(f"input dimension {u.d} != reservoir d={res.d}")
    if s0 is None:
        s0 = zero_state(res, u.t0 - 1)
    s = _check_state(res, s0.s, "initial state")
    states = np.empty((len(u), res.n))
    for k, row in enumerate(u.u):
        s = _update_core(res, s, row)
        states[k] = s
    return states


def dual_trajectory_gap(
    res: ShiftReservoir, u: InputSequence, s0: StateVector, s0_alt: StateVector
) -> np.ndarray:
    """Sup-norm gap per step between two trajectories driven by the same input.

    This is the forgetting diagnostic behind the weak echo state property: the
    gap is not proved to vanish, only measured.
    """
    if u.d != res.d:
        raise ValueError(f"input dimension {u.d} != reservoir d={res.d}")
    a = _check_state(res, s0.s, "initial state")
    b = _check_state(res, s0_alt.s, "alternate initial state")
    gaps = np.empty(len(u))
    for k, row in enumerate(u.u):
        a = _update_core(res, a, row)
        b = _update_core(res, b, row)
        gaps[k] = np.abs(a - b).max() if a.size else 0.0
    return gaps


def sup_operator_norm(W: np.ndarray) -> float:
    """Operator norm induced by the sup norm: max absolute row sum."""
    return float(np.abs(W).sum(axis=1).max())
