"""Self-consistent internal trajectories by fixed-point iteration.

The internal window trajectory r solves

    r_t = c/n * P W^T relu(W r_{t-1} + b) + Q u_t

on a finite window with zero left padding. Existence of such trajectories is
a property of the network; here it is certified numerically: iterate the map
psi from r = 0 and report the achieved residual sup_t |psi(r)_t - r_t|_inf.
A residual below tolerance is the existence certificate; non-convergence is
reported, never papered over.

On a window of length T the iteration is exact after at most T sweeps: the
earliest step is pinned by the zero boundary and each sweep pins one more
step, so plain iteration terminates regardless of contraction arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reservoir import InputSequence, ShiftReservoir, relu, shift_apply

DEFAULT_TOL = 1e-10
BOX_RADIUS = 1.5
BOX_SLACK = 0.5  # the induction budget: iterates stay in [-2, 2] when E2 <= 1/(2m)


@dataclass
class PsiState:
    """Candidate window trajectory r_t (row t of ``r``), plus its box radius.

    Entries are expected in [-box_radius - slack, box_radius + slack]; the
    solver counts violations instead of clipping them.
    """

    r: np.ndarray
    box_radius: float = BOX_RADIUS

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        if self.r.ndim != 2:
            raise ValueError("trajectory must be (T, m*d)")

    def box_violations(self, slack: float = BOX_SLACK) -> int:
        limit = self.box_radius + slack
        return int((np.abs(self.r) > limit).sum())


def _as_input_array(res: ShiftReservoir, u) -> np.ndarray:
    arr = u.u if isinstance(u, InputSequence) else np.atleast_2d(np.asarray(u, dtype=float))
    if arr.ndim != 2 or arr.shape[1] != res.d:
        raise ValueError(f"inputs must be (T, d={res.d})")
    return arr


def psi_apply(res: ShiftReservoir, state: PsiState, u) -> PsiState:
    """One application of psi to the whole window (zero predecessor at t=0)."""
    ens = res.ensemble
    uarr = _as_input_array(res, u)
    r = state.r
    if r.shape != (uarr.shape[0], res.m * res.d):
        raise ValueError(
            f"trajectory shape {r.shape} does not match window ({uarr.shape[0]}, {res.m * res.d})"
        )
    prev = np.zeros_like(r)
    if r.shape[0] > 1:
        prev[1:] = r[:-1]
    z = relu(prev @ ens.W.T + ens.b)
    out = res.c_over_n * shift_apply(z @ ens.W, res.m, res.d)
    out[:, (res.m - 1) * res.d :] += uarr
    return PsiState(out, state.box_radius)


@dataclass
class FixedPointResult:
    """Outcome of the iteration; ``converged`` is the existence certificate."""

    state: PsiState
    residual: float
    iters: int
    converged: bool
    tol: float
    max_abs_entry: float
    box_violations: int


def fixed_point_solve(
    res: ShiftReservoir,
    u,
    tol: float = DEFAULT_TOL,
    max_iters: int | None = None,
) -> FixedPointResult:
    """Iterate psi from r = 0 until the residual drops below tol.

    The reported residual is re-measured on the returned state, so success
    really means |psi(r) - r|_inf <= tol for the state handed back. NaNs in
    an iterate raise; running out of iterations returns converged=False with
    the best residual.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters is None:
        max_iters = 50 * res.m
    uarr = _as_input_array(res, u)
    T = uarr.shape[0]
    state = PsiState(np.zeros((T, res.m * res.d)))
    max_abs = 0.0
    iters = 0
    while True:
        nxt = psi_apply(res, state, uarr)
        if not np.isfinite(nxt.r).all():
            raise ValueError("psi iterate contains non-finite entries")
        if nxt.r.size:
            max_abs = max(max_abs, float(np.abs(nxt.r).max()))
        residual = float(np.abs(nxt.r - state.r).max()) if T else 0.0
        if residual <= tol or iters >= max_iters:
            break
        state = nxt
        iters += 1
    return FixedPointResult(
        state=state,
        residual=residual,
        iters=iters,
        converged=residual <= tol,
        tol=tol,
        max_abs_entry=max_abs,
        box_violations=state.box_violations(),
    )


def window_proximity(state: PsiState, u) -> np.ndarray:
    """Per-step sup distance between r_t and the stacked input window
    (u_{t-m+1}, ..., u_t), zero-padded before the window start."""
    r = state.r
    uarr = u.u if isinstance(u, InputSequence) else np.atleast_2d(np.asarray(u, dtype=float))
    T, d = uarr.shape
    md = r.shape[1]
    m = md // d
    if m * d != md or r.shape[0] != T:
        raise ValueError("trajectory and input shapes are inconsistent")
    padded = np.vstack([np.zeros((m - 1, d)), uarr])
    out = np.empty(T)
    for t in range(T):
        window = padded[t : t + m].reshape(md)
        out[t] = np.abs(r[t] - window).max() if md else 0.0
    return out


def recheck_residual(res: ShiftReservoir, state: PsiState, u) -> float:
    """Independent certificate recheck with dense, materialized P and Q."""
    ens = res.ensemble
    uarr = _as_input_array(res, u)
    m, d = res.m, res.d
    P = np.kron(np.eye(m, k=1), np.eye(d))
    Q = np.zeros((m * d, d))
    Q[(m - 1) * d :, :] = np.eye(d)
    worst = 0.0
    prev = np.zeros(m * d)
    for t in range(uarr.shape[0]):
        expected = res.c_over_n * (P @ (ens.W.T @ relu(ens.W @ prev + ens.b))) + Q @ uarr[t]
        worst = max(worst, float(np.abs(expected - state.r[t]).max()))
        prev = state.r[t]
    return worst


def certificate(res: ShiftReservoir, result: FixedPointResult, u, discard: int | None = None) -> dict:
    """JSON-ready existence certificate for one solved window.

    Proximity is reported after discarding the first ``discard`` steps
    (default 3m), the warmup convention for finite-window statistics.
    """
    if discard is None:
        discard = 3 * res.m
    prox = window_proximity(result.state, u)
    kept = prox[discard:] if discard < len(prox) else prox[len(prox) :]
    return {
        "residual": result.residual,
        "iters": result.iters,
        "converged": bool(result.converged),
        "tol": result.tol,
        "max_window_proximity": float(kept.max()) if kept.size else 0.0,
        "box_violations": result.box_violations,
        "discarded_steps": int(min(discard, len(prox))),
    }
