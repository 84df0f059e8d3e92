"""Linear readout fitting and sup-norm operator evaluation.

The readout a minimizes sum_t (a.s_t - y_t)^2 + lambda_eff |a|^2 with
lambda_eff = ridge_lambda * trace(S^T S): the nominal ridge is normalized by
the total feature energy, so the same value behaves consistently across
state scales and sizes. (Normalizing by the mean eigenvalue trace/n instead
leaves the interpolating regime T < n essentially unregularized and the test
error stops decreasing with n.) Training targets stand in for the true operator through a
deep window functional F*_mbig whose truncation tail is recorded on the
report.

True sup-norm error over all input sequences is not computable; evaluation
uses a documented, fixed family: seeded random sequences plus adversarial
constant and alternating-sign sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import _rng
from .ensemble import SymmetricDistribution, sample_ensemble, uniform
from .operators import OperatorSpec, memory_horizon
from .reservoir import InputSequence, ShiftReservoir, StateVector, trajectory_matrix


@dataclass(frozen=True)
class Readout:
    """Trained coefficients with fit diagnostics."""

    a: np.ndarray
    ridge_lambda: float
    fit_rms: float
    condition_estimate: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 1 or not np.isfinite(a).all():
            raise ValueError("readout coefficients must be a finite vector")
        object.__setattr__(self, "a", a)
        a.setflags(write=False)

    def predict(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(states) @ self.a


def _states_matrix(states) -> np.ndarray:
    if isinstance(states, np.ndarray):
        return states
    return np.stack([s.s if isinstance(s, StateVector) else np.asarray(s) for s in states])


def fit_readout(states, targets, ridge_lambda: float) -> Readout:
    """Ridge-regularized least squares via normal equations and Cholesky.

    ``states`` is a (T, n) matrix or a list of states; ``targets`` has length
    T. For T < n with positive ridge the dual system (T x T) is solved, which
    is algebraically identical. A singular normal matrix at ridge 0 raises
    with a pointer to use a positive ridge.
    """
    S = _states_matrix(states)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if S.ndim != 2 or S.shape[0] != y.shape[0]:
        raise ValueError("states and targets must have matching counts")
    if S.shape[0] < 1:
        raise ValueError("need at least one sample")
    T, n = S.shape
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    trace = float(np.einsum("ij,ij->", S, S))
    lam_eff = ridge_lambda * trace
    dual = ridge_lambda > 0 and T < n
    G = (S @ S.T) if dual else (S.T @ S)
    G[np.diag_indices_from(G)] += lam_eff
    anorm = float(np.abs(G).sum(axis=0).max())
    try:
        cho = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        if ridge_lambda == 0:
            raise ValueError(
                "normal matrix is singular at ridge_lambda=0; pass a positive ridge_lambda"
            ) from exc
        raise
    if dual:
        alpha = scipy.linalg.cho_solve(cho, y, check_finite=False)
        a = S.T @ alpha
    else:
        a = scipy.linalg.cho_solve(cho, S.T @ y, check_finite=False)
    rcond = scipy.linalg.lapack.dpocon(cho[0], anorm, uplo=b"L")[0]
    resid = S @ a - y
    return Readout(
        a=a,
        ridge_lambda=float(ridge_lambda),
        fit_rms=float(np.sqrt(np.mean(resid * resid))),
        condition_estimate=float(1.0 / rcond) if rcond > 0 else math.inf,
    )


def window_targets(spec: OperatorSpec, u: InputSequence, m_big: int) -> np.ndarray:
    """F*_mbig evaluated on the sliding zero-padded windows of u."""
    arr = u.u
    T, d = arr.shape
    padded = np.vstack([np.zeros(((m_big - 1), d)), arr])
    wins = np.lib.stride_tricks.sliding_window_view(padded, (m_big, d))[:, 0]
    return spec.window_value(wins.reshape(T, m_big * d), m_big)


@dataclass(frozen=True)
class EvalReport:
    """Sup/mean approximation error of a fitted model over the test family."""

    sup_error: float
    mean_abs_error: float
    per_sequence_max: tuple
    n_test_sequences: int
    warmup_discarded: int
    m_big: int
    truncation_budget: float

    def __post_init__(self):
        if self.sup_error + 1e-15 < self.mean_abs_error or self.mean_abs_error < 0:
            raise ValueError("need sup_error >= mean_abs_error >= 0")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sup_error": self.sup_error,
                "mean_abs_error": self.mean_abs_error,
                "per_sequence_max": list(self.per_sequence_max),
                "n_test_sequences": self.n_test_sequences,
                "warmup_discarded": self.warmup_discarded,
                "m_big": self.m_big,
                "truncation_budget": self.truncation_budget,
            },
            sort_keys=True,
        )


def evaluate_operator_error(
    res: ShiftReservoir,
    readout: Readout,
    spec: OperatorSpec,
    test_inputs: list,
    warmup: int,
    target_tail: float = 1e-6,
    m_big: Optional[int] = None,
    horizon_cap: int = 100_000,
) -> EvalReport:
    """Run each test sequence from s0 = 0, discard the warmup, and compare
    a.s_t against F*_mbig on the input windows.

    m_big defaults to memory_horizon(spec, target_tail): the target truncation
    budget spec.tail(m_big) is reported and the evaluated error cannot honestly
    fall below it.
    """
    if readout.a.shape != (res.n,):
        raise ValueError("readout length does not match reservoir size")
    if m_big is None:
        m_big = memory_horizon(spec, target_tail, cap=horizon_cap)
    seq_max = []
    total_abs = 0.0
    total_count = 0
    sup = 0.0
    for u in test_inputs:
        if u.d != res.d:
            raise ValueError("test sequence dimension mismatch")
        states = trajectory_matrix(res, u)
        preds = readout.predict(states[warmup:])
        targets = window_targets(spec, u, m_big)[warmup:]
        if preds.size == 0:
            raise ValueError("warmup consumed the whole test sequence")
        err = np.abs(preds - targets)
        seq_max.append(float(err.max()))
        total_abs += float(err.sum())
        total_count += err.size
        sup = max(sup, seq_max[-1])
    return EvalReport(
        sup_error=sup,
        mean_abs_error=total_abs / total_count,
        per_sequence_max=tuple(seq_max),
        n_test_sequences=len(test_inputs),
        warmup_discarded=warmup,
        m_big=m_big,
        truncation_budget=float(spec.tail(m_big)),
    )


def adversarial_sequences(d: int, length: int) -> list:
    """The fixed extreme test family: +1, -1, and alternating-sign constants."""
    ones = np.ones((length, d))
    alt = np.ones((length, d))
    alt[1::2] = -1.0
    return [InputSequence(ones), InputSequence(-ones), InputSequence(alt)]


def random_sequences(d: int, length: int, count: int, seed: int) -> list:
    out = []
    for k in range(count):
        rng = _rng.philox(_rng.derive_seed(seed, "test-input", k))
        out.append(InputSequence(rng.uniform(-1.0, 1.0, size=(length, d))))
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one train/evaluate run needs; fully seeded."""

    operator: OperatorSpec
    n: int
    m: int
    d: int = 1
    seed: int = 0
    dist: SymmetricDistribution = field(default_factory=lambda: uniform(0.5))
    ridge_lambda: float = 1e-8
    train_steps: int = 5000
    test_sequences: int = 8
    test_length: int = 250
    warmup: Optional[int] = None  # None -> 3m
    include_adversarial: bool = True
    target_tail: float = 1e-6


def train_test_pipeline(cfg: PipelineConfig):
    """Sample, simulate, fit, evaluate; bit-for-bit deterministic under seeds.

    Returns (EvalReport, Readout).
    """
    warmup = 3 * cfg.m if cfg.warmup is None else cfg.warmup
    ens = sample_ensemble(cfg.dist, cfg.n, cfg.m, cfg.d, _rng.derive_seed(cfg.seed, "ensemble"))
    res = ShiftReservoir(ens)
    train_rng = _rng.philox(_rng.derive_seed(cfg.seed, "train-input"))
    train_u = InputSequence(train_rng.uniform(-1.0, 1.0, size=(warmup + cfg.train_steps, cfg.d)))
    states = trajectory_matrix(res, train_u)[warmup:]
    m_big = memory_horizon(cfg.operator, cfg.target_tail)
    targets = window_targets(cfg.operator, train_u, m_big)[warmup:]
    readout = fit_readout(states, targets, cfg.ridge_lambda)
    tests = random_sequences(cfg.d, cfg.test_length, cfg.test_sequences, cfg.seed)
    if cfg.include_adversarial:
        tests.extend(adversarial_sequences(cfg.d, cfg.test_length))
    report = evaluate_operator_error(
        res, readout, cfg.operator, tests, warmup, target_tail=cfg.target_tail, m_big=m_big
    )
    return report, readout
