"""Experiment dispatch: enumerate grid cells, seed them independently, run.

Each experiment is a list of independent cells (grid points, trials,
windows). A cell's seed is derived from the non-grid config hash, the
experiment name and the cell coordinates, so cells are isolated: editing the
grid or rerunning a subset reproduces the exact same per-cell streams.

Cells run in a worker pool but results are gathered in deterministic cell
order; a failing cell contributes a structured error entry instead of
aborting the grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import _rng, bounds, fourier, solver
from ..ensemble import sample_ensemble, uniform
from ..operators import get_operator, truncate
from ..readout import PipelineConfig, train_test_pipeline
from ..reservoir import InputSequence, ShiftReservoir, StateVector, trajectory_matrix
from .config import ExperimentConfig
from .records import ResultRecord, now_iso


def _cell_seed(config: ExperimentConfig, *coords) -> int:
    return _rng.derive_seed(config.seed_base, config.experiment, *coords)


def run_experiment(config: ExperimentConfig) -> ResultRecord:
    """Execute the configured experiment grid and assemble a ResultRecord.

    The record is not written to disk here; callers persist it through
    records.write_record.
    """
    runner = _RUNNERS.get(config.experiment)
    if runner is None:
        raise ValueError(f"unknown experiment {config.experiment!r}")
    plan = runner(config)
    workers = max(1, int(config.params.get("workers", 1)))
    outcomes = []
    if workers == 1:
        for cell in plan.cells:
            try:
                outcomes.append(plan.cell_fn(cell))
            except Exception as exc:  # noqa: BLE001 - containment is the contract
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(plan.cell_fn, cell) for cell in plan.cells]
            for fut in futures:  # gather in submission (= cell) order
                outcomes.append(fut.exception() or fut.result())
    rows, failures = [], []
    for cell, outcome in zip(plan.cells, outcomes):
        if isinstance(outcome, Exception):
            failures.append([repr(cell), f"{type(outcome).__name__}: {outcome}"])
        else:
            rows.extend(outcome)
    record = ResultRecord(
        config_hash=config.config_hash,
        experiment=config.experiment,
        header=plan.header,
        rows=rows,
        created_at=now_iso(),
        failed_cells=failures,
    )
    record.summary = plan.summarize(rows) if plan.summarize else {}
    return record


class _Plan:
    def __init__(self, header, cells, cell_fn, summarize=None):
        self.header = header
        self.cells = cells
        self.cell_fn = cell_fn
        self.summarize = summarize


# ---------------------------------------------------------------------------
# reconstruction: Monte Carlo check of the exact identity E[c w relu(w.x+b)] = x


def _plan_reconstruction(config: ExperimentConfig) -> _Plan:
    p = config.params
    dist = uniform(0.5)

    def cell_fn(md: int):
        seed = _cell_seed(config, "md", md)
        rng = _rng.philox(_rng.derive_seed(seed, "x"))
        xs = rng.uniform(-p["x_radius"], p["x_radius"], size=(p["x_count"], md))
        means, ses = bounds.reconstruction_mc_check(
            dist, md, xs, p["draws"], _rng.derive_seed(seed, "draws")
        )
        rows = []
        for i in range(p["x_count"]):
            for j in range(md):
                err = abs(means[i, j] - xs[i, j])
                rows.append(
                    (md, i, j, xs[i, j], means[i, j], ses[i, j], err, err <= 4.0 * ses[i, j])
                )
        return rows

    def summarize(rows):
        ok = [r[-1] for r in rows]
        return {"coordinates_checked": len(ok), "within_4se": int(sum(ok))}

    return _Plan(
        ["md", "x_index", "coord", "target", "mean", "se", "abs_error", "ok"],
        list(p["md_grid"]),
        cell_fn,
        summarize,
    )


# ---------------------------------------------------------------------------
# deviation: empirical trials of the random-feature sup deviation lemma

_KNOWN_G = {
    "const": lambda bound: (lambda w: np.full(np.asarray(w).shape[0], bound)),
    "cos": lambda bound: (lambda w: bound * np.cos(2.0 * np.pi * np.asarray(w)[:, 0])),
}


def _plan_deviation(config: ExperimentConfig) -> _Plan:
    p = config.params
    if p["g_id"] not in _KNOWN_G:
        raise ValueError(f"unknown g_id {p['g_id']!r}; known: {sorted(_KNOWN_G)}")
    g = _KNOWN_G[p["g_id"]](p["g_bound"])
    grid_points = p["grid_points"] or int(np.ceil(2.0 * np.sqrt(p["n"]))) + 1
    reference = bounds.integral_reference(
        g, p["d"], p["r"], grid_points, p["n"], seed=_cell_seed(config, "reference")
    )

    def cell_fn(trial: int):
        t = bounds.deviation_trial(
            g,
            p["g_bound"],
            p["d"],
            p["n"],
            p["r"],
            p["delta"],
            _cell_seed(config, "trial", trial),
            grid_points=grid_points,
            reference=reference,
        )
        return [(trial, t.n, t.d, t.empirical_sup, t.bound, t.violated)]

    def summarize(rows):
        violated = [r[5] for r in rows]
        frac = (sum(violated) / len(violated)) if violated else 0.0
        return {
            "violation_fraction": frac,
            "delta": p["delta"],
            "reference_method": reference.method,
            "reference_budget": reference.error_budget,
        }

    return _Plan(
        ["trial", "n", "d", "empirical_sup", "bound", "violated"],
        list(range(p["trials"])),
        cell_fn,
        summarize,
    )


# ---------------------------------------------------------------------------
# esn_approx: the train/test pipeline over an n-grid


def _resolve_operator(p):
    spec = get_operator(p["operator"])
    floor_spec = spec
    if p.get("truncate_to_m", False):
        # capped-memory surrogate; the discarded tail shows up only in the
        # theory column (total_bound), as the floor of the comparison
        spec = truncate(spec, p["m"])
    return spec, floor_spec


def _plan_esn_approx(config: ExperimentConfig) -> _Plan:
    p = config.params
    target, floor_spec = _resolve_operator(p)
    budgets = {
        n: bounds.theorem_budget(floor_spec, p["m"], p["d"], n, p["delta"], B_m=p["b_m"])
        for n in p["n_grid"]
    }

    def cell_fn(cell):
        n, seed_idx = cell
        cfg = PipelineConfig(
            operator=target,
            n=n,
            m=p["m"],
            d=p["d"],
            seed=_cell_seed(config, "n", n, "seed", seed_idx),
            ridge_lambda=p["ridge"],
            train_steps=p["train_steps"],
            test_sequences=p["test_sequences"],
            test_length=p["test_length"],
            warmup=None if p["warmup"] < 0 else p["warmup"],
            include_adversarial=p["adversarial"],
        )
        report, _ = train_test_pipeline(cfg)
        return [
            (
                n,
                p["m"],
                p["d"],
                seed_idx,
                p["ridge"],
                report.sup_error,
                report.mean_abs_error,
                budgets[n].total_bound,
            )
        ]

    def summarize(rows):
        med = {}
        for n in p["n_grid"]:
            errs = [r[5] for r in rows if r[0] == n]
            if errs:
                med[str(n)] = float(np.median(errs))
        return {"median_sup_error": med, "operator": target.label}

    cells = [(n, s) for n in p["n_grid"] for s in range(p["seeds"])]
    return _Plan(
        ["n", "m", "d", "seed", "lambda_ridge", "sup_error", "mean_abs_error", "total_bound"],
        cells,
        cell_fn,
        summarize,
    )


# ---------------------------------------------------------------------------
# fixed_point: existence certificates on random windows


def _plan_fixed_point(config: ExperimentConfig) -> _Plan:
    p = config.params
    dist = uniform(0.5)

    def cell_fn(window: int):
        seed = _cell_seed(config, "window", window)
        ens = sample_ensemble(dist, p["n"], p["m"], p["d"], _rng.derive_seed(seed, "ensemble"))
        res = ShiftReservoir(ens)
        rng = _rng.philox(_rng.derive_seed(seed, "input"))
        u = InputSequence(rng.uniform(-1.0, 1.0, size=(p["window_length"], p["d"])))
        result = solver.fixed_point_solve(res, u, tol=p["tol"], max_iters=p["max_iters"])
        cert = solver.certificate(res, result, u)
        return [
            (
                window,
                result.residual,
                result.iters,
                result.converged,
                cert["max_window_proximity"],
                result.box_violations,
            )
        ]

    def summarize(rows):
        conv = [r[3] for r in rows]
        prox = [r[4] for r in rows if r[3]]
        return {
            "converged": int(sum(conv)),
            "windows": len(conv),
            "max_window_proximity": max(prox) if prox else None,
            "tol": p["tol"],
        }

    return _Plan(
        ["window", "residual", "iters", "converged", "max_window_proximity", "box_violations"],
        list(range(p["windows"])),
        cell_fn,
        summarize,
    )


# ---------------------------------------------------------------------------
# weak_esp: dual-trajectory forgetting diagnostic with a fitted readout


def _plan_weak_esp(config: ExperimentConfig) -> _Plan:
    p = config.params
    target, _ = _resolve_operator(p)

    def cell_fn(_cell):
        seed = _cell_seed(config, "run")
        cfg = PipelineConfig(
            operator=target,
            n=p["n"],
            m=p["m"],
            d=p["d"],
            seed=seed,
            ridge_lambda=p["ridge"],
            train_steps=p["train_steps"],
        )
        report, readout = train_test_pipeline(cfg)
        threshold = p["threshold_factor"] * report.sup_error
        ens = sample_ensemble(uniform(0.5), p["n"], p["m"], p["d"], _rng.derive_seed(seed, "ensemble"))
        res = ShiftReservoir(ens)
        rng = _rng.philox(_rng.derive_seed(seed, "esp-input"))
        u = InputSequence(rng.uniform(-1.0, 1.0, size=(p["steps"], p["d"])))
        s0 = StateVector(_rng.philox(_rng.derive_seed(seed, "s0")).uniform(0.0, 1.0, p["n"]), 0)
        s0_alt = StateVector(_rng.philox(_rng.derive_seed(seed, "s0-alt")).uniform(0.0, 1.0, p["n"]), 0)
        sa = trajectory_matrix(res, u, s0)
        sb = trajectory_matrix(res, u, s0_alt)
        state_gap = np.abs(sa - sb).max(axis=1)
        output_gap = np.abs(sa @ readout.a - sb @ readout.a)
        return [
            (t + 1, state_gap[t], output_gap[t], threshold, output_gap[t] <= threshold)
            for t in range(p["steps"])
        ]

    def summarize(rows):
        start = 3 * p["m"]
        kept = [r for r in rows if r[0] >= start]
        within = sum(r[4] for r in kept)
        return {
            "fraction_within": within / len(kept) if kept else None,
            "steps_kept": len(kept),
            "threshold_factor": p["threshold_factor"],
        }

    return _Plan(
        ["t", "state_gap", "output_gap", "threshold", "within"],
        [0],
        cell_fn,
        summarize,
    )


# ---------------------------------------------------------------------------
# fourier_verify: representation identity + support/bound invariants


def _plan_fourier_verify(config: ExperimentConfig) -> _Plan:
    p = config.params
    profile = fourier.get_profile(p["profile"])
    stats = {}

    def cell_fn(_cell):
        seed = _cell_seed(config, "verify")
        rep = fourier.representation_from_profile(profile, seed=_rng.derive_seed(seed, "sup"))
        grid = np.linspace(-1.0, 1.0, p["grid_points"])
        report = fourier.verify_representation(
            rep, profile.f_exact, grid, p["mc_samples"], _rng.derive_seed(seed, "mc")
        )
        rng = _rng.philox(_rng.derive_seed(seed, "invariants"))
        w = rng.uniform(-0.75, 0.75, size=(p["invariant_samples"], profile.d))
        b = rng.uniform(-0.75, 0.75, size=p["invariant_samples"])
        g = rep.g(w, b)
        outside = (np.abs(w).sum(axis=1) > 0.5) | (np.abs(b) > 0.5)
        stats["support_violations"] = int((g[outside] != 0.0).sum())
        stats["bound_violations"] = int((np.abs(g) > rep.sup_bound * (1 + 1e-9)).sum())
        stats["passed"] = report.passed
        stats["inconclusive"] = report.inconclusive
        return [
            (float(x[0]), e, f, err, se, err <= 4.0 * se)
            for x, e, f, err, se in zip(
                report.x_grid, report.estimates, report.exact, report.errors, report.ses
            )
        ]

    def summarize(rows):
        return {"profile": profile.label, **stats}

    return _Plan(["x", "estimate", "exact", "abs_error", "se", "ok"], [0], cell_fn, summarize)


# ---------------------------------------------------------------------------
# budget_table: pure formula evaluation over a grid


def _plan_budget_table(config: ExperimentConfig) -> _Plan:
    p = config.params
    spec = get_operator(p["operator"]) if p["operator"] else None

    def cell_fn(cell):
        m, d, n = cell
        if spec is not None:
            budget = bounds.theorem_budget(spec, m, d, n, p["delta"], B_m=p["b_m"])
        else:
            budget = bounds.theorem_budget(_ZERO_TAIL, m, d, n, p["delta"], B_m=p["b_m"])
        return [
            (
                budget.m,
                budget.d,
                budget.delta,
                budget.B_m,
                budget.n,
                budget.E1,
                budget.E2,
                budget.C_mdd,
                budget.c_mdd,
                budget.feasible,
                budget.tail_EF,
                budget.total_bound,
            )
        ]

    cells = [(m, d, n) for m in p["m_grid"] for d in p["d_grid"] for n in p["n_grid"]]
    return _Plan(
        ["m", "d", "delta", "B_m", "n", "E1", "E2", "C", "c", "feasible", "tail", "total_bound"],
        cells,
        cell_fn,
    )


class _ZeroTailSpec:
    label = "none"
    representation_bound = None

    @staticmethod
    def tail(m):
        return 0.0


_ZERO_TAIL = _ZeroTailSpec()


_RUNNERS = {
    "reconstruction": _plan_reconstruction,
    "deviation": _plan_deviation,
    "esn_approx": _plan_esn_approx,
    "fixed_point": _plan_fixed_point,
    "weak_esp": _plan_weak_esp,
    "fourier_verify": _plan_fourier_verify,
    "budget_table": _plan_budget_table,
}
