"""Gradient-ascent design optimization, solver-in-loop or surrogate-driven.

Both modes run projected Adam ascent on the design permittivities.  In solver
mode every iteration pays one forward/adjoint pair per wavelength; in
surrogate mode the per-iteration gradient is a single network inference and
the solver is only invoked for bookkeeping: at iteration 0, at optional
checkpoints, and on the final design, so reported figures of merit are always
solver-measured.  Surrogate gradient norms can be rescaled to the trust value
recorded at the last checkpoint; without checkpoints they are used raw.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .adjoint import compute_adjoint_gradient
from .errors import ValidationError
from .fdfd import PmlSpec, SourceSpec
from .grid import DesignGrid, clamp_design
from .objectives import FomSpec
from .swfno import cosine_similarity

GRADIENT_SOURCES = ("solver", "surrogate", "surrogate_checkpointed")


@dataclass(frozen=True)
class OptimizeConfig:
    iterations: int
    lr: float = 0.05
    gradient_source: str = "solver"
    every_k: int = 10
    rescale: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.gradient_source not in GRADIENT_SOURCES:
            raise ValidationError(f"gradient_source must be one of {GRADIENT_SOURCES}")
        if self.every_k < 1:
            raise ValidationError("every_k must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")


@dataclass
class TraceRow:
    iteration: int
    fom: float | None          # solver-measured when evaluated this iteration
    grad_norm: float
    design_hash: str


@dataclass(eq=False)
class OptimizeTrace:
    mode: str
    rows: list[TraceRow]
    final_design: DesignGrid
    fom_initial: float
    fom_final: float
    solver_calls: int
    surrogate_calls: int
    seconds: list[float] = field(default_factory=list)

    def write_csv(self, path):
        """Deterministic trace (timings live in a separate file)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "fom", "grad_norm", "design_hash"])
            for row in self.rows:
                writer.writerow([
                    row.iteration,
                    "" if row.fom is None else f"{row.fom:.12g}",
                    f"{row.grad_norm:.12g}",
                    row.design_hash,
                ])

    def write_timing_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "seconds", "cumulative_seconds"])
            total = 0.0
            for i, s in enumerate(self.seconds):
                total += s
                writer.writerow([i, f"{s:.6f}", f"{total:.6f}"])


def _design_hash(eps: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(eps, dtype=np.float64).tobytes()).hexdigest()[:16]


def optimize(design0: DesignGrid, fom: FomSpec, cfg: OptimizeConfig, *,
             sources: dict[float, SourceSpec], pml: PmlSpec, model=None,
             log=None) -> OptimizeTrace:
    """Projected Adam ascent for cfg.iterations steps; see module docstring."""
    mode = cfg.gradient_source
    if mode != "solver" and model is None:
        raise ValidationError("surrogate modes need a trained model")
    if model is not None and mode != "solver":
        if model.grid != design0.grid:
            raise ValidationError("model grid does not match design grid")
        if not np.array_equal(model.mask, design0.mask):
            raise ValidationError("model mask does not match design mask")

    n_lam = len(fom.wavelengths())
    design = clamp_design(design0)
    m = np.zeros_like(design.eps)
    v = np.zeros_like(design.eps)
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8

    checkpoints = {k for k in range(cfg.every_k, cfg.iterations, cfg.every_k)}
    checkpoints.add(cfg.iterations - 1)

    rows: list[TraceRow] = []
    seconds: list[float] = []
    solver_calls = 0
    surrogate_calls = 0
    fom_initial = None
    trust_norm = None

    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        fom_here = None
        if mode == "solver":
            result = compute_adjoint_gradient(design, fom, sources, pml)
            solver_calls += 2 * n_lam
            grad = result.gradient.values
            fom_here = result.fom_value
        else:
            bookkeeping = it == 0 or (mode == "surrogate_checkpointed" and it in checkpoints)
            if bookkeeping:
                result = compute_adjoint_gradient(design, fom, sources, pml)
                solver_calls += 2 * n_lam
                fom_here = result.fom_value
                if mode == "surrogate_checkpointed":
                    trust_norm = float(np.linalg.norm(result.gradient.values))
            grad = model.predict(design).values
            surrogate_calls += 1
            if cfg.rescale and trust_norm is not None:
                norm = np.linalg.norm(grad)
                if norm > 1e-30:
                    grad = grad * (trust_norm / norm)
        if fom_initial is None and fom_here is not None:
            fom_initial = fom_here

        # Adam ascent step with projection onto the eps box
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** (it + 1))
        v_hat = v / (1.0 - beta2 ** (it + 1))
        new_eps = design.eps + cfg.lr * m_hat / (np.sqrt(v_hat) + eps_adam)
        design = clamp_design(design.with_eps(new_eps))

        seconds.append(time.perf_counter() - t0)
        rows.append(TraceRow(it, fom_here, float(np.linalg.norm(grad)), _design_hash(design.eps)))
        if log and (it % 10 == 0 or it == cfg.iterations - 1):
            shown = "" if fom_here is None else f" fom={fom_here:.5g}"
            log(f"iter {it}:{shown} |g|={rows[-1].grad_norm:.4g}")

    # final design is always solver-measured
    final_result = compute_adjoint_gradient(design, fom, sources, pml)
    solver_calls += 2 * n_lam
    if fom_initial is None:
        fom_initial = final_result.fom_value

    return OptimizeTrace(
        mode=mode,
        rows=rows,
        final_design=design,
        fom_initial=float(fom_initial),
        fom_final=float(final_result.fom_value),
        solver_calls=solver_calls,
        surrogate_calls=surrogate_calls,
        seconds=seconds,
    )


@dataclass(frozen=True)
class RelativeOptimality:
    fom_ratio: float
    structure_cosine: float


def relative_optimality(ours: OptimizeTrace, ref: OptimizeTrace) -> RelativeOptimality:
    """Final-FoM ratio and centered structure cosine between two runs."""
    a, b = ours.final_design, ref.final_design
    if a.grid != b.grid or not np.array_equal(a.mask, b.mask):
        raise ValidationError("traces come from different grids or masks")
    mid_a = 0.5 * (a.eps_min + a.eps_max)
    mid_b = 0.5 * (b.eps_min + b.eps_max)
    ca = a.eps - mid_a
    cb = b.eps - mid_b
    na, nb = np.linalg.norm(ca), np.linalg.norm(cb)
    cosine = 0.0 if na < 1e-12 or nb < 1e-12 else float(np.dot(ca, cb) / (na * nb))
    return RelativeOptimality(
        fom_ratio=ours.fom_final / ref.fom_final,
        structure_cosine=cosine,
    )


@dataclass(eq=False)
class BenchmarkReport:
    solver_seconds: float        # mean per-iteration gradient time, solver mode
    surrogate_seconds: float     # mean per-iteration gradient time, surrogate mode
    speedup: float
    solver_curve: list[float]    # cumulative wall-clock per iteration
    surrogate_curve: list[float]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "solver_cumulative_s", "surrogate_cumulative_s"])
            for i, (a, b) in enumerate(zip(self.solver_curve, self.surrogate_curve)):
                writer.writerow([i + 1, f"{a:.6f}", f"{b:.6f}"])


def benchmark(design0: DesignGrid, fom: FomSpec, *, sources: dict[float, SourceSpec],
              pml: PmlSpec, model, repeats: int = 10, curve_iterations: int = 50,
              seed: int = 0) -> BenchmarkReport:
    """Mean per-iteration gradient wall time for both modes on identical designs."""
    design = clamp_design(design0)
    model.predict(design)  # warm caches/plan tables outside the timed region
    compute_adjoint_gradient(design, fom, sources, pml)

    t_solver = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        compute_adjoint_gradient(design, fom, sources, pml)
        t_solver.append(time.perf_counter() - t0)
    t_sur = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model.predict(design)
        t_sur.append(time.perf_counter() - t0)

    solver_mean = float(np.mean(t_solver))
    sur_mean = float(np.mean(t_sur))

    cfg_solver = OptimizeConfig(curve_iterations, gradient_source="solver", seed=seed)
    cfg_sur = OptimizeConfig(curve_iterations, gradient_source="surrogate", seed=seed)
    trace_solver = optimize(design0, fom, cfg_solver, sources=sources, pml=pml)
    trace_sur = optimize(design0, fom, cfg_sur, sources=sources, pml=pml, model=model)

    return BenchmarkReport(
        solver_seconds=solver_mean,
        surrogate_seconds=sur_mean,
        speedup=solver_mean / sur_mean,
        solver_curve=list(np.cumsum(trace_solver.seconds)),
        surrogate_curve=list(np.cumsum(trace_sur.seconds)),
    )


@dataclass(eq=False)
class FidelityReport:
    mean: float   # percent
    std: float
    max: float
    per_record: list[float]


def eval_gradient_fidelity(model, dataset, split: str = "test") -> FidelityReport:
    """Cosine similarity (in percent) of predictions vs labels on one split."""
    indices = dataset.splits[split]
    if not indices:
        raise ValidationError(f"dataset split {split!r} is empty")
    scores = []
    for i in indices:
        record = dataset.records[i]
        pred = model.predict(record.design)
        scores.append(100.0 * cosine_similarity(pred, record.gradient))
    arr = np.asarray(scores)
    return FidelityReport(float(arr.mean()), float(arr.std()), float(arr.max()), scores)
