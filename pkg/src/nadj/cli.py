"""Command-line pipeline: gen-data, train, optimize, check-grad.

One YAML config file drives every stage; flags (and generic --set key=value
overrides) take precedence over file values and unknown keys are rejected.
Exit codes are stable: 0 success, 1 config/validation, 2 solver, 3 training,
4 storage/I-O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .adjoint import compute_adjoint_gradient, finite_difference_gradient
from .datagen import (StructureGenConfig, generate_structure, generate_structures,
                      label_dataset, load_dataset, save_dataset)
from .errors import NadjError, ValidationError
from .fdfd import assemble, solve
from .grid import DesignGrid
from .optimize import (OptimizeConfig, benchmark, optimize, relative_optimality)
from .render import save_grayscale_png
from .swfno import (SwfnoModel, TrainSchedule, load_checkpoint, save_checkpoint,
                    train_stagewise)
from .tasks import TASK_NAMES, build_task, task_defaults

PIPELINE_DEFAULTS = dict(
    seed=42,
    threads=1,
    generator=dict(count=640),
    model=dict(stages=3, width=16, layers=2, mode_budgets=None, band_pass=False,
               dtype="f32"),
    training=dict(epochs_per_stage=40, batch_size=16, lr=2e-3),
    optimize=dict(iterations=100, lr=0.004, every_k=10, rescale=True),
)


def _merge_validate(defaults: dict, overrides: dict, path: str = "") -> dict:
    """Deep merge with unknown-key rejection."""
    out = dict(defaults)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ValidationError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge_validate(defaults[key], value, where)
        else:
            out[key] = value
    return out


def load_config(task: str | None, config_path: str | None, sets: list[str]) -> dict:
    file_cfg = {}
    if config_path:
        raw = Path(config_path)
        if not raw.exists():
            raise ValidationError(f"config file not found: {config_path}")
        file_cfg = yaml.safe_load(raw.read_text()) or {}
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a mapping")
    name = task or file_cfg.get("task")
    if name is None:
        raise ValidationError(f"no task given; choose one of {TASK_NAMES}")
    import copy

    defaults = copy.deepcopy({**task_defaults(name), **PIPELINE_DEFAULTS})
    cfg = _merge_validate(defaults, file_cfg)
    for item in sets or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        node = cfg
        parts = key.split(".")
        probe = defaults
        for part in parts[:-1]:
            if not isinstance(probe, dict) or part not in probe:
                raise ValidationError(f"unknown config key: {key}")
            probe = probe[part]
            node = node.setdefault(part, {})
        if not isinstance(probe, dict) or parts[-1] not in probe:
            raise ValidationError(f"unknown config key: {key}")
        node[parts[-1]] = yaml.safe_load(value)
    cfg["task"] = name
    return cfg


def _resolve_out(out: str | None, kind: str, seed: int) -> Path:
    if out:
        return Path(out)
    root = Path(os.environ.get("NADJ_OUT_ROOT", "runs"))
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return root / f"{kind}-{stamp}-seed{seed}"


def _log(msg: str):
    print(msg, flush=True)


# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = load_config(args.task, args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.count is not None:
        cfg["generator"]["count"] = args.count
    if args.threads is not None:
        cfg["threads"] = args.threads
    task = build_task(cfg)
    gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max,
                             task.smoothness, cfg["seed"], cfg["generator"]["count"])
    _log(f"generating {gen.count} structures ({task.name}, seed {gen.seed})")
    designs = generate_structures(gen)
    _log(f"labeling with {len(task.wavelengths)} wavelength(s), "
         f"{2 * len(task.wavelengths)} solves per sample, {cfg['threads']} worker(s)")
    t0 = time.perf_counter()
    dataset = label_dataset(designs, task.name, task.fom, task.sources, task.pml,
                            seed=cfg["seed"], generator_config=gen.to_dict(),
                            workers=cfg["threads"], log=_log)
    out = _resolve_out(args.out, "dataset", cfg["seed"])
    save_dataset(dataset, out)
    _log(f"labeled {len(dataset)} records in {time.perf_counter() - t0:.1f}s -> {out}")
    _log(f"splits: train {len(dataset.splits['train'])} / val {len(dataset.splits['val'])}"
         f" / test {len(dataset.splits['test'])}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.task, args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    model_cfg = cfg["model"]
    if args.stages is not None:
        model_cfg["stages"] = args.stages
    if args.width is not None:
        model_cfg["width"] = args.width
    if args.epochs is not None:
        cfg["training"]["epochs_per_stage"] = args.epochs
    dataset = load_dataset(args.dataset)
    grid_info = dataset.manifest["grid"]
    from .grid import GridSpec

    grid = GridSpec(tuple(grid_info["shape"]), grid_info["spacing"],
                    tuple(grid_info["origin"]))
    mask = dataset.records[0].design.mask
    dtype = np.float64 if model_cfg["dtype"] == "f64" else np.float32
    model = SwfnoModel.build(grid, mask, dataset.manifest["eps_min"],
                             dataset.manifest["eps_max"], stages=model_cfg["stages"],
                             width=model_cfg["width"], layers=model_cfg["layers"],
                             mode_budgets=model_cfg["mode_budgets"], dtype=dtype,
                             seed=cfg["seed"], band_pass=model_cfg["band_pass"])
    _log(f"model: {model_cfg['stages']} stage(s), width {model_cfg['width']}, "
         f"{model.param_count():,} parameters")
    schedule = TrainSchedule(cfg["training"]["epochs_per_stage"],
                             cfg["training"]["batch_size"], cfg["training"]["lr"],
                             seed=cfg["seed"])
    out = _resolve_out(args.out, "model", cfg["seed"])
    report = train_stagewise(model, dataset, schedule, checkpoint_dir=out,
                             resume=args.resume, log=_log)
    save_checkpoint(model, out)
    report.to_csv(Path(out) / "training_report.csv")
    _log(f"checkpoint -> {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.task, args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.iters is not None:
        cfg["optimize"]["iterations"] = args.iters
    task = build_task(cfg)
    seed = cfg["seed"]

    model = None
    if args.mode in ("surrogate", "surrogate-ckpt", "both"):
        if not args.model or not Path(args.model).exists():
            raise ValidationError(f"missing model checkpoint path: {args.model}")
        model = load_checkpoint(args.model)

    if args.init == "random":
        gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max,
                                 task.smoothness, seed, 1)
        design0 = generate_structure(gen, 0)
    else:
        design0 = task.initial_design()

    out = _resolve_out(args.out, "optimize", seed)
    out.mkdir(parents=True, exist_ok=True)
    opt = cfg["optimize"]

    def run(mode_name: str):
        source = {"solver": "solver", "surrogate": "surrogate",
                  "surrogate-ckpt": "surrogate_checkpointed"}[mode_name]
        ocfg = OptimizeConfig(opt["iterations"], lr=opt["lr"], gradient_source=source,
                              every_k=opt["every_k"], rescale=opt["rescale"], seed=seed)
        _log(f"[{mode_name}] {ocfg.iterations} iterations on {task.name}")
        trace = optimize(design0, task.fom, ocfg, sources=task.sources, pml=task.pml,
                         model=model, log=_log)
        trace.write_csv(out / f"trace_{mode_name}.csv")
        trace.write_timing_csv(out / f"timing_{mode_name}.csv")
        from .tensorio import write_tensor

        write_tensor(out / f"design_{mode_name}.nadj", trace.final_design.eps)
        save_grayscale_png(trace.final_design.eps_image(), out / f"design_{mode_name}.png")
        for lam in task.wavelengths:
            field = solve(assemble(trace.final_design, task.sources[lam], task.pml))
            save_grayscale_png(np.abs(field.values), out / f"field_{mode_name}_lam{lam:g}.png")
        _log(f"[{mode_name}] FoM {trace.fom_initial:.5g} -> {trace.fom_final:.5g} "
             f"(solver calls {trace.solver_calls}, surrogate calls {trace.surrogate_calls})")
        return trace

    if args.mode == "both":
        trace_solver = run("solver")
        trace_sur = run("surrogate")
        rel = relative_optimality(trace_sur, trace_solver)
        bench = benchmark(design0, task.fom, sources=task.sources, pml=task.pml,
                          model=model, curve_iterations=min(opt["iterations"], 50),
                          seed=seed)
        bench.write_csv(out / "wallclock_vs_iteration.csv")
        _log("")
        _log(f"{'Task':<12} {'Rel.Opt FoM %':>14} {'Struct %':>10} "
             f"{'t/iter solver':>14} {'t/iter surrogate':>17} {'Speedup':>9}")
        _log(f"{task.name:<12} {100 * rel.fom_ratio:>14.1f} "
             f"{100 * rel.structure_cosine:>10.1f} {bench.solver_seconds:>13.4f}s "
             f"{bench.surrogate_seconds:>16.5f}s {bench.speedup:>8.1f}x")
        summary = dict(task=task.name, rel_opt_fom=rel.fom_ratio,
                       structure_cosine=rel.structure_cosine,
                       solver_s_per_iter=bench.solver_seconds,
                       surrogate_s_per_iter=bench.surrogate_seconds,
                       speedup=bench.speedup)
        (out / "comparison.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    else:
        run(args.mode)
    return 0


def cmd_check_grad(args) -> int:
    cfg = load_config(args.task, args.config, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    task = build_task(cfg)
    rng = np.random.default_rng(cfg["seed"])
    gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max,
                             task.smoothness, cfg["seed"], 1)
    design = generate_structure(gen, 0)
    all_cells = np.argwhere(task.mask)
    count = min(args.cells, len(all_cells))
    cells = all_cells[rng.choice(len(all_cells), count, replace=False)]

    result = compute_adjoint_gradient(design, task.fom, task.sources, task.pml)
    _log(f"FoM {result.fom_value:.6g}; running {count}-cell central-difference sweep "
         f"({2 * count * len(task.wavelengths)} solves)")
    fd = finite_difference_gradient(design, task.fom, task.sources, task.pml, cells, 1e-4)
    index_map = np.full(task.grid.shape, -1, dtype=int)
    index_map[task.mask] = np.arange(int(task.mask.sum()))
    adj = result.gradient.values[index_map[cells[:, 0], cells[:, 1]]]
    cosine = float(adj @ fd / (np.linalg.norm(adj) * np.linalg.norm(fd)))
    rel_l2 = float(np.linalg.norm(adj - fd) / np.linalg.norm(fd))
    passed = cosine >= 0.999 and rel_l2 <= 1e-3
    _log(f"cosine similarity: {cosine:.9f} (need >= 0.999)")
    _log(f"relative L2:       {rel_l2:.3e} (need <= 1e-3)")
    _log("PASS" if passed else "FAIL")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nadj",
        description="2D inverse design: adjoint gradients, neural gradient surrogate, "
                    "and surrogate-driven optimization.",
    )
    parser.add_argument("--version", action="version", version=f"nadj {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--task", choices=TASK_NAMES, help="task preset")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (dotted path)")
        p.add_argument("--threads", type=int,
                       help="worker count for parallel stages (recorded in logs)")

    p = sub.add_parser("gen-data", help="generate and adjoint-label a dataset")
    common(p)
    p.add_argument("--count", type=int, help="number of samples")
    p.add_argument("--out", help="dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the stage-wise gradient surrogate")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--stages", type=int, help="number of stages (1..4)")
    p.add_argument("--width", type=int, help="channel width per stage")
    p.add_argument("--epochs", type=int, help="epochs per stage")
    p.add_argument("--resume", action="store_true",
                   help="resume from the last completed stage in --out")
    p.add_argument("--out", help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="run design optimization")
    common(p)
    p.add_argument("--model", help="model checkpoint (surrogate modes)")
    p.add_argument("--mode", default="solver",
                   choices=["solver", "surrogate", "surrogate-ckpt", "both"])
    p.add_argument("--iters", type=int, help="iteration budget")
    p.add_argument("--init", default="task", choices=["task", "random"],
                   help="initial design: task preset or seeded random structure")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check-grad", help="adjoint-vs-finite-difference oracle")
    common(p)
    p.add_argument("--cells", type=int, default=50, help="design cells to sweep")
    p.set_defaults(func=cmd_check_grad)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NadjError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
