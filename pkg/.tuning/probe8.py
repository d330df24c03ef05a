import numpy as np
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structure
from nadj.swfno import load_checkpoint
from nadj.optimize import OptimizeConfig, optimize, relative_optimality

task = default_task("lens2d")
model = load_checkpoint(".tuning/m3_sm20")
for lr in (0.0025, 0.005, 0.0075):
    ratios, gains = [], []
    for seed in (1000, 1001, 1002):
        start = generate_structure(StructureGenConfig(task.grid, task.mask, task.eps_min,
                                                      task.eps_max, 2.0, seed, 1), 0)
        sol = optimize(start, task.fom, OptimizeConfig(100, lr=lr, gradient_source="solver"),
                       sources=task.sources, pml=task.pml)
        sur = optimize(start, task.fom, OptimizeConfig(100, lr=lr, gradient_source="surrogate",
                                                       rescale=False),
                       sources=task.sources, pml=task.pml, model=model)
        ratios.append(relative_optimality(sur, sol).fom_ratio)
        gains.append(sol.fom_final / sol.fom_initial)
    print(f"lr={lr}: rel-opt {[f'{r:.3f}' for r in ratios]} mean {np.mean(ratios):.3f}; "
          f"solver gain over start {[f'{g:.1f}x' for g in gains]}", flush=True)
