import numpy as np
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structure
from nadj.swfno import load_checkpoint
from nadj.optimize import OptimizeConfig, optimize, relative_optimality

task = default_task("lens2d")
model = load_checkpoint(".tuning/m3_sm20")
for lr in (0.01, 0.02, 0.03):
    ratios = []
    finals = []
    for seed in (1000, 1001, 1002):
        start = generate_structure(StructureGenConfig(task.grid, task.mask, task.eps_min,
                                                      task.eps_max, 2.0, seed, 1), 0)
        sol = optimize(start, task.fom, OptimizeConfig(100, lr=lr, gradient_source="solver"),
                       sources=task.sources, pml=task.pml)
        sur = optimize(start, task.fom, OptimizeConfig(100, lr=lr, gradient_source="surrogate",
                                                       rescale=False),
                       sources=task.sources, pml=task.pml, model=model)
        rel = relative_optimality(sur, sol)
        ratios.append(rel.fom_ratio)
        finals.append((sol.fom_final, sur.fom_final))
    print(f"lr={lr}: ratios {[f'{r:.3f}' for r in ratios]} mean {np.mean(ratios):.3f} "
          f"finals {[(f'{a:.1f}', f'{b:.1f}') for a, b in finals]}", flush=True)
