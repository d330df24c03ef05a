import numpy as np, time
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structures, label_dataset
from nadj.swfno import SwfnoModel, TrainSchedule, train_stagewise, load_checkpoint, width_for_param_budget
from nadj.optimize import eval_gradient_fidelity

task = default_task("lens2d")
gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max, 2.0, 42, 320)
ds = label_dataset(generate_structures(gen), "lens2d", task.fom, task.sources, task.pml,
                   seed=42, generator_config=gen.to_dict())
m3 = load_checkpoint(".tuning/m3_sm20")
f3 = eval_gradient_fidelity(m3, ds, split="test")
print(f"sm2.0 n320 weighted(12/20/28) w16L2: 3-stage {f3.mean:.2f}", flush=True)

w1 = width_for_param_budget(m3.param_count(), 3, 2, (8, 8))
m1 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                      stages=1, width=w1, layers=2, mode_budgets=[8], seed=0)
t0 = time.perf_counter()
train_stagewise(m1, ds, TrainSchedule(60, 16, 2e-3))
f1 = eval_gradient_fidelity(m1, ds, split="test")
print(f"[G1] 1-stage w{w1} 60ep {time.perf_counter()-t0:.0f}s: {f1.mean:.2f} "
      f"GAP {f3.mean - f1.mean:+.2f}pp", flush=True)
