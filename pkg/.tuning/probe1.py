import numpy as np, time, json
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structures, label_dataset
from nadj.swfno import SwfnoModel, TrainSchedule, train_stagewise, width_for_param_budget, FnoBlockConfig
from nadj.optimize import eval_gradient_fidelity

task = default_task("lens2d")   # 3 wavelengths 12/16/20
t0 = time.perf_counter()
gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max, 4.0, 42, 200)
designs = generate_structures(gen)
ds = label_dataset(designs, "lens2d", task.fom, task.sources, task.pml, seed=42,
                   generator_config=gen.to_dict())
t_label = time.perf_counter() - t0
print(f"labeled 200x3lam in {t_label:.0f}s ({t_label/200*1000:.0f} ms/sample)", flush=True)

# 3-stage width 16 L2
m3 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                      stages=3, width=16, layers=2, seed=0)
print("3-stage params:", m3.param_count(), flush=True)
t0 = time.perf_counter()
rep3 = train_stagewise(m3, ds, TrainSchedule(epochs_per_stage=12, batch_size=16, lr=2e-3))
print(f"3-stage train 12ep/stage: {time.perf_counter()-t0:.0f}s", flush=True)
fid3 = eval_gradient_fidelity(m3, ds, split="test")
print(f"3-stage test cosine: mean {fid3.mean:.2f} max {fid3.max:.2f}", flush=True)

# 1-stage Low-budget, params matched
target = m3.param_count()
w1 = width_for_param_budget(target, 3, 2, (8, 8))
m1 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                      stages=1, width=w1, layers=2, mode_budgets=[8], seed=0)
print(f"1-stage width {w1} params: {m1.param_count()}", flush=True)
t0 = time.perf_counter()
rep1 = train_stagewise(m1, ds, TrainSchedule(epochs_per_stage=36, batch_size=16, lr=2e-3))
print(f"1-stage train 36ep: {time.perf_counter()-t0:.0f}s", flush=True)
fid1 = eval_gradient_fidelity(m1, ds, split="test")
print(f"1-stage test cosine: mean {fid1.mean:.2f} max {fid1.max:.2f}", flush=True)
print(f"GAP: {fid3.mean - fid1.mean:.2f} pp", flush=True)
for r in rep3.rows[::6]: print(r, flush=True)
