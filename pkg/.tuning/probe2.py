import numpy as np, time
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structures, label_dataset
from nadj.swfno import SwfnoModel, TrainSchedule, train_stagewise, width_for_param_budget
from nadj.optimize import eval_gradient_fidelity

def run(tag, smoothness, w3, ep, count=240):
    task = default_task("lens2d")
    gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max, smoothness, 42, count)
    ds = label_dataset(generate_structures(gen), "lens2d", task.fom, task.sources, task.pml,
                       seed=42, generator_config=gen.to_dict())
    m3 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                          stages=3, width=w3, layers=2, seed=0)
    t0=time.perf_counter()
    train_stagewise(m3, ds, TrainSchedule(ep, 16, 2e-3))
    t3=time.perf_counter()-t0
    f3 = eval_gradient_fidelity(m3, ds, split="test")
    w1 = width_for_param_budget(m3.param_count(), 3, 2, (8, 8))
    m1 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                          stages=1, width=w1, layers=2, mode_budgets=[8], seed=0)
    t0=time.perf_counter()
    train_stagewise(m1, ds, TrainSchedule(3*ep, 16, 2e-3))
    t1=time.perf_counter()-t0
    f1 = eval_gradient_fidelity(m1, ds, split="test")
    print(f"[{tag}] sm={smoothness} w3={w3} ep={ep}: 3stage {f3.mean:.2f} ({t3:.0f}s, {m3.param_count()/1e6:.2f}M) "
          f"vs 1stage(w{w1}) {f1.mean:.2f} ({t1:.0f}s) GAP {f3.mean-f1.mean:+.2f}pp", flush=True)

run("A", 3.0, 16, 12)
run("B", 3.0, 24, 12)
