import numpy as np, time
from nadj.tasks import default_task
from nadj.datagen import StructureGenConfig, generate_structure, generate_structures, label_dataset
from nadj.swfno import SwfnoModel, TrainSchedule, train_stagewise, save_checkpoint, cosine_similarity
from nadj.adjoint import compute_adjoint_gradient
from nadj.optimize import OptimizeConfig, optimize
from nadj.grid import clamp_design

task = default_task("lens2d")
gen = StructureGenConfig(task.grid, task.mask, task.eps_min, task.eps_max, 2.0, 42, 320)
ds = label_dataset(generate_structures(gen), "lens2d", task.fom, task.sources, task.pml,
                   seed=42, generator_config=gen.to_dict())
m3 = SwfnoModel.build(task.grid, task.mask, task.eps_min, task.eps_max,
                      stages=3, width=16, layers=2, seed=0)
train_stagewise(m3, ds, TrainSchedule((12, 20, 28), 16, 2e-3))
save_checkpoint(m3, ".tuning/m3_sm20")
print("trained + saved", flush=True)

start = generate_structure(StructureGenConfig(task.grid, task.mask, task.eps_min,
                                              task.eps_max, 2.0, 1000, 1), 0)

# trajectory diagnostics: follow the surrogate's own path, compare each
# predicted gradient against the true adjoint gradient
design = clamp_design(start)
m = np.zeros_like(design.eps); v = np.zeros_like(design.eps)
for it in range(61):
    pred = m3.predict(design)
    true = compute_adjoint_gradient(design, task.fom, task.sources, task.pml)
    cos = cosine_similarity(pred, true.gradient)
    at_bounds = np.mean((design.eps <= 1.0 + 1e-9) | (design.eps >= 4.0 - 1e-9))
    if it % 10 == 0:
        print(f"iter {it}: fom {true.fom_value:7.2f} cos(pred,true) {cos:+.3f} "
              f"saturated {at_bounds:.2f}", flush=True)
    g = pred.values
    m = 0.9*m + 0.1*g; v = 0.999*v + 0.001*g*g
    mh = m/(1-0.9**(it+1)); vh = v/(1-0.999**(it+1))
    design = clamp_design(design.with_eps(design.eps + 0.05*mh/(np.sqrt(vh)+1e-8)))
