"""Print the slot-by-slot schedule of one trial for each adaptive policy."""
import numpy as np

from oas import BudgetModel, SourceModel, sample_source
from oas.posterior import reconstruct
from oas.scheduler import asymptotic_run, calibrate_target_mse, parallel_asymptotic_run, worst_component_run

model = SourceModel.sparse_gaussian(0.9)
budget = BudgetModel.from_snr(model, 20, 2.0, 8, 10.0)
truth = sample_source(model, budget.N, 1)
target = calibrate_target_mse(model, budget, 500, 0, 0.02)

for name, trace in [("worst_component", worst_component_run(model, budget, truth, 1)),
                    ("asymptotic", asymptotic_run(model, budget, target, truth, 1)),
                    ("parallel_asymptotic", parallel_asymptotic_run(model, budget, 4, target, truth, 1))]:
    err = np.mean((truth - reconstruct(model, trace.final_s, trace.final_k, budget.sigma2)) ** 2)
    print(f"== {name}: {trace.slots_used} slots, looks per component {trace.final_k.tolist()}, "
          f"mse {err:.4g}")
    print("\n".join(trace.lines()[:8]), "\n...")
