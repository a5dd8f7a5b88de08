"""Forward corruption and the self-paced timestep budget.

Shows the retention schedule, the moment behavior of the corruption, and how
the budget T reacts to a confident vs. struggling discriminator.
"""

import numpy as np
import torch

from ocugan.diffusion import (
    AdaptiveDiffusionState,
    build_schedule,
    diffuse,
    overfit_metric,
    update_T,
)

sched = build_schedule(t_max=64, beta_min=0.02, beta_max=0.20, sigma=0.5)
print("retention abar_t at t = 0, 1, 8, 32, 64:",
      [round(float(sched.retention[t]), 4) for t in (0, 1, 8, 32, 64)])

g = torch.Generator().manual_seed(0)
x = torch.full((4000, 1, 4, 4), 0.6)
for t_val in (0, 8, 32):
    y = diffuse(x, torch.full((4000,), t_val, dtype=torch.long), sched, rng=g)
    abar = float(sched.retention[t_val])
    print(f"t={t_val:>2}: sample mean {y.mean():+.4f} (expect {np.sqrt(abar) * 0.6:+.4f}),"
          f" sample var {y.var():.4f} (expect {(1 - abar) * 0.25:.4f})")

print("\nbudget dynamics: confident discriminator (r_d=1) raises T, weak one lowers it")
state = AdaptiveDiffusionState(t_current=4, t_min=4, t_max=64, c_step=1)
trace = [state.t_current]
for _ in range(10):
    update_T(state, 1.0)
    trace.append(state.t_current)
for _ in range(5):
    update_T(state, -1.0)
    trace.append(state.t_current)
print("T trace:", trace)

outputs = np.array([0.9, 0.8, 0.55, 0.3])
print(f"overfit metric of D outputs {outputs.tolist()}: {overfit_metric(outputs):+.2f}")
