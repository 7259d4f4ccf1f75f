"""Three-state compliance table: no information, full information, designed LP."""

import numpy as np

from signalcraft import dist
from signalcraft.equilibrium import EquilibriumMap
from signalcraft.evaluate import ScaledCapacity, conditional_values, value
from signalcraft.lp import design_scaled_capacity
from signalcraft.mechanism import IntervalMechanism, no_info

prior = dist.Discrete([0.4, 0.6, 1.0], [0.3, 0.3, 0.4])
gammas = [0.5, 0.9, 1.2]
pref = ScaledCapacity.from_thresholds(prior.nu, gammas)
ident = EquilibriumMap.identity()

res = design_scaled_capacity(prior, gammas)
# cells around each atom so full information separates all three states
fi = IntervalMechanism([0.0, 0.5, 0.8, 1.0], np.eye(3))

print(f"{'mechanism':<16}{'value':>8}   conditional")
for name, mech in [("no information", no_info(1.0)), ("full information", fi),
                   ("designed", res.mechanism)]:
    cond = conditional_values(prior, pref, mech, ident)
    print(f"{name:<16}{value(prior, pref, mech, ident):8.3f}   {np.round(cond, 3)}")
print("\ndesigned rows (state -> signal):")
print(np.round(res.mechanism.rows, 4))
