"""A pooling mechanism that mixes far-apart states against every monotone partition.

The planner wants the remote share within eps of theta / 3. Pooling low states
with a narrow band of high ones keeps posteriors small while the high band
still complies; monotone partitions cannot do that.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import best_monotone_partition_band, pooling_band_mechanism  # noqa: E402

from signalcraft import dist  # noqa: E402
from signalcraft.equilibrium import EquilibriumMap  # noqa: E402
from signalcraft.evaluate import StateBand, value  # noqa: E402
from signalcraft.mechanism import direct_of  # noqa: E402

unit, ident = dist.Uniform(0, 1), EquilibriumMap.identity()
mech = pooling_band_mechanism()
print("posteriors:", np.round(direct_of(mech, unit).theta_bar, 4))
print(f"{'eps':>6} {'pooling':>9} {'monotone':>9}")
for eps in (0.002, 0.003, 0.005, 0.01):
    pref = StateBand.linear(1 / 3, 0.0, eps)
    print(f"{eps:6.3f} {value(unit, pref, mech, ident):9.4f} "
          f"{best_monotone_partition_band(1000, 1 / 3, eps):9.4f}")
