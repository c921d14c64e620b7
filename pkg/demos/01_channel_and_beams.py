"""Channel draws and analog beam selection for the three structures.

Draws one geometric channel for two users, builds the analog precoder of
each structure and prints how much of the channel energy each keeps.

    python3 demos/01_channel_and_beams.py
"""

import numpy as np

from mmwave_swipt_ee import experiments as ex

cfg = ex.ExperimentConfig(seed=3)

for structure in ("digital", "fully_connected", "subarray"):
    inst = ex.build_instance(cfg, trial=0, structure=structure)
    # best single-user gain h G^-1 h^H in solver units (noise of the decoder = 1)
    gains = inst.best_gain()
    print(f"{structure:16s} RF chains {inst.precoder.matrix.shape[1]:3d}   "
          f"best beam gain per user [dB]: {np.round(10 * np.log10(gains), 1)}")

inst = ex.build_instance(cfg, trial=0, structure="fully_connected")
print("circuit power [W]:", round(inst.circuit_power, 3))
