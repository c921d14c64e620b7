"""Median EE against the transmit power budget, as the CLI would write it.

Uses five trials to stay quick; the ``figure 7`` command runs the full
version and writes CSV files.

    python3 demos/04_power_sweep.py
"""

from mmwave_swipt_ee import experiments as ex

cfg = ex.ExperimentConfig(algorithm="zf", trials=5, sweep=("p_max_dbm", (20.0, 30.0, 40.0, 50.0)))
rows = ex.run_sweep(cfg, ("subarray",), (("zf", "max_ee"), ("zf", "max_se")))
med = ex.median_by(rows, lambda r: (r.objective, r.value))
print("P_max [dBm]   Max_EE    Max_SE   (median EE, bps/Hz/W)")
for p in cfg.sweep[1]:
    print(f"{p:8.0f}    {med['max_ee', p]:7.3f}   {med['max_se', p]:7.3f}")
