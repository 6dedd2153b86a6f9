"""Writes exp1_n100.csv: 100 iid Exp(1) draws from numpy's PCG64 with seed 20240601."""
import numpy as np

rng = np.random.default_rng(20240601)
with open("exp1_n100.csv", "w") as fh:
    fh.write("x\n")
    for v in rng.exponential(1.0, size=100):
        fh.write(f"{float(v)!r}\n")
