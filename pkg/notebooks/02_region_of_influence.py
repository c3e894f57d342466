"""
Region of influence for an ungauged catchment
==============================================

Treat one station of a synthetic basin as ungauged. Search the weight grid
and region sizes for the region whose regional GEV reproduces its own
members best, then predict the target's return levels from the target's
attributes alone.
"""

import numpy as np

from roiflood.regional import predict_params
from roiflood.roi import RoiConfig, find_roi
from roiflood.synth import SynthConfig, generate_basin, true_quantile
from roiflood import gev

basin = generate_basin(SynthConfig(m=30, dependence=0.3, seed=1))
schema = basin.config.schema
target = basin.stations[0]

# a coarse grid keeps this quick: 35 weight vectors x J = 8..25
roi = find_roi(target.ungauged(), basin.stations, RoiConfig(grid_step=0.25), schema)
labels = ("proximity",) + schema.names
print("winning weights:")
for name, w in zip(labels, roi.weights.weights):
    print(f"  {name:<24}{w:.2f}")
print("region size J =", roi.J, " training error =", f"{roi.training_error:.4f}")
print("members:", ", ".join(roi.members.members))

# the search table: one row per weight vector, one column per J
errs = roi.candidate_errors
print("best error per J:", np.round(np.nanmin(errs, axis=0), 4))

p = predict_params(roi.model, target)
for T in (50, 100, 200):
    est = gev.return_level(T, p)
    print(f"T={T:>3}  regional {est:8.1f}  truth {true_quantile(basin, target, T):8.1f}")
