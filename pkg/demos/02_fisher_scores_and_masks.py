#!/usr/bin/env python3
"""Score parameters by mean squared log-likelihood gradient and carve
sparse masks out of the top of the ranking."""

import json

import numpy as np

from fishgrad import data as dio
from fishgrad import fisher as fi
from fishgrad import models as mz

ds = dio.generate(dio.SyntheticSpec("gaussian_blobs", n=400, dims=16, classes=3,
                                    noise=0.8, seed=5))
train, valid = dio.train_valid_split(ds, 0.2, seed=0)
model = mz.build(mz.ModelSpec("mlp", input_dim=16, hidden=(12,), num_classes=3, seed=1))
print(f"model has {model.num_params} parameters")

# The ground-truth-label estimator: mean over samples of the squared
# per-sample gradient. More samples, steadier ranking.
for n in (4, 16, 64):
    diag = fi.empirical_fisher(model, train, np.arange(n))
    top = np.argsort(-diag.values)[:5]
    print(f"  scores from {n:3d} samples -> top-5 indices {top.tolist()}")

diag = fi.empirical_fisher(model, train, np.arange(64))

# The label-expectation variant sums over all classes weighted by the
# model's own predictive distribution; no labels consulted.
expectation = fi.expectation_fisher(model, train, np.arange(16))
agree = np.corrcoef(diag.values, expectation.values)[0, 1]
print(f"rank agreement (corr) between the two estimators: {agree:.3f}")

# Masks: top-k by score, lowest index on ties, against a random baseline.
for sparsity in (0.25, 0.05, 0.01):
    mask = fi.top_k_mask(diag, sparsity=sparsity)
    rand = fi.random_mask(model.num_params, sparsity, seed=7)
    overlap = len(np.intersect1d(mask.selected, rand.selected))
    print(f"sparsity {sparsity:5.2f}: k={mask.size:3d}, "
          f"overlap with a random mask {overlap}")

# Everything serializes to plain JSON for the pipeline.
print("\nmask file payload:")
print(json.dumps(fi.mask_to_json(fi.top_k_mask(diag, sparsity=0.02)), indent=2)[:240], "...")
