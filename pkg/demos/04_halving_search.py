#!/usr/bin/env python3
"""The alternating halving search, step by step: shrink the sample set by
score, score the configuration, shrink the mask by recomputed scores, score
again. The inverse control keeps the below-median halves instead."""

import numpy as np

from fishgrad import data as dio
from fishgrad import models as mz
from fishgrad import search as sr
from fishgrad import training as tr

ds = dio.generate(dio.SyntheticSpec("gaussian_blobs", n=500, dims=32, classes=3,
                                    noise=0.8, seed=9))
train, valid = dio.train_valid_split(ds, 0.25, seed=0)
model = mz.build(mz.ModelSpec("mlp", input_dim=32, hidden=(24,), num_classes=3, seed=4))
cfg = sr.IRDConfig(train=tr.TrainConfig(learning_rate=0.05, max_epochs=6,
                                        batch_size=32), seed=0)

trace = sr.ird(model, train, valid, x0=np.arange(32), initial_k=64, cfg=cfg)
print(f"trace holds {len(trace)} scored configurations "
      f"(2 per iteration, {len(trace) // 2} iterations)")
print("samples trace:", trace.sample_sizes())
print("mask trace:   ", trace.mask_sizes())
print("\n  iter  phase                  |X|  |mask|  score")
for r in trace.records:
    print(f"   {r.iteration}    {r.phase:<22} {len(r.subset):3d}  {r.mask.size:5d}  {r.score:.4f}")

# The inverse control flips both selections; its kept samples are exactly
# the complement of the forward run's at each halving.
inverse = sr.ird_inverse(model, train, valid, x0=np.arange(32), initial_k=64, cfg=cfg)
fwd_kept = set(trace.records[0].subset.ids.tolist())
inv_kept = set(inverse.records[0].subset.ids.tolist())
print("\nfirst halving: forward and inverse keep disjoint halves:",
      not (fwd_kept & inv_kept), "| union covers all:",
      len(fwd_kept | inv_kept) == 32)
print(f"best score forward {trace.best_score():.4f} "
      f"vs inverse control {inverse.best_score():.4f}")
