#!/usr/bin/env python3
"""Run the (sparsity x samples) staircase in both modes, compare cell by
cell, and emit the green heatmaps with up/down glyphs as standalone SVG."""

from pathlib import Path

from fishgrad import data as dio
from fishgrad import models as mz
from fishgrad import report as rep
from fishgrad import search as sr
from fishgrad import training as tr

out_dir = Path("demo_output")
out_dir.mkdir(exist_ok=True)

ds = dio.generate(dio.SyntheticSpec("gaussian_blobs", n=600, dims=64, classes=3,
                                    noise=0.7, seed=11))
train, valid = dio.train_valid_split(ds, 0.25, seed=0)
task = sr.Task(train, valid)
model_spec = mz.ModelSpec("mlp", input_dim=64, hidden=(48,), num_classes=3, seed=0)
cfg = sr.IRDConfig(train=tr.TrainConfig(learning_rate=0.08, max_epochs=10,
                                        batch_size=32))

grids = {}
for mode in ("fish_random", "ird"):
    spec = sr.GridSpec(mode=mode, seeds=(0, 1, 2))  # default staircase axes
    grids[mode] = sr.run_grid(spec, task, model_spec, cfg)
    print(f"{mode}: {len(grids[mode].cells)} cells, "
          f"best {grids[mode].best_score():.4f}")

comparison = sr.compare_grids(grids["fish_random"], grids["ird"])
print(f"cell directions: {comparison.ups} up, {comparison.downs} down, "
      f"{comparison.ties} tie")

(out_dir / "baseline.svg").write_text(
    rep.render_heatmap(grids["fish_random"], title="random-sample baseline"))
(out_dir / "search.svg").write_text(
    rep.render_heatmap(grids["ird"], comparison, title="halving search"))
(out_dir / "comparison.csv").write_text(
    rep.comparison_csv(grids["fish_random"], grids["ird"], comparison))
print(f"wrote {out_dir}/baseline.svg, search.svg, comparison.csv")
