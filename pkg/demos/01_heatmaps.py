"""Walk one seed image through the explanation pipeline.

Loads the fixture classifier, picks the first seed from the manifest,
and writes one heat map PNG per class next to a printout of where each
map peaks. Run from anywhere; outputs land in demos/out/heatmaps/.
"""
from pathlib import Path

import numpy as np

from srmt import gradcam, model, nn, seeds

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
OUT = Path(__file__).resolve().parent / "out" / "heatmaps"

net = model.load_model(FIXTURES / "model.srmtw")
print(f"model: input {tuple(net.input_shape)}, {net.num_classes} classes")

seed_list, _ = seeds.load_seed_set(FIXTURES / "seeds", net)
seed = seed_list[0]
print(f"seed {seed.id}: labeled class {seed.true_class}"
      f" ({net.class_names[seed.true_class]})")

pred = nn.forward(net, seed.pixels)
probs = nn.softmax(pred.logits)
print(f"predicted class {pred.best_class} with p={probs[pred.best_class]:.3f}")

OUT.mkdir(parents=True, exist_ok=True)
stack = gradcam.all_class_heatmaps(net, seed.pixels, prediction=pred)
for c in range(net.num_classes):
    grid = stack[c]
    peak = tuple(int(v) for v in np.unravel_index(int(np.argmax(grid)), grid.shape))
    marker = " <- predicted" if c == pred.best_class else ""
    print(f"  class {c} ({net.class_names[c]:>8}): peak {grid.max():.3f}"
          f" at {peak}{marker}")
    gradcam.save_gray_png(grid, OUT / f"class_{c}.png")

# the input itself, for side-by-side viewing
gradcam.save_gray_png(seed.pixels[0], OUT / "seed.png")
print(f"wrote {net.num_classes + 1} PNGs to {OUT}")
