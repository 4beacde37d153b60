"""Apply all five region transforms to one seed and judge each result.

Picks the recorded label-flip example from the fixtures so at least one
transform is known to change the predicted class, then shows how the
verdict differs per transform at the same rectangle.
"""
import json
from pathlib import Path

import numpy as np

from srmt import campaign, imageio, model, nn, seeds, transforms
from srmt.sensitivity import Rect

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
OUT = Path(__file__).resolve().parent / "out" / "gallery"

net = model.load_model(FIXTURES / "model.srmtw")
seed_list, _ = seeds.load_seed_set(FIXTURES / "seeds", net)

flip = json.loads((FIXTURES / "golden_flip.json").read_text())
seed = next(s for s in seed_list if s.id == flip["seed_id"])
rect = Rect(flip["top"], flip["left"], flip["height"], flip["width"])
print(f"seed {seed.id}, class {seed.true_class} ({net.class_names[seed.true_class]}),"
      f" rectangle anchored at ({rect.top},{rect.left})")

OUT.mkdir(parents=True, exist_ok=True)
imageio.save_png(seed.pixels, OUT / "original.png")

rng = np.random.default_rng(0)
for kind in transforms.TRANSFORM_NAMES:
    follow_up = transforms.apply_transform(seed.pixels, rect, kind, rng=rng)
    verdict = campaign.judge(net, seed, follow_up)
    after = int(np.argmax(nn.forward_batch(net, follow_up[None])[0]))
    note = "" if verdict == "positive" else (
        f"  label moved to {after} ({net.class_names[after]})")
    print(f"  {kind:<15} -> {verdict}{note}")
    imageio.save_png(follow_up, OUT / f"{kind}.png")

print(f"wrote follow-up images to {OUT}")
print("a negative verdict is a metamorphic failure: occluding a small"
      " region should not change the label")
