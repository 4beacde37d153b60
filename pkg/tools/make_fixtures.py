"""Build the committed test fixtures: model, seeds, probes, golden pair.

Development-only tool; the shipped package never imports torch. Trains a
small CNN on a procedural 10-class shapes dataset, exports it in the
engine's weight format through the engine's own writer, and freezes a
seed set the model classifies correctly plus probe images with recorded
reference logits.

Run from the repo root:  python3 tools/make_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from srmt import imageio, model as model_io, nn, seeds as seeds_mod  # noqa: E402
from srmt import sensitivity, transforms  # noqa: E402

OUT = REPO / "tests" / "fixtures"
CLASS_NAMES = ("disk", "ring", "square", "frame", "triangle", "plus",
               "cross", "h_bar", "v_bar", "dots")
SIZE = 32
SEED_COUNT = 300
PROBE_COUNT = 10
R_MIN = 6.0
R_MAX = 9.0

# Training recipe.  The hinge term pulls every class logit up toward a
# margin on every image, so the evidence pathways that feed the ten
# logits share sign at the glyph.  The head shift after training adds
# the same mean-activity term to all ten logits; softmax is invariant
# under a per-image constant shift, so predictions are untouched, but
# every class's gradient field gains a common glyph-evidence component
# and the per-class heat maps line up spatially.  Without both tricks
# the mean-fusion map never clears the 0.9 default threshold on a
# ten-class model.
EPOCHS = 7
HINGE_WEIGHT = 2.0
HINGE_MARGIN = 2.0
HEAD_SHIFT = 12.0


# ---------------------------------------------------------------------------
# procedural dataset
# ---------------------------------------------------------------------------

def draw_shape(cls: int, rng: np.random.Generator) -> np.ndarray:
    """One 32x32 uint8 image: a localized glyph on a dark noisy field.

    Every class is a compact shape, so the class evidence occupies a
    small part of the image and region occlusion has somewhere to bite.
    """
    img = np.zeros((SIZE, SIZE), dtype=np.float64)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    r = rng.uniform(R_MIN, R_MAX)
    margin = r + 2
    cy = rng.uniform(margin, SIZE - margin)
    cx = rng.uniform(margin, SIZE - margin)
    fg = rng.uniform(0.7, 1.0)
    dy, dx = yy - cy, xx - cx

    if cls == 0:                                    # filled disk
        img[dy ** 2 + dx ** 2 <= r ** 2] = fg
    elif cls == 1:                                  # ring
        d2 = dy ** 2 + dx ** 2
        img[(d2 <= r ** 2) & (d2 >= (r - 2.5) ** 2)] = fg
    elif cls == 2:                                  # filled square
        img[(np.abs(dy) <= r * 0.85) & (np.abs(dx) <= r * 0.85)] = fg
    elif cls == 3:                                  # square frame
        half = r * 0.85
        inside = (np.abs(dy) <= half) & (np.abs(dx) <= half)
        inner = (np.abs(dy) <= half - 2.5) & (np.abs(dx) <= half - 2.5)
        img[inside & ~inner] = fg
    elif cls == 4:                                  # triangle
        h = r * 1.7
        rel_y = dy + h / 2
        width = np.clip(rel_y, 0, None) * 0.8
        img[(rel_y >= 0) & (rel_y <= h) & (np.abs(dx) <= width)] = fg
    elif cls == 5:                                  # plus
        arm = max(2.0, r * 0.33)
        img[(np.abs(dy) <= arm) & (np.abs(dx) <= r)] = fg
        img[(np.abs(dx) <= arm) & (np.abs(dy) <= r)] = fg
    elif cls == 6:                                  # diagonal cross
        box = (np.abs(dy) <= r) & (np.abs(dx) <= r)
        img[box & ((np.abs(dy - dx) <= 2.2) | (np.abs(dy + dx) <= 2.2))] = fg
    elif cls == 7:                                  # horizontal bar
        img[(np.abs(dy) <= r * 0.3) & (np.abs(dx) <= r)] = fg
    elif cls == 8:                                  # vertical bar
        img[(np.abs(dx) <= r * 0.3) & (np.abs(dy) <= r)] = fg
    else:                                           # two dots on a diagonal
        s = r * 0.62
        img[(dy - s) ** 2 + (dx - s) ** 2 <= (r * 0.45) ** 2] = fg
        img[(dy + s) ** 2 + (dx + s) ** 2 <= (r * 0.45) ** 2] = fg

    img += rng.normal(0, 0.05, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0).astype(np.uint8)


def make_dataset(count: int, rng: np.random.Generator):
    labels = rng.integers(0, 10, size=count)
    images = np.stack([draw_shape(int(c), rng) for c in labels])
    return images, labels.astype(np.int64)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

class Net(tnn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = tnn.Conv2d(1, 8, 3, padding=1)
        self.conv2 = tnn.Conv2d(8, 16, 3, padding=1)
        self.fc1 = tnn.Linear(16 * 8 * 8, 32)
        self.fc2 = tnn.Linear(32, 10)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return self.fc2(x)


def train(rng: np.random.Generator) -> tuple[Net, float, np.ndarray, np.ndarray]:
    train_x, train_y = make_dataset(12000, rng)
    test_x, test_y = make_dataset(3000, rng)
    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    tx = torch.from_numpy(train_x[:, None].astype(np.float32) / 255.0)
    ty = torch.from_numpy(train_y)
    for epoch in range(EPOCHS):
        perm = torch.from_numpy(rng.permutation(len(tx)))
        total = correct = 0
        for start in range(0, len(tx), 128):
            idx = perm[start:start + 128]
            opt.zero_grad()
            out = net(tx[idx])
            loss = (F.cross_entropy(out, ty[idx])
                    + HINGE_WEIGHT * F.relu(HINGE_MARGIN - out).mean())
            loss.backward()
            opt.step()
            total += len(idx)
            correct += (out.argmax(1) == ty[idx]).sum().item()
        print(f"epoch {epoch}: train acc {correct / total:.3f}")
    with torch.no_grad():
        # shared head shift: adds the same mean-fc1-activity value to all
        # ten logits (see the recipe note above)
        net.fc2.weight += HEAD_SHIFT / net.fc1.out_features
    net.eval()
    with torch.no_grad():
        out = net(torch.from_numpy(test_x[:, None].astype(np.float32) / 255.0))
        acc = (out.argmax(1).numpy() == test_y).mean()
    print(f"test acc {acc:.3f}")
    return net, float(acc), test_x, test_y


def export_model(net: Net, path: Path) -> model_io.ModelSpec:
    def w(t): return t.detach().numpy().astype(np.float32)
    layers = [
        model_io.conv_layer(8, (3, 3), padding=1, activation="relu",
                            weight=w(net.conv1.weight), bias=w(net.conv1.bias)),
        model_io.maxpool_layer(),
        model_io.conv_layer(16, (3, 3), padding=1, activation="relu",
                            weight=w(net.conv2.weight), bias=w(net.conv2.bias)),
        model_io.maxpool_layer(),
        model_io.flatten_layer(),
        model_io.dense_layer(32, activation="relu",
                             weight=w(net.fc1.weight), bias=w(net.fc1.bias)),
        model_io.dense_layer(10, weight=w(net.fc2.weight), bias=w(net.fc2.bias)),
    ]
    spec = model_io.new_model((1, SIZE, SIZE), layers, class_names=CLASS_NAMES)
    model_io.write_model(spec, path)
    return model_io.load_model(path)


def main() -> None:
    torch.manual_seed(20260822)
    torch.set_num_threads(1)
    rng = np.random.default_rng(20260822)
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "seeds").mkdir(exist_ok=True)
    (OUT / "probes").mkdir(exist_ok=True)

    net, acc, test_x, test_y = train(rng)
    assert acc >= 0.60, f"test accuracy {acc} too weak for a usable fixture"

    spec = export_model(net, OUT / "model.srmtw")

    # torch predictions on the quantized pixels the PNG files will carry
    with torch.no_grad():
        torch_logits = net(torch.from_numpy(
            test_x[:, None].astype(np.float32) / 255.0)).numpy()
    torch_pred = torch_logits.argmax(1)

    # engine predictions must agree for the committed seeds
    engine_logits = []
    for start in range(0, len(test_x), 256):
        batch = test_x[start:start + 256, None].astype(np.float32) / np.float32(255)
        engine_logits.append(nn.forward_batch(spec, batch))
    engine_logits = np.concatenate(engine_logits)
    engine_pred = engine_logits.argmax(1)

    usable = (torch_pred == test_y) & (engine_pred == test_y)
    print(f"correctly classified by both: {usable.sum()} / {len(test_y)}")

    # balanced-ish seed pick: walk the test set in order, cap per class
    per_class_cap = SEED_COUNT // 10 + 5
    taken: dict[int, int] = {}
    seed_rows = []
    for i in np.flatnonzero(usable):
        cls = int(test_y[i])
        if taken.get(cls, 0) >= per_class_cap:
            continue
        taken[cls] = taken.get(cls, 0) + 1
        seed_rows.append(int(i))
        if len(seed_rows) == SEED_COUNT:
            break
    assert len(seed_rows) == SEED_COUNT

    manifest_lines = ["filename,class_index"]
    for n, i in enumerate(seed_rows):
        name = f"seed_{n:03d}.png"
        imageio.save_png(test_x[i][None].astype(np.float32) / np.float32(255),
                         OUT / "seeds" / name)
        manifest_lines.append(f"{name},{int(test_y[i])}")
    (OUT / "seeds" / "manifest.csv").write_text("\n".join(manifest_lines) + "\n")

    # probes: one per class where possible, torch logits recorded as reference
    probe_idx = []
    for cls in range(10):
        hits = [i for i in np.flatnonzero(usable) if test_y[i] == cls and i not in seed_rows]
        if hits:
            probe_idx.append(hits[0])
    probe_idx = probe_idx[:PROBE_COUNT]
    while len(probe_idx) < PROBE_COUNT:
        probe_idx.append(int(np.flatnonzero(usable)[len(probe_idx)]))
    sidecar = {}
    for n, i in enumerate(probe_idx):
        name = f"probe_{n}.png"
        imageio.save_png(test_x[i][None].astype(np.float32) / np.float32(255),
                         OUT / "probes" / name)
        sidecar[name] = [float(v) for v in torch_logits[i]]
    (OUT / "probes" / "probe_logits.json").write_text(
        json.dumps(sidecar, indent=2) + "\n")

    # golden judge pair: first (seed, anchor) whose hole transform flips the label
    seed_list, _ = seeds_mod.load_seed_set(OUT / "seeds", spec)
    golden = None
    for seed in seed_list:
        for top in range(0, SIZE - 10 + 1, 2):
            for left in range(0, SIZE - 10 + 1, 2):
                rect = sensitivity.Rect(top, left, 10, 10)
                follow = transforms.apply_transform(seed.pixels, rect, "hole")
                pred = int(np.argmax(nn.forward_batch(spec, follow[None])[0]))
                if pred != seed.true_class:
                    golden = {"seed_id": seed.id, "top": top, "left": left,
                              "height": 10, "width": 10, "transform": "hole",
                              "true_class": seed.true_class, "flipped_class": pred}
                    break
            if golden:
                break
        if golden:
            break
    assert golden, "no label-flipping hole transform found"
    (OUT / "golden_flip.json").write_text(json.dumps(golden, indent=2) + "\n")

    summary = {
        "test_accuracy": acc,
        "seed_count": len(seed_rows),
        "probe_count": len(probe_idx),
        "class_names": list(CLASS_NAMES),
    }
    (OUT / "fixture_info.json").write_text(json.dumps(summary, indent=2) + "\n")
    print("fixtures written to", OUT)
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
