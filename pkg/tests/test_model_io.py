"""Weight-file format, loader validation, and PNG round-trips."""
import json
import struct

import numpy as np
import pytest

from srmt import imageio, model as model_io
from srmt.errors import (
    BadMagic, DecodeError, MalformedDescriptor, ShapeChainBroken,
    TruncatedBlob, UnsupportedVersion,
)


def fixture_bytes(fixtures_dir) -> bytes:
    return (fixtures_dir / "model.srmtw").read_bytes()


def rewrite(raw: bytes, tmp_path, name="mutant.srmtw"):
    p = tmp_path / name
    p.write_bytes(raw)
    return p


def descriptor_parts(raw: bytes):
    n = struct.unpack("<I", raw[8:12])[0]
    header, desc, blob = raw[:8], raw[12:12 + n], raw[12 + n:]
    return header, json.loads(desc.decode()), blob


def reassemble(header: bytes, desc: dict, blob: bytes) -> bytes:
    payload = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()
    return header + struct.pack("<I", len(payload)) + payload + blob


def test_round_trip_is_byte_identical(fixtures_dir, tmp_path):
    raw = fixture_bytes(fixtures_dir)
    spec = model_io.load_model(fixtures_dir / "model.srmtw")
    out = tmp_path / "copy.srmtw"
    model_io.write_model(spec, out)
    assert out.read_bytes() == raw


def test_probe_logits_match_exporter(fixtures_dir, model):
    from srmt import nn
    sidecar = json.loads((fixtures_dir / "probes" / "probe_logits.json").read_text())
    assert len(sidecar) == 10
    for name, want in sidecar.items():
        img = imageio.load_png(fixtures_dir / "probes" / name)
        got = nn.forward(model, img).logits
        np.testing.assert_allclose(got, np.array(want), atol=1e-4)


def test_bad_magic(fixtures_dir, tmp_path):
    raw = bytearray(fixture_bytes(fixtures_dir))
    raw[0] ^= 0xFF
    with pytest.raises(BadMagic):
        model_io.load_model(rewrite(bytes(raw), tmp_path))


def test_unsupported_version(fixtures_dir, tmp_path):
    raw = bytearray(fixture_bytes(fixtures_dir))
    raw[7] = 2
    with pytest.raises(UnsupportedVersion):
        model_io.load_model(rewrite(bytes(raw), tmp_path))


def test_truncated_blob_names_layer(fixtures_dir, tmp_path):
    raw = fixture_bytes(fixtures_dir)
    with pytest.raises(TruncatedBlob) as exc:
        model_io.load_model(rewrite(raw[:-4], tmp_path))
    # the last parameterized layer is the final dense at index 6
    assert "6" in str(exc.value)


def test_malformed_descriptor_json(fixtures_dir, tmp_path):
    header, _, blob = descriptor_parts(fixture_bytes(fixtures_dir))
    payload = b"{not json"
    raw = header + struct.pack("<I", len(payload)) + payload + blob
    with pytest.raises(MalformedDescriptor):
        model_io.load_model(rewrite(raw, tmp_path))


def test_shape_chain_break_detected(fixtures_dir, tmp_path):
    header, desc, blob = descriptor_parts(fixture_bytes(fixtures_dir))
    desc["num_classes"] = 7  # final dense still emits 10
    with pytest.raises(ShapeChainBroken):
        model_io.load_model(rewrite(reassemble(header, desc, blob), tmp_path))


def test_leftover_blob_bytes_rejected(fixtures_dir, tmp_path):
    raw = fixture_bytes(fixtures_dir) + b"\x00" * 8
    with pytest.raises(MalformedDescriptor):
        model_io.load_model(rewrite(raw, tmp_path))


def test_target_must_be_conv(fixtures_dir, tmp_path):
    from srmt.errors import ModelHasNoTargetLayer
    header, desc, blob = descriptor_parts(fixture_bytes(fixtures_dir))
    desc["gradcam_target"] = 4  # the flatten layer
    with pytest.raises(ModelHasNoTargetLayer):
        model_io.load_model(rewrite(reassemble(header, desc, blob), tmp_path))


def test_default_target_is_last_conv(model):
    assert model.layers[model.gradcam_target].kind == "conv2d"
    later = [l.kind for l in model.layers[model.gradcam_target + 1:]]
    assert "conv2d" not in later


def test_shape_chain_matches_closed_form(model):
    chain = model_io.shape_chain(model.input_shape, model.layers)
    assert chain[0] == (1, 32, 32)
    assert chain[-1] == (10,)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    img = (rng.integers(0, 256, size=(1, 32, 32)) / 255.0).astype(np.float32)
    p = tmp_path / "x.png"
    imageio.save_png(img, p)
    back = imageio.load_png(p)
    np.testing.assert_array_equal(back, img)


def test_png_rgb_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    img = (rng.integers(0, 256, size=(3, 16, 16)) / 255.0).astype(np.float32)
    p = tmp_path / "x.png"
    imageio.save_png(img, p)
    np.testing.assert_array_equal(imageio.load_png(p), img)


def test_decode_error_on_garbage(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"this is not a png")
    with pytest.raises(DecodeError):
        imageio.load_png(p)
