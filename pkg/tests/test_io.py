import json
from pathlib import Path

import numpy as np
import pytest

from hcd.boxes import Box, Proposal
from hcd.channels import ChannelStack
from hcd.errors import ParseError
from hcd.io import (DatasetManifest, GtBox, ManifestEntry, load_cnn_stack,
                    load_image, load_manifest, load_proposals, load_stack,
                    rescale_for_pipeline, save_image, save_manifest,
                    save_proposals, save_stack)

DATA = Path(__file__).parent / "data"


def random_stack(rng, c=3, h=5, w=7, ds=1):
    planes = rng.random((c, h, w)).astype(np.float32)
    return ChannelStack(tuple(f"ch{i}" for i in range(c)), planes, "hogluv", ds)


class TestTensorFile:
    def test_roundtrip_bit_exact(self, rng, tmp_path):
        stack = random_stack(rng, 3, 5, 7, ds=4)
        p1, p2 = tmp_path / "a.hcdt", tmp_path / "b.hcdt"
        save_stack(stack, p1, meta={"config_hash": "abc123"})
        loaded, meta = load_stack(p1)
        assert meta["config_hash"] == "abc123"
        assert loaded.names == stack.names
        assert loaded.downsample_factor == 4
        assert np.array_equal(loaded.planes, stack.planes)
        save_stack(loaded, p2, meta={"config_hash": "abc123"})
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_payload_names_byte_counts(self, rng, tmp_path):
        p = tmp_path / "t.hcdt"
        save_stack(random_stack(rng), p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ParseError) as err:
            load_stack(p)
        msg = str(err.value)
        assert "expected" in msg and "got" in msg

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.hcdt"
        p.write_bytes(b"XXXX" + b"\x00" * 60)
        with pytest.raises(ParseError):
            load_stack(p)

    def test_non_finite_payload_rejected(self, rng, tmp_path):
        p = tmp_path / "nan.hcdt"
        save_stack(random_stack(rng), p)
        data = bytearray(p.read_bytes())
        data[-4:] = np.array([np.nan], "<f4").tobytes()
        p.write_bytes(bytes(data))
        with pytest.raises(ParseError):
            load_stack(p)

    def test_cnn_loader_forces_provenance(self, rng, tmp_path):
        p = tmp_path / "c.hcdt"
        save_stack(random_stack(rng, ds=4), p)
        stack = load_cnn_stack(p)
        assert stack.provenance.startswith("cnn:")
        assert stack.downsample_factor == 4


class TestProposals:
    def test_committed_fixture_two_records_in_order(self):
        props, meta = load_proposals(DATA / "proposals_sample.jsonl")
        assert meta is None
        assert len(props) == 2
        assert props[0].image_id == "set00_v000_i00029"
        assert props[0].score == 0.87
        assert props[1].box == Box(88.5, 101.0, 40.0, 98.5)

    def test_roundtrip_with_meta(self, rng, tmp_path):
        props = [Proposal(Box(*rng.uniform(1, 50, 4)), float(rng.random()), f"i{k}")
                 for k in range(5)]
        p = tmp_path / "p.jsonl"
        save_proposals(props, p, meta={"config_hash": "deadbeef"})
        loaded, meta = load_proposals(p)
        assert loaded == props
        assert meta == {"config_hash": "deadbeef"}
        p2 = tmp_path / "p2.jsonl"
        save_proposals(loaded, p2, meta=meta)
        assert p.read_bytes() == p2.read_bytes()

    def test_bad_json_line(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"image_id": "a", "x": 1, "y": 1, "w": 2, "h": 2, "score": 0.5}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_proposals(p)
        assert "line 2" in str(err.value)

    def test_missing_field(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"image_id": "a", "x": 1, "y": 1, "w": 2, "h": 2}\n')
        with pytest.raises(ParseError):
            load_proposals(p)


class TestManifest:
    def manifest(self, tmp_path):
        entries = (
            ManifestEntry("im0", "images/im0.png", "proposals/im0.jsonl",
                          (GtBox(Box(1, 2, 10, 30), 30.0, 0.9, False),), None),
            ManifestEntry("im1", "images/im1.png", "proposals/im1.jsonl",
                          (), "cnn/im1.hcdt"),
        )
        return DatasetManifest(str(tmp_path), entries, resize_shorter_edge=240)

    def test_roundtrip_identity(self, tmp_path):
        m = self.manifest(tmp_path)
        p = tmp_path / "manifest.json"
        save_manifest(m, p)
        loaded = load_manifest(p)
        assert loaded == m
        p2 = tmp_path / "manifest2.json"
        save_manifest(loaded, p2)
        assert p.read_text() == p2.read_text()

    def test_duplicate_image_ids_rejected(self, tmp_path):
        e = ManifestEntry("im0", "a.png", "p.jsonl")
        with pytest.raises(ParseError):
            DatasetManifest(str(tmp_path), (e, e))

    def test_toml_manifest(self, tmp_path):
        p = tmp_path / "manifest.toml"
        p.write_text(
            'schema_version = 1\n'
            'resize_shorter_edge = 100\n'
            f'root = "{tmp_path}"\n'
            '[[entries]]\n'
            'image_id = "a"\n'
            'image = "images/a.png"\n'
            'proposals = "proposals/a.jsonl"\n')
        m = load_manifest(p)
        assert m.resize_shorter_edge == 100
        assert m.entries[0].image_id == "a"

    def test_schema_version_checked(self, tmp_path):
        p = tmp_path / "v9.json"
        p.write_text(json.dumps({"schema_version": 9, "entries": []}))
        with pytest.raises(ParseError):
            load_manifest(p)

    def test_gtbox_defaults(self):
        g = GtBox(Box(0, 0, 10, 55))
        assert g.height_px == 55.0
        assert g.visible_fraction == 1.0
        assert not g.ignore


class TestImages:
    @pytest.mark.parametrize("ext", ["png", "ppm"])
    def test_save_load_8bit(self, rng, tmp_path, ext):
        img = rng.random((9, 12, 3)).astype(np.float32)
        p = tmp_path / f"im.{ext}"
        save_image(img, p)
        loaded = load_image(p)
        assert loaded.shape == img.shape
        assert np.abs(loaded - img).max() <= 0.5 / 255 + 1e-6

    def test_bad_image_file(self, tmp_path):
        p = tmp_path / "x.png"
        p.write_bytes(b"this is not a png")
        with pytest.raises(ParseError):
            load_image(p)


class TestRescale:
    def test_480x640_to_720(self, rng):
        img = rng.random((480, 640, 3)).astype(np.float32)
        resized, scale = rescale_for_pipeline(img, 720)
        assert resized.shape == (720, 960, 3)
        assert scale == 1.5

    def test_identity_when_already_matching(self, rng):
        img = rng.random((720, 1280, 3)).astype(np.float32)
        resized, scale = rescale_for_pipeline(img, 720)
        assert scale == 1.0
        assert np.array_equal(resized, img)
        assert resized is not img

    def test_constant_image_stays_constant(self):
        img = np.full((100, 150, 3), 0.625, np.float32)
        resized, _ = rescale_for_pipeline(img, 240)
        np.testing.assert_allclose(resized, 0.625, atol=1e-6)

    def test_box_coordinate_roundtrip_within_half_pixel(self, rng):
        img = rng.random((480, 640, 3)).astype(np.float32)
        _, scale = rescale_for_pipeline(img, 720)
        for _ in range(20):
            box = Box(*rng.uniform(1, 400, 2), *rng.uniform(1, 100, 2))
            back = box.scaled(scale).scaled(1.0 / scale)
            assert abs(back.x - box.x) < 0.5
            assert abs(back.y - box.y) < 0.5
            assert abs(back.w - box.w) < 0.5
            assert abs(back.h - box.h) < 0.5
