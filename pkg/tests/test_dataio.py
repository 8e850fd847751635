"""File formats: byte-exact round trips and position-bearing errors."""

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from depthalign import ConfigError, DataError, DepthMap, DepthRange
from depthalign.dataio import (
    DatasetManifest,
    InstanceList,
    SampleRecord,
    SyntheticSpec,
    caption_variants,
    generate_synthetic_dataset,
    load_checkpoint,
    read_depth_png16,
    read_embedding_store,
    read_pfm,
    render_structured_caption,
    save_checkpoint,
    write_depth_png16,
    write_embedding_store,
    write_pfm,
)
from depthalign.dataio.png16 import read_png16_gray, write_png16_gray
from depthalign.head import MlpConfig, MlpParameters, forward, TextEmbedding


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


class TestPng16:
    def test_raw_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 65536, size=(7, 5), dtype=np.uint16)
        f = tmp_path / "raw.png"
        write_png16_gray(f, raw)
        np.testing.assert_array_equal(read_png16_gray(f), raw)

    def test_divisor_definition(self, tmp_path):
        f = tmp_path / "one.png"
        write_png16_gray(f, np.array([[256]], dtype=np.uint16))
        depth, mask = read_depth_png16(f, scale_divisor=256)
        assert depth.values[0, 0] == 1.0
        assert mask.bits[0, 0]

    def test_raw_zero_is_invalid(self, tmp_path):
        f = tmp_path / "zero.png"
        write_png16_gray(f, np.array([[0, 512]], dtype=np.uint16))
        depth, mask = read_depth_png16(f, scale_divisor=256)
        assert mask.bits.tolist() == [[False, True]]
        assert depth.values[0, 1] == 2.0

    def test_write_read_write_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        depth = DepthMap(
            (rng.integers(1, 2000, size=(4, 4)) / 256.0).astype(np.float32)
        )
        f1, f2 = tmp_path / "a.png", tmp_path / "b.png"
        write_depth_png16(f1, depth, scale_divisor=256)
        reread, _ = read_depth_png16(f1, scale_divisor=256)
        write_depth_png16(f2, reread, scale_divisor=256)
        assert f1.read_bytes() == f2.read_bytes()

    def test_mask_writes_invalid_as_zero(self, tmp_path):
        from depthalign import ValidityMask
        depth = DepthMap(np.full((1, 2), 3.0, dtype=np.float32))
        mask = ValidityMask(np.array([[True, False]]))
        f = tmp_path / "masked.png"
        write_depth_png16(f, depth, mask=mask, scale_divisor=256)
        _, reread_mask = read_depth_png16(f, scale_divisor=256)
        assert reread_mask.bits.tolist() == [[True, False]]

    def test_rejects_wrong_bit_depth(self, tmp_path):
        # minimal 8-bit grayscale PNG assembled by hand
        def chunk(tag, payload):
            crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
            return struct.pack(">I", len(payload)) + tag + payload + \
                struct.pack(">I", crc)

        ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
        idat = zlib.compress(b"\x00\x07")
        f = tmp_path / "eight.png"
        f.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
                      + chunk(b"IDAT", idat) + chunk(b"IEND", b""))
        with pytest.raises(DataError, match="bit depth 8"):
            read_png16_gray(f)

    def test_rejects_truncated_file(self, tmp_path):
        f = tmp_path / "t.png"
        write_png16_gray(f, np.ones((3, 3), dtype=np.uint16))
        data = f.read_bytes()
        f.write_bytes(data[:len(data) - 10])
        with pytest.raises(DataError, match="truncated"):
            read_png16_gray(f)

    def test_rejects_non_png(self, tmp_path):
        f = tmp_path / "bad.png"
        f.write_bytes(b"not a png at all")
        with pytest.raises(DataError, match="signature"):
            read_png16_gray(f)

    def test_reads_filtered_scanlines(self, tmp_path):
        # assemble a file using Up filtering; our writer never emits it
        rng = np.random.default_rng(2)
        raw = rng.integers(0, 65536, size=(4, 3), dtype=np.uint16)
        big = raw.astype(">u2").tobytes()
        stride = 6
        rows = [big[i * stride:(i + 1) * stride] for i in range(4)]
        scan = b"\x00" + rows[0]
        for r in range(1, 4):
            delta = bytes((rows[r][i] - rows[r - 1][i]) & 0xFF
                          for i in range(stride))
            scan += b"\x02" + delta
        def chunk(tag, payload):
            crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
            return struct.pack(">I", len(payload)) + tag + payload + \
                struct.pack(">I", crc)
        ihdr = struct.pack(">IIBBBBB", 3, 4, 16, 0, 0, 0, 0)
        f = tmp_path / "up.png"
        f.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
                      + chunk(b"IDAT", zlib.compress(scan))
                      + chunk(b"IEND", b""))
        np.testing.assert_array_equal(read_png16_gray(f), raw)


class TestPfm:
    def test_single_value_round_trip(self, tmp_path):
        f = tmp_path / "one.pfm"
        write_pfm(f, DepthMap(np.array([[0.5]], dtype=np.float32)))
        data = f.read_bytes()
        assert data.startswith(b"Pf\n1 1\n-1.0\n")
        assert len(data) == len(b"Pf\n1 1\n-1.0\n") + 4
        assert read_pfm(f).values[0, 0] == 0.5

    def test_3x2_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        d = DepthMap(rng.standard_normal((3, 2)).astype(np.float32))
        f1, f2 = tmp_path / "a.pfm", tmp_path / "b.pfm"
        write_pfm(f1, d)
        reread = read_pfm(f1)
        np.testing.assert_array_equal(reread.values, d.values)
        write_pfm(f2, reread)
        assert f1.read_bytes() == f2.read_bytes()

    def test_negative_scale_means_little_endian(self, tmp_path):
        f = tmp_path / "le.pfm"
        f.write_bytes(b"Pf\n1 1\n-1.0\n" + struct.pack("<f", 1.5))
        assert read_pfm(f).values[0, 0] == 1.5
        g = tmp_path / "be.pfm"
        g.write_bytes(b"Pf\n1 1\n1.0\n" + struct.pack(">f", 1.5))
        assert read_pfm(g).values[0, 0] == 1.5

    def test_rows_are_bottom_to_top(self, tmp_path):
        # payload rows bottom-up: first stored row is the image's last
        f = tmp_path / "rows.pfm"
        payload = np.array([3.0, 4.0, 1.0, 2.0], dtype="<f4").tobytes()
        f.write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
        np.testing.assert_array_equal(read_pfm(f).values,
                                      [[1.0, 2.0], [3.0, 4.0]])

    def test_rejects_color_pf(self, tmp_path):
        f = tmp_path / "color.pfm"
        f.write_bytes(b"PF\n1 1\n-1.0\n" + b"\x00" * 12)
        with pytest.raises(DataError, match="color"):
            read_pfm(f)

    def test_rejects_malformed_header(self, tmp_path):
        f = tmp_path / "bad.pfm"
        f.write_bytes(b"Pf\n1\n-1.0\n")
        with pytest.raises(DataError, match="dimensions"):
            read_pfm(f)

    def test_rejects_short_payload_with_counts(self, tmp_path):
        f = tmp_path / "short.pfm"
        f.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(DataError, match="8 bytes, expected 16"):
            read_pfm(f)


class TestEmbeddingStore:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        matrix = rng.standard_normal((2, 4)).astype(np.float32)
        f = tmp_path / "e.rsae"
        write_embedding_store(f, matrix)
        np.testing.assert_array_equal(read_embedding_store(f), matrix)

    def test_empty_store_valid(self, tmp_path):
        f = tmp_path / "empty.rsae"
        write_embedding_store(f, np.zeros((0, 8), dtype=np.float32))
        out = read_embedding_store(f)
        assert out.shape == (0, 8)

    def test_truncated_payload_reports_counts(self, tmp_path):
        f = tmp_path / "trunc.rsae"
        write_embedding_store(f, np.ones((2, 4), dtype=np.float32))
        data = f.read_bytes()
        f.write_bytes(data[:-4])
        with pytest.raises(DataError, match="48 bytes.*44 bytes"):
            read_embedding_store(f)

    def test_magic_mismatch(self, tmp_path):
        f = tmp_path / "bad.rsae"
        write_embedding_store(f, np.ones((1, 2), dtype=np.float32))
        data = bytearray(f.read_bytes())
        data[0] ^= 0xFF
        f.write_bytes(bytes(data))
        with pytest.raises(DataError, match="magic"):
            read_embedding_store(f)

    def test_version_mismatch(self, tmp_path):
        f = tmp_path / "v9.rsae"
        write_embedding_store(f, np.ones((1, 2), dtype=np.float32))
        data = bytearray(f.read_bytes())
        data[4] = 9
        f.write_bytes(bytes(data))
        with pytest.raises(DataError, match="version 9"):
            read_embedding_store(f)


class TestCheckpoint:
    CFG = MlpConfig(input_dim=4, trunk_dims=(3, 2), head_dims=(2, 1))

    def test_round_trip_bit_exact_forward(self, tmp_path):
        params = MlpParameters.init(self.CFG, seed=5)
        f = tmp_path / "head.rsac"
        save_checkpoint(f, params, self.CFG, seed=5, epochs_completed=7)
        loaded, cfg, meta = load_checkpoint(f)
        assert cfg == self.CFG
        assert meta == {"seed": 5, "epochs_completed": 7}
        np.testing.assert_array_equal(loaded.flatten(), params.flatten())
        probe = TextEmbedding(np.array([0.1, -0.2, 0.3, 0.4], dtype=np.float32))
        assert forward(probe, loaded, cfg) == forward(probe, params, self.CFG)

    def test_save_load_save_byte_identical(self, tmp_path):
        params = MlpParameters.init(self.CFG, seed=6)
        f1, f2 = tmp_path / "a.rsac", tmp_path / "b.rsac"
        save_checkpoint(f1, params, self.CFG)
        loaded, cfg, _ = load_checkpoint(f1)
        save_checkpoint(f2, loaded, cfg)
        assert f1.read_bytes() == f2.read_bytes()

    def test_flipped_magic_rejected(self, tmp_path):
        f = tmp_path / "flip.rsac"
        save_checkpoint(f, MlpParameters.zeros(self.CFG), self.CFG)
        data = bytearray(f.read_bytes())
        data[0] ^= 0x01
        f.write_bytes(bytes(data))
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(f)

    def test_unknown_version_rejected(self, tmp_path):
        f = tmp_path / "v2.rsac"
        save_checkpoint(f, MlpParameters.zeros(self.CFG), self.CFG)
        data = bytearray(f.read_bytes())
        data[4] = 2
        f.write_bytes(bytes(data))
        with pytest.raises(DataError, match="version 2"):
            load_checkpoint(f)

    def test_truncated_payload_rejected(self, tmp_path):
        f = tmp_path / "trunc.rsac"
        save_checkpoint(f, MlpParameters.zeros(self.CFG), self.CFG)
        data = f.read_bytes()
        f.write_bytes(data[:-8])
        with pytest.raises(DataError):
            load_checkpoint(f)


class TestCaptions:
    def test_template(self):
        instances = InstanceList((("chair", 2), ("table", 1)))
        assert render_structured_caption(instances) == \
            "An image with 2 chair, 1 table."

    def test_single_entry(self):
        assert render_structured_caption(InstanceList((("wall", 1),))) == \
            "An image with 1 wall."

    def test_seeded_variants_reproducible(self):
        instances = InstanceList((("a", 1), ("b", 2), ("c", 3)))
        v1 = caption_variants(instances, n=5, seed=9)
        v2 = caption_variants(instances, n=5, seed=9)
        assert v1 == v2
        assert len(v1) == 5
        assert all(v.startswith("An image with ") for v in v1)
        assert len({tuple(v.split()) for v in v1}) > 1  # orders do vary

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            InstanceList(())

    def test_bad_counts_rejected(self):
        with pytest.raises(ConfigError):
            InstanceList((("chair", 0),))


class TestManifest:
    def make_manifest(self):
        records = [
            SampleRecord(
                image_id=f"img{i}",
                rel_depth_path=f"rel/img{i}.pfm",
                gt_depth_path=f"gt/img{i}.png",
                embedding_refs=((f"emb/img{i}.rsae", 0),
                                (f"emb/img{i}.rsae", 1)),
                captions=("An image with 1 wall.",),
            )
            for i in range(3)
        ]
        return DatasetManifest(name="unit", depth_range=DepthRange(0.001, 10),
                               records=records, gt_divisor=1000.0)

    def test_round_trip(self, tmp_path):
        m = self.make_manifest()
        f = tmp_path / "m.jsonl"
        m.save(f)
        loaded = DatasetManifest.load(f)
        assert loaded == m

    def test_save_is_stable(self, tmp_path):
        m = self.make_manifest()
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        m.save(f1)
        DatasetManifest.load(f1).save(f2)
        assert f1.read_bytes() == f2.read_bytes()

    def test_duplicate_ids_rejected(self):
        r = self.make_manifest().records[0]
        with pytest.raises(ConfigError, match="duplicate"):
            DatasetManifest(name="dupe", depth_range=DepthRange(0.001, 10),
                            records=(r, r))

    def test_malformed_line_reports_position(self, tmp_path):
        f = tmp_path / "bad.jsonl"
        m = self.make_manifest()
        m.save(f)
        lines = f.read_text().splitlines()
        lines[2] = "{not json"
        f.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match=":3:"):
            DatasetManifest.load(f)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            DatasetManifest.load(tmp_path / "nope.jsonl")

    def test_record_requires_embedding(self):
        with pytest.raises(ConfigError, match="embedding"):
            SampleRecord(image_id="x", rel_depth_path="a", gt_depth_path="b",
                         embedding_refs=())


class TestSyntheticGenerator:
    SPEC = SyntheticSpec(n_categories=2, samples_per_category=5, height=8,
                         width=8, embedding_dim=16, seed=7,
                         embeddings_per_sample=2)

    def test_sample_counts(self, tmp_path):
        all_path, train_path, test_path = generate_synthetic_dataset(
            self.SPEC, tmp_path / "d"
        )
        m = DatasetManifest.load(all_path)
        assert len(m) == 10
        train = DatasetManifest.load(train_path)
        test = DatasetManifest.load(test_path)
        assert len(train) + len(test) == 10
        assert len(test) == 2  # one of five per category

    def test_deterministic_byte_identical(self, tmp_path):
        generate_synthetic_dataset(self.SPEC, tmp_path / "one")
        generate_synthetic_dataset(self.SPEC, tmp_path / "two")
        assert tree_hash(tmp_path / "one") == tree_hash(tmp_path / "two")

    def test_different_seed_differs(self, tmp_path):
        generate_synthetic_dataset(self.SPEC, tmp_path / "one")
        spec2 = SyntheticSpec(n_categories=2, samples_per_category=5,
                              height=8, width=8, embedding_dim=16, seed=8,
                              embeddings_per_sample=2)
        generate_synthetic_dataset(spec2, tmp_path / "two")
        assert tree_hash(tmp_path / "one") != tree_hash(tmp_path / "two")

    def test_ground_truth_from_model_family(self, tmp_path):
        # gt must equal 1/(alpha_c * y + beta_c) up to PNG16 quantization
        all_path, _, _ = generate_synthetic_dataset(self.SPEC, tmp_path / "d")
        m = DatasetManifest.load(all_path)
        base = (tmp_path / "d")
        rec = m.records[0]
        assert rec.image_id.startswith("c0_")
        y = read_pfm(base / rec.rel_depth_path)
        gt, _ = read_depth_png16(base / rec.gt_depth_path, m.gt_divisor)
        expected = 1.0 / (self.SPEC.alphas[0] * y.values.astype(np.float64)
                          + self.SPEC.betas[0])
        np.testing.assert_allclose(gt.values, expected, atol=0.5 / m.gt_divisor)

    def test_zero_noise_embeddings_are_pure_one_hot(self, tmp_path):
        spec = SyntheticSpec(n_categories=2, samples_per_category=2, height=4,
                             width=4, embedding_dim=8, noise_sigma=0.0, seed=1)
        all_path, _, _ = generate_synthetic_dataset(spec, tmp_path / "d")
        m = DatasetManifest.load(all_path)
        for rec in m.records:
            cat = int(rec.image_id[1])
            matrix = read_embedding_store(tmp_path / "d" / rec.embedding_refs[0][0])
            expected = np.zeros(8, dtype=np.float32)
            expected[cat] = spec.embedding_scale
            np.testing.assert_array_equal(matrix[0], expected)

    def test_captions_use_template(self, tmp_path):
        all_path, _, _ = generate_synthetic_dataset(self.SPEC, tmp_path / "d")
        m = DatasetManifest.load(all_path)
        assert all(r.captions[0].startswith("An image with ")
                   for r in m.records)

    def test_bad_sigma_rejected(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(noise_sigma=-0.1)
