"""File-format tests: IDX, PGM, CSV tables, shot archives, JSON."""

import csv
import json
import struct

import numpy as np
import pytest

from rydres.embeddings import EmbeddingSet
from rydres.errors import DataError
from rydres.io import (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, geometry_to_dict,
                       load_embeddings, load_idx, load_image_dir, load_json,
                       load_matrix, load_mnist_pair, load_pgm,
                       load_shot_binary, load_timeseries, save_embeddings,
                       save_idx, save_json, save_matrix, save_pgm,
                       save_shot_binary, save_shot_csv, save_table,
                       save_timeseries)
from rydres.kernelgeo import embedding_kernel, geometry_result
from rydres.qsim import ShotTable


class TestIdx:
    def test_hand_packed_images(self, tmp_path):
        # 4 samples of 2x3 pixels whose bytes are simply 0..23
        raw = struct.pack(">IIII", IDX_IMAGES_MAGIC, 4, 2, 3) + bytes(range(24))
        path = tmp_path / "imgs.idx"
        path.write_bytes(raw)
        arr = load_idx(path)
        assert arr.shape == (4, 2, 3)
        assert arr.dtype == np.uint8
        assert np.array_equal(arr.ravel(), np.arange(24))
        assert arr[1, 0, 2] == 8

    def test_hand_packed_labels(self, tmp_path):
        raw = struct.pack(">II", IDX_LABELS_MAGIC, 4) + bytes([3, 8, 3, 8])
        path = tmp_path / "lbls.idx"
        path.write_bytes(raw)
        assert np.array_equal(load_idx(path), [3, 8, 3, 8])

    def test_wrong_magic_names_offset(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">II", 0x00000802, 4) + bytes(4))
        with pytest.raises(DataError, match="offset 0") as err:
            load_idx(path)
        assert "0x00000802" in str(err.value)

    def test_truncated_magic(self, tmp_path):
        path = tmp_path / "tiny.idx"
        path.write_bytes(b"\x00\x00")
        with pytest.raises(DataError, match="offset 0"):
            load_idx(path)

    def test_truncated_dims(self, tmp_path):
        path = tmp_path / "trunc.idx"
        path.write_bytes(struct.pack(">II", IDX_IMAGES_MAGIC, 4))
        with pytest.raises(DataError, match="dimension"):
            load_idx(path)

    def test_payload_mismatch(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, 10) + bytes(3))
        with pytest.raises(DataError, match="promises 10"):
            load_idx(path)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 4, 4), dtype=np.uint8)
        labels = rng.integers(0, 10, size=5, dtype=np.uint8)
        save_idx(tmp_path / "im.idx", images)
        save_idx(tmp_path / "lb.idx", labels)
        im2, lb2 = load_mnist_pair(tmp_path / "im.idx", tmp_path / "lb.idx")
        assert np.array_equal(images, im2)
        assert np.array_equal(labels, lb2)

    def test_pair_length_mismatch(self, tmp_path):
        save_idx(tmp_path / "im.idx", np.zeros((3, 2, 2), dtype=np.uint8))
        save_idx(tmp_path / "lb.idx", np.zeros(4, dtype=np.uint8))
        with pytest.raises(DataError, match="length mismatch"):
            load_mnist_pair(tmp_path / "im.idx", tmp_path / "lb.idx")

    def test_bad_rank_on_save(self, tmp_path):
        with pytest.raises(DataError, match="rank"):
            save_idx(tmp_path / "x.idx", np.zeros((2, 2), dtype=np.uint8))


class TestPgm:
    IMAGE = np.array([[0, 50, 100], [150, 200, 250]], dtype=np.uint8)

    def test_p2_and_p5_agree(self, tmp_path):
        p2 = tmp_path / "a.pgm"
        p2.write_text("P2\n# a comment\n3 2\n255\n0 50 100\n150 200 250\n")
        p5 = tmp_path / "b.pgm"
        p5.write_bytes(b"P5\n3 2\n255\n" + bytes([0, 50, 100, 150, 200, 250]))
        a, b = load_pgm(p2), load_pgm(p5)
        assert np.array_equal(a, b)
        assert np.array_equal(a, self.IMAGE)

    def test_round_trip_both_formats(self, tmp_path):
        save_pgm(tmp_path / "bin.pgm", self.IMAGE, binary=True)
        save_pgm(tmp_path / "asc.pgm", self.IMAGE, binary=False)
        assert np.array_equal(load_pgm(tmp_path / "bin.pgm"), self.IMAGE)
        assert np.array_equal(load_pgm(tmp_path / "asc.pgm"), self.IMAGE)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "p3.pgm"
        path.write_text("P3\n1 1\n255\n0\n")
        with pytest.raises(DataError, match="magic"):
            load_pgm(path)

    def test_wide_maxval_unsupported(self, tmp_path):
        path = tmp_path / "wide.pgm"
        path.write_text("P2\n1 1\n65535\n0\n")
        with pytest.raises(DataError, match="maxval"):
            load_pgm(path)

    def test_binary_payload_short(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(3))
        with pytest.raises(DataError, match="4 pixels"):
            load_pgm(path)

    def test_ascii_too_few_pixels(self, tmp_path):
        path = tmp_path / "few.pgm"
        path.write_text("P2\n2 2\n255\n1 2 3\n")
        with pytest.raises(DataError, match="header ends"):
            load_pgm(path)

    def test_ascii_trailing_junk(self, tmp_path):
        path = tmp_path / "junk.pgm"
        path.write_text("P2\n1 1\n255\n7 9\n")
        with pytest.raises(DataError, match="trailing"):
            load_pgm(path)

    def test_pixel_above_maxval(self, tmp_path):
        path = tmp_path / "over.pgm"
        path.write_text("P2\n1 1\n100\n200\n")
        with pytest.raises(DataError, match="exceeds"):
            load_pgm(path)

    def test_non_integer_width(self, tmp_path):
        path = tmp_path / "w.pgm"
        path.write_text("P2\nthree 2\n255\n0\n")
        with pytest.raises(DataError, match="width"):
            load_pgm(path)

    def test_image_dir_with_manifest(self, tmp_path):
        save_pgm(tmp_path / "g0.pgm", self.IMAGE)
        save_pgm(tmp_path / "g1.pgm", self.IMAGE[::-1])
        (tmp_path / "labels.csv").write_text("g0.pgm,3\ng1.pgm,8\n")
        images, labels = load_image_dir(tmp_path, tmp_path / "labels.csv")
        assert images.shape == (2, 2, 3)
        assert np.array_equal(labels, [3, 8])

    def test_manifest_bad_label(self, tmp_path):
        save_pgm(tmp_path / "g0.pgm", self.IMAGE)
        (tmp_path / "labels.csv").write_text("g0.pgm,eight\n")
        with pytest.raises(DataError, match="line 1"):
            load_image_dir(tmp_path, tmp_path / "labels.csv")


class TestSeriesCsv:
    def test_round_trip_exact(self, tmp_path):
        values = np.array([0.0, 1.0, 1 / 3, 255.0, 1e-17])
        save_timeseries(tmp_path / "s.csv", values)
        assert np.array_equal(load_timeseries(tmp_path / "s.csv"), values)

    def test_non_numeric_line(self, tmp_path):
        (tmp_path / "bad.csv").write_text("1.5\nhello\n2.5\n")
        with pytest.raises(DataError, match="line 2"):
            load_timeseries(tmp_path / "bad.csv")

    def test_empty(self, tmp_path):
        (tmp_path / "empty.csv").write_text("\n")
        with pytest.raises(DataError, match="no values"):
            load_timeseries(tmp_path / "empty.csv")


class TestMatrixCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        mat = rng.standard_normal((3, 4))
        save_matrix(tmp_path / "m.csv", mat)
        assert np.array_equal(load_matrix(tmp_path / "m.csv"), mat)

    def test_malformed(self, tmp_path):
        (tmp_path / "bad.csv").write_text("1,2\n3,oops\n")
        with pytest.raises(DataError, match="numeric"):
            load_matrix(tmp_path / "bad.csv")


class TestEmbeddingCsv:
    def _embeddings(self):
        values = np.array([[0.25, -0.5], [1.0, 0.125]])
        return EmbeddingSet(values, ("Z_0@t_0", "Z_1@t_0"), (0.5,))

    def test_round_trip(self, tmp_path):
        emb = self._embeddings()
        path = tmp_path / "emb.csv"
        save_embeddings(path, emb, "qrc", {"seed": 7})
        loaded, backend, sidecar = load_embeddings(path)
        assert backend == "qrc"
        assert np.array_equal(loaded.values, emb.values)
        assert loaded.labels == emb.labels
        assert loaded.probe_times == (0.5,)
        assert sidecar["seed"] == 7
        assert sidecar["schema_version"] == 1

    def test_header_names_observables(self, tmp_path):
        path = tmp_path / "emb.csv"
        save_embeddings(path, self._embeddings(), "crc", {})
        header = path.read_text().splitlines()[0]
        assert header == "backend,Z_0@t_0,Z_1@t_0"

    def test_unknown_backend_on_save(self, tmp_path):
        with pytest.raises(DataError, match="backend"):
            save_embeddings(tmp_path / "e.csv", self._embeddings(), "gpu", {})

    def test_tampered_backend_on_load(self, tmp_path):
        path = tmp_path / "emb.csv"
        save_embeddings(path, self._embeddings(), "qrc", {})
        text = path.read_text().replace("qrc", "xyz")
        path.write_text(text)
        with pytest.raises(DataError, match="backend"):
            load_embeddings(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "emb.csv"
        save_embeddings(path, self._embeddings(), "qrc", {})
        path.write_text(path.read_text() + "qrc,0.5\n")
        with pytest.raises(DataError, match="cells"):
            load_embeddings(path)


class TestShotArchives:
    def _tables(self, n_qubits=10, n_tables=2, n_shots=3):
        rng = np.random.default_rng(4)
        codes = rng.integers(0, 1 << n_qubits,
                             size=(n_tables, 2, n_shots)).astype(np.uint32)
        return [ShotTable(n_qubits, (0.5, 1.0), codes[i])
                for i in range(n_tables)]

    def test_binary_round_trip_two_byte(self, tmp_path):
        tables = self._tables(n_qubits=10)
        save_shot_binary(tmp_path / "a.shots", tables)
        loaded = load_shot_binary(tmp_path / "a.shots")
        assert len(loaded) == len(tables)
        for orig, back in zip(tables, loaded):
            assert back.n_qubits == orig.n_qubits
            assert back.probe_times == orig.probe_times
            assert np.array_equal(back.codes, orig.codes)

    def test_binary_round_trip_one_byte(self, tmp_path):
        tables = self._tables(n_qubits=5)
        save_shot_binary(tmp_path / "b.shots", tables)
        loaded = load_shot_binary(tmp_path / "b.shots")
        assert np.array_equal(loaded[1].codes, tables[1].codes)

    def test_binary_deterministic_bytes(self, tmp_path):
        tables = self._tables()
        save_shot_binary(tmp_path / "x.shots", tables)
        save_shot_binary(tmp_path / "y.shots", tables)
        assert (tmp_path / "x.shots").read_bytes() == (tmp_path / "y.shots").read_bytes()

    def test_binary_bad_magic(self, tmp_path):
        save_shot_binary(tmp_path / "a.shots", self._tables())
        raw = bytearray((tmp_path / "a.shots").read_bytes())
        raw[0] = ord("X")
        (tmp_path / "a.shots").write_bytes(bytes(raw))
        with pytest.raises(DataError, match="offset 0"):
            load_shot_binary(tmp_path / "a.shots")

    def test_binary_truncated(self, tmp_path):
        save_shot_binary(tmp_path / "a.shots", self._tables())
        raw = (tmp_path / "a.shots").read_bytes()
        (tmp_path / "a.shots").write_bytes(raw[:-1])
        with pytest.raises(DataError, match="promises"):
            load_shot_binary(tmp_path / "a.shots")

    def test_binary_extra_byte(self, tmp_path):
        save_shot_binary(tmp_path / "a.shots", self._tables())
        raw = (tmp_path / "a.shots").read_bytes()
        (tmp_path / "a.shots").write_bytes(raw + b"\x00")
        with pytest.raises(DataError, match="promises"):
            load_shot_binary(tmp_path / "a.shots")

    def test_mismatched_tables_rejected(self, tmp_path):
        t1 = self._tables(n_shots=3)[0]
        t2 = self._tables(n_shots=4)[0]
        with pytest.raises(DataError, match="disagree"):
            save_shot_binary(tmp_path / "m.shots", [t1, t2])

    def test_csv_rows(self, tmp_path):
        table = ShotTable(2, (0.5,), np.array([[1, 2]], dtype=np.uint32))
        save_shot_csv(tmp_path / "s.csv", [table])
        with open(tmp_path / "s.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["datapoint", "probe", "bitstring"]
        # code 1 = site 0 excited -> "10"; code 2 = site 1 excited -> "01"
        assert rows[1] == ["0", "0", "10"]
        assert rows[2] == ["0", "0", "01"]


class TestJson:
    def test_round_trip(self, tmp_path):
        payload = {"b": [1, 2], "a": {"x": 0.5}}
        save_json(tmp_path / "r.json", payload)
        assert load_json(tmp_path / "r.json") == payload

    def test_canonical_bytes(self, tmp_path):
        save_json(tmp_path / "a.json", {"b": 1, "a": 2})
        save_json(tmp_path / "b.json", {"a": 2, "b": 1})
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_malformed(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(DataError, match="line"):
            load_json(tmp_path / "bad.json")

    def test_geometry_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        k_q = embedding_kernel(rng.standard_normal((6, 4)))
        k_c = embedding_kernel(rng.standard_normal((6, 4)))
        result = geometry_result(k_q, k_c, 1e-4)
        payload = geometry_to_dict(result)
        save_json(tmp_path / "g.json", payload)
        back = load_json(tmp_path / "g.json")
        assert back["delta"] == 1e-4
        assert back["schema_version"] == 1
        assert len(back["spectrum_head"]) == 5
        assert set(back["labels"]) <= {-1, 1}
        assert back["g"] == pytest.approx(result.g)


class TestTable:
    def test_save_table_formats_floats(self, tmp_path):
        save_table(tmp_path / "t.csv", ["name", "value"],
                   [["acc", 0.5], ["nmse", 1 / 3]])
        with open(tmp_path / "t.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["name", "value"]
        assert float(rows[2][1]) == 1 / 3
