"""File formats: IDX tensors, PGM images, CSV tables, shot-table binaries.

Every loader raises :class:`DataError` on malformed input and names the byte
offset or line where parsing failed; writers emit bytes that the loaders
round-trip exactly.  JSON emission is canonical (sorted keys, fixed indent)
so identical payloads produce identical files.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .qsim import ShotTable

# ------------------------------------------------------------- IDX tensors #

IDX_IMAGES_MAGIC = 0x00000803  # unsigned-byte rank-3 tensor (n, rows, cols)
IDX_LABELS_MAGIC = 0x00000801  # unsigned-byte rank-1 tensor (n,)


def load_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file of unsigned bytes (images or labels)."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise DataError(f"{path}: truncated before the magic number at offset 0")
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise DataError(f"{path}: bad magic at offset 0: expected "
                        f"0x{IDX_IMAGES_MAGIC:08x} (images) or "
                        f"0x{IDX_LABELS_MAGIC:08x} (labels), got 0x{magic:08x}")
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise DataError(f"{path}: truncated dimension header at offset {len(data)} "
                        f"(need {header_end} bytes)")
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = data[header_end:]
    if len(payload) != expected:
        raise DataError(f"{path}: payload holds {len(payload)} bytes from offset "
                        f"{header_end} but the header promises {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def save_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array of rank 1 (labels) or rank 3 (images) as IDX."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim == 3:
        magic = IDX_IMAGES_MAGIC
    elif arr.ndim == 1:
        magic = IDX_LABELS_MAGIC
    else:
        raise DataError(f"IDX rank must be 1 or 3, got {arr.ndim}")
    header = struct.pack(f">{1 + arr.ndim}I", magic, *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def load_mnist_pair(image_path, label_path):
    """Load matching image/label IDX files, checking the sample counts."""
    images = load_idx(image_path)
    labels = load_idx(label_path)
    if images.ndim != 3:
        raise DataError(f"{image_path}: expected an image tensor, got rank {images.ndim}")
    if labels.ndim != 1:
        raise DataError(f"{label_path}: expected a label vector, got rank {labels.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"length mismatch: {images.shape[0]} images but "
                        f"{labels.shape[0]} labels")
    return images, labels


# -------------------------------------------------------------- PGM images #


def _pgm_token(data: bytes, pos: int, path) -> tuple:
    """Next whitespace-separated header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise DataError(f"{path}: header ends at offset {pos} before all fields")
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    return data[start:pos], start, pos


def _pgm_int(data: bytes, pos: int, path, field: str, minimum: int = 1) -> tuple:
    token, start, pos = _pgm_token(data, pos, path)
    try:
        value = int(token)
    except ValueError:
        raise DataError(f"{path}: {field} at offset {start} is not an integer: "
                        f"{token!r}") from None
    if value < minimum:
        raise DataError(f"{path}: {field} at offset {start} must be at least "
                        f"{minimum}, got {value}")
    return value, pos


def load_pgm(path) -> np.ndarray:
    """Parse a P2 (ASCII) or P5 (binary) PGM image into a (H, W) uint8 array."""
    data = Path(path).read_bytes()
    magic, magic_at, pos = _pgm_token(data, 0, path)
    if magic not in (b"P2", b"P5"):
        raise DataError(f"{path}: bad magic at offset {magic_at}: expected "
                        f"P2 or P5, got {magic!r}")
    width, pos = _pgm_int(data, pos, path, "width")
    height, pos = _pgm_int(data, pos, path, "height")
    maxval, pos = _pgm_int(data, pos, path, "maxval")
    if maxval > 255:
        raise DataError(f"{path}: maxval {maxval} exceeds the supported "
                        f"single-byte range (255)")
    count = width * height
    if magic == b"P5":
        pos += 1  # exactly one whitespace byte separates maxval from pixels
        pixels = data[pos:]
        if len(pixels) != count:
            raise DataError(f"{path}: binary payload holds {len(pixels)} bytes "
                            f"from offset {pos} but {count} pixels are promised")
        image = np.frombuffer(pixels, dtype=np.uint8).copy()
    else:
        values = []
        while len(values) < count:
            value, pos = _pgm_int(data, pos, path, f"pixel {len(values)}",
                                  minimum=0)
            values.append(value)
        tail = data[pos:].strip()
        if tail:
            raise DataError(f"{path}: trailing data after {count} pixels: "
                            f"{tail[:20]!r}")
        image = np.asarray(values, dtype=np.uint8)
    if image.size and image.max() > maxval:
        raise DataError(f"{path}: pixel value {int(image.max())} exceeds "
                        f"maxval {maxval}")
    return image.reshape(height, width)


def save_pgm(path, image: np.ndarray, binary: bool = True) -> None:
    """Write a (H, W) uint8 image as P5 (binary) or P2 (ASCII) PGM."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise DataError(f"PGM images are 2-D, got shape {img.shape}")
    height, width = img.shape
    if binary:
        header = f"P5\n{width} {height}\n255\n".encode()
        Path(path).write_bytes(header + img.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in img)
        Path(path).write_text(f"P2\n{width} {height}\n255\n{rows}\n")


def load_image_dir(directory, manifest_path):
    """Load PGM images listed in a ``filename,label`` manifest CSV.

    Returns (images (n, H, W) uint8, labels (n,) int64) in manifest order;
    all images must share one shape.
    """
    directory = Path(directory)
    images, labels = [], []
    with open(manifest_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{manifest_path}: line {lineno}: expected "
                                f"'filename,label', got {row!r}")
            name, label = row[0].strip(), row[1].strip()
            try:
                labels.append(int(label))
            except ValueError:
                raise DataError(f"{manifest_path}: line {lineno}: label is not "
                                f"an integer: {label!r}") from None
            images.append(load_pgm(directory / name))
    if not images:
        raise DataError(f"{manifest_path}: no images listed")
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise DataError(f"images disagree on shape: {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.int64)


# ------------------------------------------------------------- CSV tables #


def load_timeseries(path) -> np.ndarray:
    """Parse a single-column CSV of numbers into a float64 vector."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: not a number: "
                                f"{text!r}") from None
    if not values:
        raise DataError(f"{path}: no values")
    return np.asarray(values, dtype=np.float64)


def save_timeseries(path, values: np.ndarray) -> None:
    series = np.asarray(values, dtype=np.float64).ravel()
    Path(path).write_text("".join(f"{v:.17g}\n" for v in series))


def save_matrix(path, matrix: np.ndarray) -> None:
    """Write a 2-D float matrix as comma-separated full-precision text."""
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {mat.shape}")
    np.savetxt(path, mat, delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: not a numeric CSV matrix: {exc}") from None


def save_table(path, header: list, rows: list) -> None:
    """Write a CSV table; floats are rendered at full precision."""

    def fmt(cell):
        if isinstance(cell, float):
            return f"{cell:.17g}"
        return str(cell)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(c) for c in row])


# -------------------------------------------------------- embedding tables #

EMBEDDING_BACKENDS = ("qrc", "crc")


def save_embeddings(path, embeddings, backend: str, provenance: dict) -> None:
    """Write an embedding matrix as CSV plus a JSON provenance sidecar.

    The first column records the backend (qrc | crc); the rest carry one
    observable each, named like ``Z_3@t_1``.  The sidecar at ``<path>.json``
    stores probe times and any caller-supplied provenance.
    """
    if backend not in EMBEDDING_BACKENDS:
        raise DataError(f"unknown embedding backend {backend!r}; "
                        f"expected one of {EMBEDDING_BACKENDS}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["backend", *embeddings.labels])
        for row in embeddings.values:
            writer.writerow([backend, *(f"{v:.17g}" for v in row)])
    sidecar = {"schema_version": 1,
               "backend": backend,
               "probe_times": list(embeddings.probe_times),
               "labels": list(embeddings.labels)}
    sidecar.update(provenance)
    save_json(f"{path}.json", sidecar)


def load_embeddings(path):
    """Read an embedding CSV + sidecar; returns (EmbeddingSet, backend, sidecar)."""
    from .embeddings import EmbeddingSet

    sidecar = load_json(f"{path}.json")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty embedding CSV") from None
        if not header or header[0] != "backend":
            raise DataError(f"{path}: first column must be 'backend', "
                            f"got {header[:1]!r}")
        labels = tuple(header[1:])
        rows, backends = [], set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: {len(row)} cells, "
                                f"expected {len(header)}")
            backends.add(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric "
                                f"embedding value") from None
    bad = backends - set(EMBEDDING_BACKENDS)
    if bad:
        raise DataError(f"{path}: unknown backend values {sorted(bad)}")
    if len(backends) != 1:
        raise DataError(f"{path}: mixed backends {sorted(backends)}")
    embeddings = EmbeddingSet(np.asarray(rows, dtype=np.float64), labels,
                              tuple(sidecar["probe_times"]))
    return embeddings, backends.pop(), sidecar


# ------------------------------------------------------------- shot tables #

SHOT_MAGIC = b"RSHT"
SHOT_VERSION = 1
_SHOT_HEADER = "<4sHIHHI"  # magic, version, n_tables, n_qubits, n_probes, n_shots


def save_shot_csv(path, tables: list) -> None:
    """One row per shot: datapoint id, probe index, bitstring (site 0 first)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["datapoint", "probe", "bitstring"])
        for dp, table in enumerate(tables):
            for probe in range(len(table.probe_times)):
                for bits in table.bitstrings(probe):
                    writer.writerow([dp, probe, bits])


def save_shot_binary(path, tables: list) -> None:
    """Compact little-endian shot archive: fixed header, probe times, packed bits.

    Layout: ``RSHT`` magic, uint16 version, uint32 table count, uint16 qubit
    count, uint16 probe count, uint32 shots per probe, ``n_probes`` float64
    probe times, then for every (table, probe, shot) one ``ceil(n_qubits/8)``
    byte group, least-significant byte first, bit j = site j outcome.
    """
    if not tables:
        raise DataError("no shot tables to save")
    first = tables[0]
    n_qubits, probe_times, n_shots = first.n_qubits, first.probe_times, first.n_shots
    for t in tables:
        if (t.n_qubits, t.probe_times, t.n_shots) != (n_qubits, probe_times, n_shots):
            raise DataError("shot tables disagree on qubit count, probe times "
                            "or shot count")
    header = struct.pack(_SHOT_HEADER, SHOT_MAGIC, SHOT_VERSION, len(tables),
                         n_qubits, len(probe_times), n_shots)
    times = np.asarray(probe_times, dtype="<f8").tobytes()
    codes = np.stack([t.codes for t in tables]).astype(np.uint64).ravel()
    bytes_per_shot = (n_qubits + 7) // 8
    packed = np.empty((codes.size, bytes_per_shot), dtype=np.uint8)
    for b in range(bytes_per_shot):
        packed[:, b] = (codes >> (8 * b)) & 0xFF
    Path(path).write_bytes(header + times + packed.tobytes())


def load_shot_binary(path) -> list:
    data = Path(path).read_bytes()
    head = struct.calcsize(_SHOT_HEADER)
    if len(data) < head:
        raise DataError(f"{path}: truncated header ({len(data)} bytes at "
                        f"offset 0, need {head})")
    magic, version, n_tables, n_qubits, n_probes, n_shots = \
        struct.unpack(_SHOT_HEADER, data[:head])
    if magic != SHOT_MAGIC:
        raise DataError(f"{path}: bad magic at offset 0: expected "
                        f"{SHOT_MAGIC!r}, got {magic!r}")
    if version != SHOT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    times_end = head + 8 * n_probes
    if len(data) < times_end:
        raise DataError(f"{path}: truncated probe times at offset {len(data)}")
    probe_times = tuple(np.frombuffer(data[head:times_end], dtype="<f8").tolist())
    bytes_per_shot = (n_qubits + 7) // 8
    expected = n_tables * n_probes * n_shots * bytes_per_shot
    payload = data[times_end:]
    if len(payload) != expected:
        raise DataError(f"{path}: payload holds {len(payload)} bytes from "
                        f"offset {times_end} but the header promises {expected}")
    packed = np.frombuffer(payload, dtype=np.uint8)
    packed = packed.reshape(n_tables * n_probes * n_shots, bytes_per_shot)
    codes = np.zeros(packed.shape[0], dtype=np.uint64)
    for b in range(bytes_per_shot):
        codes |= packed[:, b].astype(np.uint64) << (8 * b)
    codes = codes.reshape(n_tables, n_probes, n_shots).astype(np.uint32)
    return [ShotTable(n_qubits, probe_times, codes[i]) for i in range(n_tables)]


# ------------------------------------------------------------------- JSON #


def save_json(path, payload) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def geometry_to_dict(result) -> dict:
    """JSON-ready view of a geometry sweep point (δ, spectrum, labels)."""
    return {"schema_version": 1,
            "delta": float(result.delta),
            "eigenvalue": float(result.eigenvalue),
            "g": float(result.g),
            "spectrum_head": [float(v) for v in result.spectrum_head],
            "v_inf": [float(v) for v in result.v_inf],
            "labels": [int(v) for v in result.labels]}
