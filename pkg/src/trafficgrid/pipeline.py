"""Frames in, cell datasets and density reports out."""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .features import HogParams, LbpParams, extract_batch, feature_dim
from .imaging import GridSpec, Image, Roi, extract_roi, stack_cells, to_grayscale
from .svm import DimensionError, LinearSvmModel, predict_batch

__all__ = [
    "CellLabel", "Dataset", "DensityReport", "SyntheticSceneSpec",
    "PipelineError", "LabelError", "DatasetFormatError",
    "build_dataset", "split_dataset", "estimate_density", "annotate",
    "generate_synthetic_frame", "random_vehicle_cells",
    "read_manifest", "write_manifest", "save_dataset", "load_dataset",
    "report_to_json", "report_from_json",
    "TRAFFIC", "ROAD", "RED", "GREEN",
]

TRAFFIC = "traffic"
ROAD = "road"
RED = (255, 0, 0)
GREEN = (0, 255, 0)
BORDER = 2


class PipelineError(ValueError):
    pass


class LabelError(PipelineError):
    pass


class DatasetFormatError(PipelineError):
    pass


@dataclass(frozen=True)
class CellLabel:
    frame_id: str
    row: int
    col: int
    label: str

    def __post_init__(self):
        if self.label not in (TRAFFIC, ROAD):
            raise LabelError(f"label must be 'traffic' or 'road', got {self.label!r}")


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    provenance: list

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8).ravel()
        self.provenance = [(str(f), int(r), int(c)) for f, r, c in self.provenance]
        if self.features.ndim != 2:
            raise PipelineError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.labels.shape[0] != n or len(self.provenance) != n:
            raise PipelineError("features, labels and provenance disagree on row count")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], [self.provenance[i] for i in idx])


@dataclass(frozen=True)
class DensityReport:
    frame_id: str
    grid: np.ndarray  # rows x cols, 1 = traffic

    def __post_init__(self):
        g = np.array(self.grid, dtype=np.uint8, copy=True)
        if g.ndim != 2:
            raise PipelineError("report grid must be 2-D")
        if np.any(g > 1):
            raise PipelineError("report grid entries must be 0 or 1")
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def rows(self) -> int:
        return self.grid.shape[0]

    @property
    def cols(self) -> int:
        return self.grid.shape[1]

    @property
    def traffic_cells(self) -> int:
        return int(self.grid.sum())

    @property
    def total_cells(self) -> int:
        return self.grid.size

    @property
    def density(self) -> float:
        return self.traffic_cells / self.total_cells

    def __eq__(self, other):
        if not isinstance(other, DensityReport):
            return NotImplemented
        return self.frame_id == other.frame_id and np.array_equal(self.grid, other.grid)


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """A grid-sized frame of noisy road with dark vehicles in chosen cells."""

    rows: int = 9
    cols: int = 8
    cell_width: int = 44
    cell_height: int = 44
    vehicle_cells: frozenset = field(default_factory=frozenset)
    noise_seed: int = 0

    road_base = 120
    road_amplitude = 10
    vehicle_body = 30
    vehicle_highlight = 220

    def __post_init__(self):
        object.__setattr__(self, "vehicle_cells", frozenset((int(r), int(c)) for r, c in self.vehicle_cells))
        if self.rows < 1 or self.cols < 1:
            raise PipelineError("grid needs at least one row and column")
        if self.cell_width < 8 or self.cell_height < 8:
            raise PipelineError("synthetic cells must be at least 8x8")
        for r, c in self.vehicle_cells:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise PipelineError(f"vehicle cell ({r}, {c}) outside the {self.rows}x{self.cols} grid")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.rows, self.cols, self.cell_width, self.cell_height)


# --- dataset construction ---------------------------------------------------

def _check_label(lab: CellLabel, grid: GridSpec, frames: dict):
    if lab.frame_id not in frames:
        raise LabelError(f"label references missing frame {lab.frame_id!r}")
    if not (0 <= lab.row < grid.rows and 0 <= lab.col < grid.cols):
        raise LabelError(
            f"cell ({lab.row}, {lab.col}) of frame {lab.frame_id!r} outside the {grid.rows}x{grid.cols} grid"
        )


def _gray_cells(frame: Image, roi: Roi, grid: GridSpec) -> np.ndarray:
    return stack_cells(to_grayscale(extract_roi(frame, roi)), grid)


def build_dataset(frames, roi: Roi, grid: GridSpec, labels, hog: HogParams = HogParams(),
                  lbp: LbpParams = LbpParams(), threads: int = 1) -> Dataset:
    """One feature row per label, in label order. Unlabeled cells are skipped."""
    frame_map = {}
    for fid, img in frames:
        if fid in frame_map:
            raise LabelError(f"duplicate frame id {fid!r}")
        frame_map[fid] = img
    labels = list(labels)
    seen = set()
    by_frame: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        _check_label(lab, grid, frame_map)
        key = (lab.frame_id, lab.row, lab.col)
        if key in seen:
            raise LabelError(f"cell {key} labeled more than once")
        seen.add(key)
        by_frame.setdefault(lab.frame_id, []).append(i)

    dim = feature_dim(grid.cell_width, grid.cell_height, hog, lbp)
    X = np.empty((len(labels), dim))
    for fid, rows in by_frame.items():
        cells = _gray_cells(frame_map[fid], roi, grid)
        idx = [labels[i].row * grid.cols + labels[i].col for i in rows]
        X[rows] = extract_batch(cells[idx], hog, lbp, threads=threads)
    y = [1 if lab.label == TRAFFIC else -1 for lab in labels]
    prov = [(lab.frame_id, lab.row, lab.col) for lab in labels]
    return Dataset(X, y, prov)


def split_dataset(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded per-cell shuffle; the first round(n*fraction) rows train."""
    n = len(dataset)
    if n < 2:
        raise PipelineError("need at least 2 rows to split")
    if not 0.0 < train_fraction < 1.0:
        raise PipelineError("train_fraction must lie strictly between 0 and 1")
    n_train = math.floor(n * train_fraction + 0.5)
    if n_train == 0 or n_train == n:
        raise PipelineError(f"split of {n} rows at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


# --- prediction ---------------------------------------------------------------

def estimate_density(frame: Image, roi: Roi, grid: GridSpec, model: LinearSvmModel,
                     hog: HogParams = HogParams(), lbp: LbpParams = LbpParams(),
                     frame_id: str = "", threads: int = 1) -> DensityReport:
    dim = feature_dim(grid.cell_width, grid.cell_height, hog, lbp)
    if dim != model.dim:
        raise DimensionError(f"features have {dim} dimensions, model expects {model.dim}")
    X = extract_batch(_gray_cells(frame, roi, grid), hog, lbp, threads=threads)
    pred, _ = predict_batch(model, X)
    return DensityReport(frame_id, (pred > 0).reshape(grid.rows, grid.cols))


def annotate(frame: Image, roi: Roi, grid: GridSpec, report: DensityReport) -> Image:
    """RGB copy of the frame with red (traffic) / green (road) cell borders."""
    if report.grid.shape != (grid.rows, grid.cols):
        raise PipelineError(f"report grid {report.grid.shape} does not match {grid.rows}x{grid.cols}")
    roi.check(frame.width, frame.height)
    grid.check(roi.width, roi.height)
    a = frame.array
    out = np.repeat(a[:, :, None], 3, axis=2) if a.ndim == 2 else a.copy()
    cw, ch = grid.cell_width, grid.cell_height
    for r in range(grid.rows):
        for c in range(grid.cols):
            color = RED if report.grid[r, c] else GREEN
            x0 = roi.x + c * cw
            y0 = roi.y + r * ch
            cell = out[y0:y0 + ch, x0:x0 + cw]
            cell[:BORDER] = color
            cell[-BORDER:] = color
            cell[:, :BORDER] = color
            cell[:, -BORDER:] = color
    return Image(out)


# --- synthetic scenes ----------------------------------------------------------

def random_vehicle_cells(rows: int, cols: int, k: int, rng) -> frozenset:
    picks = rng.choice(rows * cols, size=k, replace=False)
    return frozenset((int(i) // cols, int(i) % cols) for i in picks)


def _draw_vehicle(canvas, rng, spec: SyntheticSceneSpec):
    ch, cw = canvas.shape
    # side fractions in [0.84, 0.95] keep coverage above 70% of the cell
    vw = int(rng.integers(math.ceil(0.84 * cw), math.floor(0.95 * cw) + 1))
    vh = int(rng.integers(math.ceil(0.84 * ch), math.floor(0.95 * ch) + 1))
    x0 = int(rng.integers(0, cw - vw + 1))
    y0 = int(rng.integers(0, ch - vh + 1))
    body = canvas[y0:y0 + vh, x0:x0 + vw]
    body[:] = spec.vehicle_body
    # windshield band and two lamps, together under 10% of the body area
    band_h = max(1, vh // 12)
    band_y = vh // 4
    bx0, bx1 = vw // 5, vw - vw // 5
    body[band_y:band_y + band_h, bx0:bx1] = spec.vehicle_highlight
    lamp = max(1, min(vw, vh) // 12)
    if rng.integers(0, 2):
        ly = vh - 1 - lamp
    else:
        ly = 1
    body[ly:ly + lamp, 1:1 + lamp] = spec.vehicle_highlight
    body[ly:ly + lamp, vw - 1 - lamp:vw - 1] = spec.vehicle_highlight


def generate_synthetic_frame(spec: SyntheticSceneSpec, frame_id: str = "") -> tuple[Image, list[CellLabel]]:
    """Deterministic gray frame covering exactly the grid, plus ground truth."""
    rng = np.random.default_rng(spec.noise_seed)
    h = spec.rows * spec.cell_height
    w = spec.cols * spec.cell_width
    amp = spec.road_amplitude
    frame = spec.road_base + rng.integers(-amp, amp + 1, size=(h, w))
    labels = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            traffic = (r, c) in spec.vehicle_cells
            if traffic:
                y0, x0 = r * spec.cell_height, c * spec.cell_width
                _draw_vehicle(frame[y0:y0 + spec.cell_height, x0:x0 + spec.cell_width], rng, spec)
            labels.append(CellLabel(frame_id, r, c, TRAFFIC if traffic else ROAD))
    return Image(np.clip(frame, 0, 255)), labels


# --- file formats ---------------------------------------------------------------

MANIFEST_HEADER = ["frame_id", "row", "col", "label"]


def write_manifest(labels, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for lab in labels:
        writer.writerow([lab.frame_id, lab.row, lab.col, lab.label])


def read_manifest(fh) -> list[CellLabel]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise LabelError("manifest is empty") from None
    if [h.strip() for h in header] != MANIFEST_HEADER:
        raise LabelError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    out = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 4:
            raise LabelError(f"manifest line {lineno}: expected 4 fields, got {len(rec)}")
        fid, row, col, label = (s.strip() for s in rec)
        try:
            row_i, col_i = int(row), int(col)
        except ValueError:
            raise LabelError(f"manifest line {lineno}: row/col must be integers") from None
        if label not in (TRAFFIC, ROAD):
            raise LabelError(f"manifest line {lineno}: unknown label {label!r}")
        out.append(CellLabel(fid, row_i, col_i, label))
    return out


_DS_HEAD = struct.Struct("<4sIQQ")
DS_MAGIC = b"GSDS"
DS_VERSION = 1


def save_dataset(ds: Dataset) -> bytes:
    prov = json.dumps([list(p) for p in ds.provenance], ensure_ascii=False).encode("utf-8")
    return b"".join([
        _DS_HEAD.pack(DS_MAGIC, DS_VERSION, len(ds), ds.dim),
        ds.features.astype("<f8").tobytes(),
        (ds.labels > 0).astype(np.uint8).tobytes(),
        struct.pack("<Q", len(prov)),
        prov,
    ])


def load_dataset(data: bytes) -> Dataset:
    data = bytes(data)
    if data[:4] != DS_MAGIC:
        raise DatasetFormatError(f"bad magic {data[:4]!r}, expected {DS_MAGIC!r}")
    if len(data) < _DS_HEAD.size:
        raise DatasetFormatError("dataset header truncated")
    _, version, n, dim = _DS_HEAD.unpack_from(data)
    if version != DS_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    off = _DS_HEAD.size
    body = 8 * n * dim + n
    if len(data) < off + body + 8:
        raise DatasetFormatError("dataset body truncated")
    X = np.frombuffer(data, dtype="<f8", count=n * dim, offset=off).reshape(n, dim)
    off += 8 * n * dim
    lab = np.frombuffer(data, dtype=np.uint8, count=n, offset=off)
    off += n
    if np.any(lab > 1):
        raise DatasetFormatError("label bytes must be 0 or 1")
    (plen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) != off + plen:
        raise DatasetFormatError("provenance block length mismatch")
    try:
        prov = json.loads(data[off:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"bad provenance block: {exc}") from None
    if len(prov) != n:
        raise DatasetFormatError("provenance row count mismatch")
    return Dataset(X.copy(), np.where(lab > 0, 1, -1), [tuple(p) for p in prov])


def report_to_json(report: DensityReport) -> str:
    return json.dumps({
        "frame_id": report.frame_id,
        "rows": report.rows,
        "cols": report.cols,
        "grid": report.grid.astype(int).tolist(),
        "traffic_cells": report.traffic_cells,
        "total_cells": report.total_cells,
        "density": report.density,
    })


def report_from_json(text) -> DensityReport:
    obj = json.loads(text)
    rep = DensityReport(obj["frame_id"], np.array(obj["grid"], dtype=np.int64))
    if (rep.rows, rep.cols) != (obj["rows"], obj["cols"]):
        raise PipelineError("report rows/cols disagree with its grid")
    if rep.traffic_cells != obj["traffic_cells"] or rep.total_cells != obj["total_cells"]:
        raise PipelineError("report counts disagree with its grid")
    return rep
