"""Images, NetPBM I/O, grayscale conversion, ROI extraction and grid slicing."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image", "Roi", "GridSpec",
    "NetpbmError", "NetpbmHeaderError", "NetpbmMaxvalError", "NetpbmTruncatedError",
    "BoundsError",
    "decode_netpbm", "encode_netpbm", "read_netpbm", "write_netpbm",
    "to_grayscale", "extract_roi", "split_cells", "stack_cells",
]


class NetpbmError(ValueError):
    pass


class NetpbmHeaderError(NetpbmError):
    pass


class NetpbmMaxvalError(NetpbmError):
    pass


class NetpbmTruncatedError(NetpbmError):
    pass


class BoundsError(ValueError):
    pass


class Image:
    """Immutable 8-bit raster, gray (h, w) or interleaved RGB (h, w, 3)."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.uint8, copy=True)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if not (arr.ndim == 2 or (arr.ndim == 3 and arr.shape[2] == 3)):
            raise ValueError(f"unsupported image shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, pixels: bytes) -> "Image":
        if channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if len(pixels) != width * height * channels:
            raise ValueError("pixel buffer length does not match width*height*channels")
        arr = np.frombuffer(pixels, dtype=np.uint8)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(arr.reshape(shape))

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the pixel array."""
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self._data.ndim == 2 else 3

    @property
    def pixels(self) -> bytes:
        return self._data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise BoundsError(f"ROI origin must be non-negative, got ({self.x}, {self.y})")
        if self.width < 1 or self.height < 1:
            raise BoundsError(f"ROI must be at least 1x1, got {self.width}x{self.height}")

    @classmethod
    def full(cls, image: Image) -> "Roi":
        return cls(0, 0, image.width, image.height)

    def check(self, width: int, height: int) -> None:
        if self.x + self.width > width or self.y + self.height > height:
            raise BoundsError(
                f"ROI {self.x},{self.y},{self.width},{self.height} exceeds frame {width}x{height}"
            )


@dataclass(frozen=True)
class GridSpec:
    rows: int = 9
    cols: int = 8
    cell_width: int = 44
    cell_height: int = 44

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise BoundsError("grid needs at least one row and one column")
        if self.cell_width < 1 or self.cell_height < 1:
            raise BoundsError("cell size must be positive")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def extent(self) -> tuple[int, int]:
        """(width, height) covered by the grid."""
        return self.cols * self.cell_width, self.rows * self.cell_height

    def check(self, width: int, height: int) -> None:
        gw, gh = self.extent
        if gw > width or gh > height:
            raise BoundsError(f"grid extent {gw}x{gh} exceeds ROI {width}x{height}")


# --- NetPBM ---------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i] in _WS:
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in b"\r\n":
                i += 1
            continue
        if i >= n:
            raise NetpbmHeaderError("header ends prematurely")
        start = i
        while i < n and data[i] not in _WS and data[i] != ord("#"):
            i += 1
        tokens.append(data[start:i])
    # exactly one whitespace byte separates maxval from the body
    if i >= n or data[i] not in _WS:
        raise NetpbmHeaderError("missing whitespace after maxval")
    return tokens, i + 1


def decode_netpbm(data: bytes) -> Image:
    """Decode a binary P5 (gray) or P6 (RGB) image with maxval 255."""
    data = bytes(data)
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise NetpbmHeaderError("bad magic, expected P5 or P6")
    if len(data) > 2 and data[2] not in _WS and data[2] != ord("#"):
        raise NetpbmHeaderError("bad magic, expected P5 or P6")
    channels = 1 if data[:2] == b"P5" else 3
    tokens, offset = _header_tokens(data[2:], 3)
    offset += 2
    values = []
    for tok in tokens:
        if not re.fullmatch(rb"[0-9]+", tok):
            raise NetpbmHeaderError(f"non-numeric header field {tok!r}")
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise NetpbmHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise NetpbmMaxvalError(f"maxval must be 255, got {maxval}")
    size = width * height * channels
    body = data[offset:offset + size]
    if len(body) < size:
        raise NetpbmTruncatedError(f"body has {len(body)} bytes, expected {size}")
    return Image.from_bytes(width, height, channels, body)


def encode_netpbm(image: Image) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.pixels


def read_netpbm(path) -> Image:
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_netpbm(path, image: Image) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(image))


# --- geometry ---------------------------------------------------------------

def to_grayscale(image: Image) -> Image:
    """BT.601 luma, rounded half up. Gray input comes back as-is."""
    if image.channels == 1:
        return image
    rgb = image.array.astype(np.int64)
    # integer form keeps the half-up rounding exact
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return Image(np.clip(y, 0, 255))


def extract_roi(image: Image, roi: Roi) -> Image:
    roi.check(image.width, image.height)
    return Image(image.array[roi.y:roi.y + roi.height, roi.x:roi.x + roi.width])


def stack_cells(roi_image: Image, grid: GridSpec) -> np.ndarray:
    """All grid cells as one array of shape (rows*cols, ch, cw[, 3]), row-major."""
    grid.check(roi_image.width, roi_image.height)
    gw, gh = grid.extent
    a = roi_image.array[:gh, :gw]
    tail = a.shape[2:]
    a = a.reshape(grid.rows, grid.cell_height, grid.cols, grid.cell_width, *tail)
    a = np.swapaxes(a, 1, 2)
    return np.ascontiguousarray(a.reshape(grid.n_cells, grid.cell_height, grid.cell_width, *tail))


def split_cells(roi_image: Image, grid: GridSpec) -> list[Image]:
    return [Image(c) for c in stack_cells(roi_image, grid)]
