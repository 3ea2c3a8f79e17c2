"""Wrinkle-histogram feature extraction, plus HOG and color-histogram baselines.

The wrinkle descriptor accumulates Gabor filter responses into multi-scale
spatial grids: one scalar per (filter, grid, cell), L2-normalized per
(filter, grid) block, stacked into a single column vector.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, LayoutMismatchError, ParameterError
from .imaging import (
    GaborParams,
    Image,
    Kernel,
    Mask,
    apply_mask,
    convolve,
    make_gabor,
    to_luminance,
)

NORM_EPS = 1e-8


def _stable_id(desc: str) -> str:
    return hashlib.sha1(desc.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class FeatureLayout:
    """Layout of the wrinkle-histogram descriptor.

    ``image_dims`` is (width, height) of the working image. Feature length is
    n_filters * sum_j ceil(w/g_j) * ceil(h/g_j).
    """

    filter_bank: tuple[GaborParams, ...]
    grid_sizes: tuple[int, ...]
    image_dims: tuple[int, int]
    rectify: bool = True

    def __post_init__(self):
        object.__setattr__(self, "filter_bank", tuple(self.filter_bank))
        object.__setattr__(self, "grid_sizes", tuple(int(g) for g in self.grid_sizes))
        object.__setattr__(self, "image_dims", (int(self.image_dims[0]), int(self.image_dims[1])))
        if len(self.filter_bank) < 1:
            raise ParameterError("filter bank must hold at least one kernel")
        w, h = self.image_dims
        for g in self.grid_sizes:
            if g < 1 or g > min(w, h):
                raise ParameterError(f"grid size {g} outside [1, {min(w, h)}]")

    @property
    def feature_length(self) -> int:
        w, h = self.image_dims
        cells = sum(math.ceil(w / g) * math.ceil(h / g) for g in self.grid_sizes)
        return len(self.filter_bank) * cells

    @property
    def layout_id(self) -> str:
        bank = ";".join(
            f"wl={p.wavelength!r},or={p.orientation!r},ph={p.phase!r},"
            f"sg={p.sigma!r},as={p.aspect!r},sr={p.support_radius}"
            for p in self.filter_bank
        )
        grids = ",".join(str(g) for g in self.grid_sizes)
        desc = f"how|{self.image_dims[0]}x{self.image_dims[1]}|r{int(self.rectify)}|g[{grids}]|b[{bank}]"
        return _stable_id(desc)

    def kernels(self) -> list[Kernel]:
        return [make_gabor(p) for p in self.filter_bank]


def default_gabor_bank(
    wavelengths=(4.0, 8.0),
    orientations=(0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4),
    sigma_per_wavelength: float = 0.56,
    aspect: float = 0.5,
) -> tuple[GaborParams, ...]:
    """8-filter default bank: 4 orientations at 2 wavelengths, odd phase."""
    bank = []
    for wl in wavelengths:
        for theta in orientations:
            bank.append(
                GaborParams(
                    wavelength=wl,
                    orientation=theta,
                    phase=0.0,
                    sigma=sigma_per_wavelength * wl,
                    aspect=aspect,
                )
            )
    return tuple(bank)


def default_layout(image_dims=(64, 64), grid_sizes=(8, 16, 32), rectify=True) -> FeatureLayout:
    return FeatureLayout(
        filter_bank=default_gabor_bank(),
        grid_sizes=grid_sizes,
        image_dims=image_dims,
        rectify=rectify,
    )


@dataclass(frozen=True)
class FeatureVector:
    """A descriptor tied to the layout that produced it."""

    values: np.ndarray
    layout_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ContractError("feature vector contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __sub__(self, other: "FeatureVector") -> "FeatureVector":
        if not isinstance(other, FeatureVector):
            return NotImplemented
        if self.layout_id != other.layout_id:
            raise LayoutMismatchError(
                f"cannot subtract features of layout {other.layout_id} from {self.layout_id}"
            )
        return FeatureVector(self.values - other.values, self.layout_id)

    def scaled(self, factor: float) -> "FeatureVector":
        return FeatureVector(self.values * factor, self.layout_id)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def csv_row(self) -> str:
        return ",".join(repr(x) for x in self.values)


def _cell_sums(values: np.ndarray, grid: int) -> np.ndarray:
    """Sum ``values[h, w]`` into cells indexed (x, y) = (w // g, h // g)."""
    h, w = values.shape
    nx, ny = math.ceil(w / grid), math.ceil(h / grid)
    padded = np.zeros((ny * grid, nx * grid))
    padded[:h, :w] = values
    sums_yx = padded.reshape(ny, grid, nx, grid).sum(axis=(1, 3))
    return sums_yx.T  # (x, y)


def _normalize_block(block: np.ndarray) -> np.ndarray:
    return block / (np.linalg.norm(block) + NORM_EPS)


def how_features(image: Image, mask: Mask, layout: FeatureLayout) -> FeatureVector:
    """Extract the wrinkle-histogram descriptor from a segmented image.

    Background pixels are zeroed before filtering and excluded from
    accumulation; filter responses are rectified when the layout says so.
    Blocks are stacked in (filter, grid, x, y) lexicographic order.
    """
    w, h = layout.image_dims
    if image.channels != 1:
        raise ContractError("wrinkle features need a single-channel image")
    if (image.width, image.height) != (w, h):
        raise ContractError(
            f"image is {image.width}x{image.height}, layout expects {w}x{h}"
        )
    masked = apply_mask(image, mask)
    blocks = []
    for kernel in layout.kernels():
        resp = convolve(masked, kernel).data
        if layout.rectify:
            resp = np.abs(resp)
        resp = np.where(mask.bits, resp, 0.0)
        for g in layout.grid_sizes:
            cells = _cell_sums(resp, g)
            blocks.append(_normalize_block(cells.ravel()))
    return FeatureVector(np.concatenate(blocks), layout.layout_id)


def hog_layout_id(cell: int, bins: int, image_dims: tuple[int, int]) -> str:
    return _stable_id(f"hog|{image_dims[0]}x{image_dims[1]}|c{cell}|b{bins}")


def hog_features(image: Image, cell: int, bins: int) -> FeatureVector:
    """Gradient-orientation histograms on a dense cell grid.

    Unsigned orientation in [0, pi); bin centers at k*pi/bins with linear
    interpolation between the two nearest centers (wrapping); per-cell L2
    normalization. Gradients are central differences, one-sided at borders.
    """
    if image.channels != 1:
        raise ContractError("gradient histograms need a single-channel image")
    h, w = image.data.shape
    if cell > w or cell > h:
        raise ContractError(f"cell size {cell} exceeds image {w}x{h}")
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    gy, gx = np.gradient(image.data)
    mag = np.hypot(gx, gy)
    orient = np.arctan2(gy, gx) % math.pi
    bin_width = math.pi / bins
    t = orient / bin_width
    lower = np.floor(t).astype(int)
    frac = t - lower
    lower %= bins
    upper = (lower + 1) % bins

    ny, nx = math.ceil(h / cell), math.ceil(w / cell)
    hist = np.zeros((ny, nx, bins))
    cy = np.arange(h)[:, None] // cell
    cx = np.arange(w)[None, :] // cell
    cy = np.broadcast_to(cy, (h, w))
    cx = np.broadcast_to(cx, (h, w))
    np.add.at(hist, (cy.ravel(), cx.ravel(), lower.ravel()), (mag * (1.0 - frac)).ravel())
    np.add.at(hist, (cy.ravel(), cx.ravel(), upper.ravel()), (mag * frac).ravel())

    norms = np.linalg.norm(hist, axis=2, keepdims=True)
    hist = hist / (norms + NORM_EPS)
    return FeatureVector(hist.ravel(), hog_layout_id(cell, bins, (w, h)))


def color_layout_id(bins_per_channel: int) -> str:
    return _stable_id(f"color|b{bins_per_channel}")


def color_histogram(image: Image, bins_per_channel: int, mask: Mask | None = None) -> FeatureVector:
    """Per-channel intensity histograms, each normalized to sum 1."""
    if image.channels != 3:
        raise ContractError("color histogram needs a 3-channel image")
    if bins_per_channel < 1:
        raise ParameterError("bins_per_channel must be >= 1")
    n = bins_per_channel
    select = mask.bits if mask is not None else np.ones(image.data.shape[:2], dtype=bool)
    if mask is not None and (mask.height, mask.width) != (image.height, image.width):
        raise ContractError("mask does not match image dimensions")
    out = np.zeros(3 * n)
    pixels = image.data[select]
    if pixels.size:
        idx = np.minimum((pixels * n).astype(int), n - 1)
        for c in range(3):
            counts = np.bincount(idx[:, c], minlength=n).astype(np.float64)
            out[c * n:(c + 1) * n] = counts / counts.sum()
    return FeatureVector(out, color_layout_id(n))


def concat(features: list[FeatureVector]) -> FeatureVector:
    """Stack feature vectors; the composite layout id joins the parts."""
    if not features:
        raise ParameterError("concat needs at least one feature vector")
    if len(features) == 1:
        return features[0]
    values = np.concatenate([f.values for f in features])
    return FeatureVector(values, "+".join(f.layout_id for f in features))


FEATURE_KINDS = ("how", "hog", "color", "how+hog")


@dataclass(frozen=True)
class FeatureSet:
    """A named feature pipeline: which descriptors to extract and with what
    parameters. This is what a trained dictionary records about its features."""

    kind: str = "how"
    how: FeatureLayout | None = field(default_factory=default_layout)
    hog_cell: int = 8
    hog_bins: int = 9
    color_bins: int = 16
    image_dims: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ParameterError(f"unknown feature kind {self.kind!r}; expected one of {FEATURE_KINDS}")
        if "how" in self.kind and self.how is None:
            raise ParameterError("feature kind includes wrinkle features but no layout given")
        if "how" not in self.kind:
            object.__setattr__(self, "how", None)
        object.__setattr__(self, "image_dims", (int(self.image_dims[0]), int(self.image_dims[1])))

    @property
    def layout_id(self) -> str:
        ids = []
        if "how" in self.kind:
            ids.append(self.how.layout_id)
        if "hog" in self.kind:
            ids.append(hog_layout_id(self.hog_cell, self.hog_bins, self.image_dims))
        if self.kind == "color":
            ids.append(color_layout_id(self.color_bins))
        return "+".join(ids)

    def extract(self, image: Image, mask: Mask) -> FeatureVector:
        """Run the pipeline on an RGB (or luminance) frame and its mask."""
        parts = []
        lum = to_luminance(image)
        if "how" in self.kind:
            parts.append(how_features(lum, mask, self.how))
        if "hog" in self.kind:
            parts.append(hog_features(apply_mask(lum, mask), self.hog_cell, self.hog_bins))
        if self.kind == "color":
            if image.channels != 3:
                raise ContractError("color feature set needs RGB frames")
            parts.append(color_histogram(image, self.color_bins, mask))
        return concat(parts)

    def to_config(self) -> dict:
        cfg = {
            "kind": self.kind,
            "image_dims": list(self.image_dims),
            "hog_cell": self.hog_cell,
            "hog_bins": self.hog_bins,
            "color_bins": self.color_bins,
        }
        if self.how is not None:
            cfg["how"] = {
                "grid_sizes": list(self.how.grid_sizes),
                "image_dims": list(self.how.image_dims),
                "rectify": self.how.rectify,
                "filter_bank": [
                    {
                        "wavelength": p.wavelength,
                        "orientation": p.orientation,
                        "phase": p.phase,
                        "sigma": p.sigma,
                        "aspect": p.aspect,
                        "support_radius": p.support_radius,
                    }
                    for p in self.how.filter_bank
                ],
            }
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "FeatureSet":
        how = None
        if "how" in cfg:
            hc = cfg["how"]
            how = FeatureLayout(
                filter_bank=tuple(GaborParams(**p) for p in hc["filter_bank"]),
                grid_sizes=tuple(hc["grid_sizes"]),
                image_dims=tuple(hc["image_dims"]),
                rectify=bool(hc["rectify"]),
            )
        return cls(
            kind=cfg["kind"],
            how=how,
            hog_cell=int(cfg["hog_cell"]),
            hog_bins=int(cfg["hog_bins"]),
            color_bins=int(cfg["color_bins"]),
            image_dims=tuple(cfg["image_dims"]),
        )
