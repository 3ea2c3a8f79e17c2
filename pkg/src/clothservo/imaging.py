"""Image containers, Gabor kernel synthesis, filtering, and foreground segmentation.

Images are numpy arrays wrapped in a thin container: shape (h, w) for a single
luminance channel or (h, w, 3) for RGB, float64, row-major. Source images live
in [0, 1]; filter responses are unrestricted finite reals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import ContractError, ParameterError


@dataclass(frozen=True)
class Image:
    """A dense pixel grid. ``data`` has shape (h, w) or (h, w, 3), float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ContractError(f"image shape must be (h, w) or (h, w, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ContractError("image contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_unit(cls, data: np.ndarray) -> "Image":
        """Construct a source image, additionally enforcing values in [0, 1]."""
        arr = np.asarray(data, dtype=np.float64)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractError("source image values must lie in [0, 1]")
        return cls(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


@dataclass(frozen=True)
class GaborParams:
    """Parameters of one wrinkle-enhancement kernel.

    ``orientation`` is normalized into [0, pi) at construction; the filter is
    a Gaussian envelope modulated by a sine wave along the rotated x axis.
    """

    wavelength: float
    orientation: float
    phase: float = 0.0
    sigma: float = 2.0
    aspect: float = 0.5
    support_radius: int | None = None  # defaults to ceil(3*sigma)

    def __post_init__(self):
        if not (self.wavelength > 0):
            raise ParameterError(f"wavelength must be > 0, got {self.wavelength}")
        if not (self.sigma > 0):
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not (self.aspect > 0):
            raise ParameterError(f"aspect must be > 0, got {self.aspect}")
        object.__setattr__(self, "orientation", float(self.orientation) % math.pi)
        radius = self.support_radius
        if radius is None:
            radius = int(math.ceil(3.0 * self.sigma))
        if radius < 1:
            raise ParameterError(f"support_radius must be >= 1, got {radius}")
        object.__setattr__(self, "support_radius", int(radius))


@dataclass(frozen=True)
class Kernel:
    """Square odd-sized filter kernel."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise ParameterError(f"kernel must be square with odd size, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ParameterError("kernel weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def identity(cls, size: int = 1) -> "Kernel":
        w = np.zeros((size, size))
        w[size // 2, size // 2] = 1.0
        return cls(w)


@dataclass(frozen=True)
class Mask:
    """Boolean foreground mask; True marks cloth pixels."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ContractError(f"mask must be 2-D, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))


def make_gabor(params: GaborParams) -> Kernel:
    """Synthesize the Gabor kernel for ``params``.

    weights[y][x] = exp(-(x'^2 + aspect^2 y'^2) / (2 sigma^2))
                    * sin(2 pi x' / wavelength + phase)
    with (x, y) centered on the kernel midpoint and (x', y') the coordinates
    rotated by the orientation angle.
    """
    r = params.support_radius
    ys, xs = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    c, s = math.cos(params.orientation), math.sin(params.orientation)
    xp = xs * c + ys * s
    yp = -xs * s + ys * c
    envelope = np.exp(-(xp ** 2 + params.aspect ** 2 * yp ** 2) / (2.0 * params.sigma ** 2))
    carrier = np.sin(2.0 * math.pi * xp / params.wavelength + params.phase)
    return Kernel(envelope * carrier)


def convolve(image: Image, kernel: Kernel) -> Image:
    """Filter a single-channel image, clamp-to-edge border, same-size output.

    Correlation orientation: out[y][x] = sum_k weights[ky][kx] * image[y+ky-r][x+kx-r]
    (no kernel flip), which is the common image-filtering convention.
    """
    if image.channels != 1:
        raise ContractError("convolve expects a single-channel image; convert with to_luminance")
    out = ndimage.correlate(image.data, kernel.weights, mode="nearest")
    return Image(out)


def to_luminance(image: Image) -> Image:
    """RGB to luminance with Rec.601 weights; single-channel passes through."""
    if image.channels == 1:
        return image
    weights = np.array([0.299, 0.587, 0.114])
    return Image(image.data @ weights)


class BackgroundModel:
    """Per-pixel background classifier interface.

    The simulator uses a flat known-background model; a statistical model for
    real imagery can be slotted in behind the same surface.
    """

    def foreground(self, image: Image) -> Mask:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class FlatBackground(BackgroundModel):
    """Known uniform background color with a per-channel tolerance."""

    color: tuple[float, float, float]
    tolerance: float = 0.05
    width: int | None = None
    height: int | None = None

    def foreground(self, image: Image) -> Mask:
        if (self.width is not None and image.width != self.width) or (
            self.height is not None and image.height != self.height
        ):
            raise ContractError(
                f"background model is {self.width}x{self.height}, "
                f"image is {image.width}x{image.height}"
            )
        if image.channels == 3:
            ref = np.asarray(self.color, dtype=np.float64)
            off = np.abs(image.data - ref) > self.tolerance
            bits = np.any(off, axis=2)
        else:
            lum = float(np.dot([0.299, 0.587, 0.114], self.color))
            bits = np.abs(image.data - lum) > self.tolerance
        return Mask(bits)


def segment_foreground(image: Image, background: BackgroundModel) -> Mask:
    """Classify each pixel as cloth (True) or background (False)."""
    return background.foreground(image)


def apply_mask(image: Image, mask: Mask) -> Image:
    """Zero out background pixels ahead of filtering."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise ContractError(
            f"mask {mask.height}x{mask.width} does not match image "
            f"{image.height}x{image.width}"
        )
    if image.channels == 1:
        return Image(np.where(mask.bits, image.data, 0.0))
    return Image(np.where(mask.bits[:, :, None], image.data, 0.0))


def quantize(image: Image) -> Image:
    """Snap intensities to the 8-bit grid, as the PNG round trip would."""
    return Image(np.round(np.clip(image.data, 0.0, 1.0) * 255.0) / 255.0)


def save_png(image: Image, path) -> None:
    """Write a source image as 8-bit PNG (values mapped linearly from [0, 1])."""
    arr = np.round(np.clip(image.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    PILImage.fromarray(arr, mode=mode).save(path, format="PNG")


def load_png(path) -> Image:
    """Read an 8-bit PNG back into a [0, 1] image."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return Image.from_unit(arr)
