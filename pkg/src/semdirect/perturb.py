"""Differentiable-free semantic image operators and their search boxes.

Images are float arrays of shape (H, W, 3) with intensities in [0, 1].
Three operator families are exposed: an axis-aligned affine warp, a
hue/saturation/brightness shift, and a directional motion blur.  A
:class:`PerturbationSpec` packages one family with per-image bounds so a
unit-cube vector can drive every camera of a frame at once.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "PerturbationSpec",
    "geometric_transform",
    "rgb_to_hsb",
    "hsb_to_rgb",
    "colour_shift",
    "motion_blur_kernel",
    "convolve",
    "decode_and_apply",
    "load_image",
    "save_image",
    "encode_png_base64",
    "decode_png_base64",
]

TWO_PI = 2.0 * math.pi


# --- sampling helpers ----------------------------------------------------


def _bilinear(plane: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Bilinear gather at fractional (row, col) positions, zero outside."""
    h, w = plane.shape[:2]
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    wy = sy - y0
    wx = sx - x0
    y0 = y0.astype(int)
    x0 = x0.astype(int)

    def gather(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = plane[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        if plane.ndim == 3:
            return vals * inside[..., None]
        return vals * inside

    w00 = (1.0 - wy) * (1.0 - wx)
    w01 = (1.0 - wy) * wx
    w10 = wy * (1.0 - wx)
    w11 = wy * wx
    if plane.ndim == 3:
        w00, w01, w10, w11 = (w[..., None] for w in (w00, w01, w10, w11))
    return (
        w00 * gather(y0, x0)
        + w01 * gather(y0, x0 + 1)
        + w10 * gather(y0 + 1, x0)
        + w11 * gather(y0 + 1, x0 + 1)
    )


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr


# --- geometric warp ------------------------------------------------------


def geometric_transform(
    img: np.ndarray, scale_h: float, scale_v: float, trans_h: float, trans_v: float
) -> np.ndarray:
    """Axis-aligned affine warp by inverse mapping.

    In centre-origin coordinates normalised to [-1, 1], the source point
    of an output pixel is scale * target + translation per axis, sampled
    bilinearly with zero fill outside the source image.  Scales of 1 and
    translations of 0 reproduce the input exactly; a translation of t
    moves the sampling grid by t * (axis extent) / 2 pixels.
    """
    for name, s in (("scale_h", scale_h), ("scale_v", scale_v)):
        if not (math.isfinite(s) and s > 0.0):
            raise ValueError(f"{name} must be positive and finite, got {s}")
    if not (math.isfinite(trans_h) and math.isfinite(trans_v)):
        raise ValueError("translations must be finite")
    arr = _check_image(img)
    h, w = arr.shape[:2]
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    xs = scale_h * (np.arange(w) - cx) + cx + trans_h * (w / 2.0)
    ys = scale_v * (np.arange(h) - cy) + cy + trans_v * (h / 2.0)
    sx, sy = np.meshgrid(xs, ys)
    return np.clip(_bilinear(arr, sy, sx), 0.0, 1.0)


# --- colour shift --------------------------------------------------------


def rgb_to_hsb(img: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> (hue, saturation, brightness); hue in [0, 2*pi) radians.

    Achromatic pixels get hue 0 and saturation 0; brightness is the
    channel maximum.
    """
    arr = _check_image(img)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    v = arr.max(axis=-1)
    c = v - arr.min(axis=-1)
    safe_c = np.where(c == 0.0, 1.0, c)
    hue6 = np.where(
        v == r,
        np.mod((g - b) / safe_c, 6.0),
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    hue6 = np.where(c == 0.0, 0.0, hue6)
    safe_v = np.where(v == 0.0, 1.0, v)
    sat = np.where(v == 0.0, 0.0, c / safe_v)
    return np.stack([hue6 * (math.pi / 3.0), sat, v], axis=-1)


def hsb_to_rgb(hsb: np.ndarray) -> np.ndarray:
    """Inverse hexcone map; accepts hue in radians."""
    arr = np.asarray(hsb, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) HSB array, got shape {arr.shape}")
    h6 = np.mod(arr[..., 0] / (math.pi / 3.0), 6.0)
    sat = arr[..., 1]
    v = arr[..., 2]
    c = v * sat
    x = c * (1.0 - np.abs(np.mod(h6, 2.0) - 1.0))
    m = v - c
    zero = np.zeros_like(c)
    sector = np.clip(h6.astype(int), 0, 5)
    r = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
                  [c, x, zero, zero, x], default=c)
    g = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
                  [x, c, c, x, zero], default=zero)
    b = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4],
                  [zero, zero, x, c, c], default=x)
    return np.stack([r + m, g + m, b + m], axis=-1)


def colour_shift(
    img: np.ndarray, hue_shift: float, sat_scale: float, brt_shift: float
) -> np.ndarray:
    """Rotate hue, scale saturation and offset brightness in HSB space.

    Hue wraps modulo 2*pi; saturation and brightness are clamped to
    [0, 1] after the shift.  (0, 1, 0) is the identity.
    """
    if not all(math.isfinite(p) for p in (hue_shift, sat_scale, brt_shift)):
        raise ValueError("colour shift parameters must be finite")
    if sat_scale < 0.0:
        raise ValueError(f"saturation scale must be non-negative, got {sat_scale}")
    hsb = rgb_to_hsb(img)
    hsb[..., 0] = np.mod(hsb[..., 0] + hue_shift, TWO_PI)
    hsb[..., 1] = np.clip(hsb[..., 1] * sat_scale, 0.0, 1.0)
    hsb[..., 2] = np.clip(hsb[..., 2] + brt_shift, 0.0, 1.0)
    return np.clip(hsb_to_rgb(hsb), 0.0, 1.0)


# --- motion blur ---------------------------------------------------------


def motion_blur_kernel(kernel_size: int, angle: float, direction: float) -> np.ndarray:
    """Directional blur kernel: a weighted line rotated inside a k x k grid.

    The horizontal prototype ramps linearly from 1-d to d with
    d = (direction + 1) / 2, so direction 0 is a uniform streak and the
    extremes put all emphasis on one end.  The prototype is rotated by
    ``angle`` with bilinear resampling (zero fill) and renormalised to
    sum 1.
    """
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be an odd integer >= 3, got {kernel_size}")
    if not (math.isfinite(direction) and -1.0 <= direction <= 1.0):
        raise ValueError(f"direction must lie in [-1, 1], got {direction}")
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    d = (direction + 1.0) / 2.0
    center = (kernel_size - 1) // 2
    base = np.zeros((kernel_size, kernel_size))
    base[center, :] = np.linspace(1.0 - d, d, kernel_size)
    offsets = np.arange(kernel_size) - center
    x, y = np.meshgrid(offsets, offsets)
    cos_a = math.cos(angle)
    sin_a = math.sin(angle)
    src_x = cos_a * x + sin_a * y
    src_y = -sin_a * x + cos_a * y
    rotated = _bilinear(base, src_y + center, src_x + center)
    return rotated / rotated.sum()


def convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D correlation with replicated borders, same size out."""
    kern = np.asarray(kernel, dtype=float)
    if kern.ndim != 2:
        raise ValueError(f"kernel must be 2-D, got shape {kern.shape}")
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        return np.clip(ndimage.correlate(arr, kern, mode="nearest"), 0.0, 1.0)
    arr = _check_image(arr)
    out = np.stack(
        [ndimage.correlate(arr[..., ch], kern, mode="nearest") for ch in range(3)],
        axis=-1,
    )
    return np.clip(out, 0.0, 1.0)


# --- search-box packaging -------------------------------------------------

_MOTION_BLUR_SIZES = (5, 7, 9, 11)


@dataclass(frozen=True)
class PerturbationSpec:
    """One operator family with its per-image parameter box.

    ``lower``/``upper`` give the decoded bounds of the per-image
    parameters, in the order the family operator consumes them.
    """

    family: str
    gamma: Optional[float]
    kernel_size: Optional[int]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @classmethod
    def colour(cls, gamma: float) -> "PerturbationSpec":
        """Parameters per image: (hue shift, saturation scale, brightness shift)."""
        _check_gamma(gamma)
        return cls(
            family="colour",
            gamma=gamma,
            kernel_size=None,
            lower=(-math.pi * gamma, 1.0 - gamma, -gamma),
            upper=(math.pi * gamma, 1.0 + gamma, gamma),
        )

    @classmethod
    def geometric(cls, gamma: float) -> "PerturbationSpec":
        """Parameters per image: (scale_h, scale_v, trans_h, trans_v)."""
        _check_gamma(gamma)
        return cls(
            family="geometric",
            gamma=gamma,
            kernel_size=None,
            lower=(1.0 - gamma, 1.0 - gamma, -gamma, -gamma),
            upper=(1.0 + gamma, 1.0 + gamma, gamma, gamma),
        )

    @classmethod
    def motion_blur(cls, kernel_size: int) -> "PerturbationSpec":
        """Parameters per image: (angle, direction)."""
        if kernel_size not in _MOTION_BLUR_SIZES:
            raise ValueError(
                f"kernel_size must be one of {_MOTION_BLUR_SIZES}, got {kernel_size}"
            )
        return cls(
            family="motion_blur",
            gamma=None,
            kernel_size=kernel_size,
            lower=(-math.pi, -1.0),
            upper=(math.pi, 1.0),
        )

    @property
    def params_per_image(self) -> int:
        return len(self.lower)

    def dimension(self, n_images: int) -> int:
        if n_images < 1:
            raise ValueError("a frame needs at least one image")
        return self.params_per_image * n_images

    def decode(self, theta_unit: Sequence[float], n_images: int) -> np.ndarray:
        """Map a unit vector to an (n_images, params_per_image) array."""
        theta = np.asarray(theta_unit, dtype=float)
        expected = self.dimension(n_images)
        if theta.shape != (expected,):
            raise ValueError(
                f"theta_unit must have length {expected} for {n_images} image(s), "
                f"got shape {theta.shape}"
            )
        if np.any(theta < 0.0) or np.any(theta > 1.0):
            raise ValueError("theta_unit components must lie in [0, 1]")
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        per_image = theta.reshape(n_images, self.params_per_image)
        return lower + per_image * (upper - lower)

    def apply_image(self, img: np.ndarray, params: Sequence[float]) -> np.ndarray:
        if self.family == "colour":
            return colour_shift(img, *params)
        if self.family == "geometric":
            return geometric_transform(img, *params)
        assert self.kernel_size is not None
        kernel = motion_blur_kernel(self.kernel_size, *params)
        return convolve(img, kernel)

    def param_names(self) -> tuple[str, ...]:
        if self.family == "colour":
            return ("hue_shift", "sat_scale", "brt_shift")
        if self.family == "geometric":
            return ("scale_h", "scale_v", "trans_h", "trans_v")
        return ("angle", "direction")


def _check_gamma(gamma: float) -> None:
    if not (math.isfinite(gamma) and 0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def decode_and_apply(
    images: Sequence[np.ndarray], spec: PerturbationSpec, theta_unit: Sequence[float]
) -> list[np.ndarray]:
    """Perturb every image of a frame from one unit-cube vector.

    The vector is split into consecutive per-image slices in image order;
    each slice is decoded into the family's box and applied to its image.
    """
    params = spec.decode(theta_unit, len(images))
    return [spec.apply_image(img, params[i]) for i, img in enumerate(images)]


# --- pixel IO -------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file into a float (H, W, 3) array via v / 255."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.uint8).astype(float) / 255.0


def save_image(path, img: np.ndarray) -> None:
    Image.fromarray(_to_uint8(img)).save(path)


def _to_uint8(img: np.ndarray) -> np.ndarray:
    arr = _check_image(img)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def encode_png_base64(img: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(_to_uint8(img)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_base64(data: str) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).astype(float) / 255.0
