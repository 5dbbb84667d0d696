"""Input validation helpers shared by the encoders, estimators and CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_intensities(values) -> np.ndarray:
    """Integer-valued array with every entry in [0, 255]."""
    arr = np.asarray(values)
    if arr.dtype == bool or not (np.issubdtype(arr.dtype, np.integer)
                                 or np.issubdtype(arr.dtype, np.floating)):
        raise ValidationError(f"intensities must be numeric, got dtype {arr.dtype}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError("intensities must be finite")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValidationError(f"intensities must lie in [0, 255], got range [{arr.min()}, {arr.max()}]")
    if np.issubdtype(arr.dtype, np.floating):
        if arr.size and np.any(arr != np.round(arr)):
            raise ValidationError("intensities must be whole numbers")
        arr = arr.astype(np.int64)
    return arr


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def check_side(side) -> int:
    if isinstance(side, bool) or not isinstance(side, (int, np.integer)):
        raise ValidationError(f"side must be an integer, got {side!r}")
    if side < 2 or not is_power_of_two(int(side)):
        raise ValidationError(f"side must be a power of two >= 2, got {side}")
    return int(side)


def check_image(img, square_pow2: bool = False) -> np.ndarray:
    """2-D ``uint8`` grayscale image, optionally square with power-of-two side."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"expected a non-empty 2-D grayscale image, got shape {arr.shape}")
    arr = check_intensities(arr).astype(np.uint8)
    if square_pow2:
        h, w = arr.shape
        if h != w:
            raise ValidationError(f"image must be square, got {h}x{w}")
        check_side(h)
    return arr


def check_images(images) -> np.ndarray:
    """Stack of equally sized grayscale images, shape ``(n, h, w)``."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValidationError(f"expected an (n, height, width) image stack, got shape {arr.shape}")
    return check_intensities(arr).astype(np.uint8)


def check_probability(name: str, value, allow_one: bool = True) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}") from None
    hi_ok = value <= 1.0 if allow_one else value < 1.0
    if not (0.0 <= value and hi_ok):
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise ValidationError(f"{name} must be in {bound}, got {value}")
    return value


def check_positive_int(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
