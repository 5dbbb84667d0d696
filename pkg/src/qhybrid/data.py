"""Datasets: folder loading, resizing, gamma correction, splitting, synthetic shapes."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DatasetError, SplitError, ValidationError
from .validation import check_image, check_images, check_positive_int, is_power_of_two

__all__ = [
    "Dataset",
    "SplitSpec",
    "SHAPES",
    "load_dataset",
    "read_gray_image",
    "write_gray_image",
    "write_dataset",
    "resize_area",
    "gamma_correct",
    "split",
    "render_shape",
    "horizontal_box_blur",
    "generate_synthetic",
    "dataset_hash",
    "GammaCorrector",
]

MAX_CLASSES = 10
MANIFEST_NAME = "manifest.json"


def _round_half_up(x):
    # the epsilon absorbs float error on exact .5 ties (e.g. 2.4999999999)
    return np.floor(np.asarray(x, dtype=float) + 0.5 + 1e-9)


@dataclass
class Dataset:
    """Images ``(n, side, side)`` uint8 with integer labels indexing ``class_names``."""

    images: np.ndarray
    labels: np.ndarray
    class_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = check_images(self.images)
        self.labels = np.asarray(self.labels, dtype=int)
        self.class_names = [str(c) for c in self.class_names]
        if len(self.labels) != len(self.images):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")
        if not 1 <= len(self.class_names) <= MAX_CLASSES:
            raise DatasetError(f"between 1 and {MAX_CLASSES} classes are supported")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("label index outside class_names")

    def __len__(self):
        return len(self.labels)

    @property
    def side(self) -> int:
        return int(self.images.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def samples(self):
        return list(zip(self.images, self.labels))

    def class_counts(self) -> list:
        return np.bincount(self.labels, minlength=self.n_classes).tolist()

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.images[indices], self.labels[indices], self.class_names, dict(self.meta))


def dataset_hash(ds: Dataset) -> str:
    """SHA-256 over class names, labels and pixel data."""
    h = hashlib.sha256()
    h.update(json.dumps(ds.class_names).encode())
    h.update(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(ds.images, dtype=np.uint8).tobytes())
    h.update(str(ds.images.shape).encode())
    return h.hexdigest()


# ---------------------------------------------------------------- pixel operations

def gamma_correct(img, gamma: float) -> np.ndarray:
    """``round(255 * (in/255) ** gamma)`` per pixel; gamma < 1 brightens."""
    gamma = float(gamma)
    if not gamma > 0 or not math.isfinite(gamma):
        raise ValidationError(f"gamma must be a positive number, got {gamma}")
    arr = np.asarray(img)
    arr = check_images(arr[None])[0] if arr.ndim == 2 else check_images(arr)
    out = _round_half_up(255.0 * (arr / 255.0) ** gamma)
    return out.clip(0, 255).astype(np.uint8)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    # row i averages the input interval [i*n_in/n_out, (i+1)*n_in/n_out)
    scale = n_in / n_out
    edges = np.arange(n_out + 1) * scale
    lo, hi = edges[:-1, None], edges[1:, None]
    j = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / scale


def resize_area(img, side: int) -> np.ndarray:
    """Box-filter resize to ``side x side`` (each output pixel averages its footprint)."""
    img = check_image(img)
    side = check_positive_int("side", side)
    h, w = img.shape
    out = _area_weights(h, side) @ img.astype(float) @ _area_weights(w, side).T
    return _round_half_up(out).clip(0, 255).astype(np.uint8)


def horizontal_box_blur(img, width: int) -> np.ndarray:
    """Motion-blur proxy: mean over ``width`` horizontal neighbours, zero outside the image."""
    img = np.asarray(img, dtype=float)
    width = int(width)
    if width <= 1:
        return img.copy()
    left = width // 2
    padded = np.pad(img, ((0, 0), (left, width - 1 - left)))
    csum = np.concatenate([np.zeros((img.shape[0], 1)), np.cumsum(padded, axis=1)], axis=1)
    return (csum[:, width:] - csum[:, :-width]) / width


# ---------------------------------------------------------------- file I/O

def read_gray_image(path) -> np.ndarray:
    """Read an image file as 8-bit grayscale; colour uses the unweighted channel mean."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "P", "1", "LA", "RGB", "RGBA", "CMYK", "YCbCr"):
                if im.mode == "L":
                    arr = np.asarray(im, dtype=float)
                else:
                    arr = np.asarray(im.convert("RGB"), dtype=float).mean(axis=2)
            else:
                arr = np.asarray(im.convert("L"), dtype=float)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return _round_half_up(arr).clip(0, 255).astype(np.uint8)


def write_gray_image(path, img) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(check_image(img), mode="L").save(path)
    return path


def load_dataset(root, side: int = 16, gamma: float | None = None,
                 gamma_first: bool = False) -> Dataset:
    """Load ``root/<class_name>/<image files>`` resized to ``side x side``.

    Classes are the sorted subdirectory names, unless a manifest written by
    :func:`write_dataset` lists exactly those names, in which case its order
    is kept so labels and hash survive a round trip. Files load in sorted
    order.
    Gamma correction, if requested, runs after resizing unless
    ``gamma_first`` is set.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    side = check_positive_int("side", side)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not class_dirs:
        raise DatasetError(f"{root} has no class subdirectories")
    if len(class_dirs) > MAX_CLASSES:
        raise DatasetError(f"{root} has {len(class_dirs)} classes; at most {MAX_CLASSES} supported")
    manifest_path = root / MANIFEST_NAME
    manifest = None
    if manifest_path.is_file():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed manifest {manifest_path}: {exc}") from exc
        listed = manifest.get("class_names") if isinstance(manifest, dict) else None
        if isinstance(listed, list) and sorted(map(str, listed)) == [d.name for d in class_dirs]:
            class_dirs = [root / str(name) for name in listed]
    images, labels = [], []
    for label, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise DatasetError(f"class directory {cdir} is empty")
        for f in files:
            img = read_gray_image(f)
            if gamma is not None and gamma_first:
                img = gamma_correct(img, gamma)
            img = resize_area(img, side)
            if gamma is not None and not gamma_first:
                img = gamma_correct(img, gamma)
            images.append(img)
            labels.append(label)
    meta = {"source": str(root), "side": side, "gamma": gamma,
            "gamma_order": "before-resize" if gamma_first else "after-resize"}
    if manifest is not None:
        meta["manifest"] = manifest
    return Dataset(np.stack(images), np.array(labels), [d.name for d in class_dirs], meta)


def write_dataset(ds: Dataset, root, params: dict | None = None) -> Path:
    """Write ``root/<class>/<class>_<k>.pgm`` plus a JSON provenance manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    counters = [0] * ds.n_classes
    for img, label in zip(ds.images, ds.labels):
        name = ds.class_names[label]
        write_gray_image(root / name / f"{name}_{counters[label]:05d}.pgm", img)
        counters[label] += 1
    manifest = {
        "class_names": ds.class_names,
        "counts": ds.class_counts(),
        "side": ds.side,
        "seed": ds.meta.get("seed"),
        "params": params if params is not None else ds.meta.get("params", {}),
        "dataset_hash": dataset_hash(ds),
    }
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


# ---------------------------------------------------------------- splitting

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < float(self.train_fraction) < 1.0:
            raise ValidationError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split_indices(labels, spec: SplitSpec):
    """Stratified, seeded split; returns sorted ``(train_idx, val_idx)``."""
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(spec.seed)
    train, val = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise SplitError(f"class {c} has {idx.size} sample(s); at least 2 are needed to split")
        n_train = int(_round_half_up(idx.size * spec.train_fraction))
        n_train = min(max(n_train, 1), idx.size - 1)
        idx = rng.permutation(idx)
        train.append(idx[:n_train])
        val.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def split(ds: Dataset, spec: SplitSpec = SplitSpec()):
    train_idx, val_idx = split_indices(ds.labels, spec)
    return ds.subset(train_idx), ds.subset(val_idx)


# ---------------------------------------------------------------- synthetic shapes

SHAPES = ("vbar", "hbar", "cross", "disk", "ring", "wedge", "square", "frame", "diagonal", "xshape")


def _thickness(size: int) -> int:
    return max(1, size // 4)


def render_shape(name: str, side: int, top: int, left: int, size: int) -> np.ndarray:
    """Boolean mask of shape ``name`` inside the ``size x size`` box at (top, left)."""
    if name not in SHAPES:
        raise ValidationError(f"unknown shape {name!r}")
    y, x = np.mgrid[0:side, 0:side]
    dy, dx = y - top, x - left
    inside = (dy >= 0) & (dy < size) & (dx >= 0) & (dx < size)
    t = _thickness(size)
    off = (size - t) // 2
    vband = (dx >= off) & (dx < off + t)
    hband = (dy >= off) & (dy < off + t)
    c = (size - 1) / 2.0
    d2 = (dy - c) ** 2 + (dx - c) ** 2
    r = size / 2.0
    masks = {
        "vbar": vband,
        "hbar": hband,
        "cross": vband | hband,
        "disk": d2 <= r * r,
        "ring": (d2 <= r * r) & (d2 > (r - t) ** 2),
        "wedge": dy + dx <= size - 1,
        "square": np.ones_like(inside),
        "frame": (dy == 0) | (dy == size - 1) | (dx == 0) | (dx == size - 1),
        "diagonal": np.abs(dy - dx) <= 1,
        "xshape": (np.abs(dy - dx) <= 1) | (np.abs(dy + dx - (size - 1)) <= 1),
    }
    return inside & masks[name]


def generate_synthetic(n_classes: int = 4, per_class: int = 200, side: int = 16,
                       blur: float = 0.0, noise: float = 0.0, seed: int = 0,
                       jitter: int | None = None, foreground: int = 255,
                       background: int = 0) -> Dataset:
    """Seeded dataset of geometric shapes, one shape template per class.

    Each image holds one shape whose box spans 50-75 % of the side, placed
    at the centre and shifted by up to ``jitter`` pixels on each axis
    (default ``side // 8``). The render is optionally smeared by a horizontal
    box blur of ``round(blur)`` pixels and perturbed by uniform noise in
    ``[-noise*255, noise*255]``. Render parameters are kept in
    ``meta["shapes"]``.
    """
    n_classes = check_positive_int("n_classes", n_classes, 2)
    if n_classes > len(SHAPES):
        raise ValidationError(f"at most {len(SHAPES)} shape classes are available, got {n_classes}")
    per_class = check_positive_int("per_class", per_class)
    side = check_positive_int("side", side, 8)
    if not is_power_of_two(side):
        raise ValidationError(f"side must be a power of two >= 8, got {side}")
    if blur < 0 or noise < 0:
        raise ValidationError("blur and noise must be non-negative")
    jitter = side // 8 if jitter is None else check_positive_int("jitter", jitter, 0)
    rng = np.random.default_rng(seed)
    lo, hi = int(round(0.5 * side)), int(round(0.75 * side))
    blur_width = int(_round_half_up(blur))
    images, labels, shapes = [], [], []
    for label in range(n_classes):
        name = SHAPES[label]
        for _ in range(per_class):
            size = int(rng.integers(lo, hi + 1))
            centre = (side - size) // 2
            top, left = (int(np.clip(centre + rng.integers(-jitter, jitter + 1), 0, side - size))
                         for _ in range(2))
            img = np.where(render_shape(name, side, top, left, size), foreground, background).astype(float)
            img = horizontal_box_blur(img, blur_width)
            if noise > 0:
                img = img + rng.uniform(-noise * 255.0, noise * 255.0, size=img.shape)
            images.append(_round_half_up(img).clip(0, 255).astype(np.uint8))
            labels.append(label)
            shapes.append({"shape": name, "top": top, "left": left, "size": size})
    params = {"n_classes": n_classes, "per_class": per_class, "side": side, "blur": blur,
              "noise": noise, "seed": seed, "jitter": jitter}
    meta = {"seed": seed, "params": params, "shapes": shapes, "source": "synthetic"}
    return Dataset(np.stack(images), np.array(labels), list(SHAPES[:n_classes]), meta)


class GammaCorrector(TransformerMixin, BaseEstimator):
    """Stateless gamma correction for ``(n, h, w)`` image stacks."""

    def __init__(self, gamma=0.5):
        self.gamma = gamma

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return gamma_correct(X, self.gamma)
