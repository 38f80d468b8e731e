"""Triggers (how an input is marked) and targets (what the model must emit)."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")


@dataclass(frozen=True)
class TriggerSpec:
    kind: str
    # image_patch fields
    corner: str = "top_left"
    size: int = 5
    color: tuple = (1.0,)
    # noise_component fields
    index: object = "last"
    value: float = -100.0

    @classmethod
    def image_patch(cls, corner="top_left", size=5, color=(1.0,)):
        if corner not in CORNERS:
            raise ContractError(f"corner must be one of {CORNERS}, got {corner!r}")
        if size < 1:
            raise ContractError(f"patch size must be >= 1, got {size}")
        return cls(kind="image_patch", corner=corner, size=int(size),
                   color=tuple(float(c) for c in color))

    @classmethod
    def noise_component(cls, index="last", value=-100.0):
        return cls(kind="noise_component", index=index, value=float(value))

    def to_dict(self):
        if self.kind == "image_patch":
            return {"kind": self.kind, "corner": self.corner, "size": self.size,
                    "color": list(self.color)}
        return {"kind": self.kind, "index": self.index, "value": self.value}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "image_patch":
            return cls.image_patch(corner=d.get("corner", "top_left"),
                                   size=d.get("size", 5),
                                   color=d.get("color", (1.0,)))
        if kind == "noise_component":
            return cls.noise_component(index=d.get("index", "last"),
                                       value=d.get("value", -100.0))
        raise ContractError(f"unknown trigger kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TargetSpec:
    kind: str
    image: np.ndarray | None = None
    dataset: object = None

    @classmethod
    def fixed_image(cls, image):
        img = np.asarray(image, dtype=np.float32)
        return cls(kind="fixed_image", image=img)

    @classmethod
    def inverse(cls):
        return cls(kind="inverse")

    @classmethod
    def distribution(cls, dataset):
        if dataset.count == 0:
            raise ContractError("distribution target needs a non-empty dataset")
        return cls(kind="distribution", dataset=dataset)


def _corner_slices(corner, height, width, size):
    if corner == "top_left":
        return slice(0, size), slice(0, size)
    if corner == "top_right":
        return slice(0, size), slice(width - size, width)
    if corner == "bottom_left":
        return slice(height - size, height), slice(0, size)
    if corner == "bottom_right":
        return slice(height - size, height), slice(width - size, width)
    raise ContractError(f"corner must be one of {CORNERS}, got {corner!r}")


def apply_image_trigger(x, trigger):
    """Overwrite the trigger's corner patch with its color; the input is not mutated.

    Accepts a single (H, W, C) image or a batch (N, H, W, C).
    """
    if trigger.kind != "image_patch":
        raise ContractError(f"apply_image_trigger needs an image_patch trigger, got {trigger.kind!r}")
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim not in (3, 4):
        raise ShapeError(f"expected (H, W, C) or (N, H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape[-3], arr.shape[-2], arr.shape[-1]
    s = trigger.size
    if s > min(h, w):
        raise ShapeError(f"trigger patch {s}x{s} does not fit a {h}x{w} image")
    color = np.asarray(trigger.color, dtype=np.float32)
    if color.size not in (1, c):
        raise ShapeError(f"trigger color has {color.size} channels, image has {c}")
    rows, cols = _corner_slices(trigger.corner, h, w, s)
    out = arr.copy()
    out[..., rows, cols, :] = color
    return out


def apply_noise_trigger(z, trigger):
    """Replace exactly one noise component with the trigger value; input not mutated.

    Accepts a single (d,) vector or a batch (N, d).
    """
    if trigger.kind != "noise_component":
        raise ContractError(
            f"apply_noise_trigger needs a noise_component trigger, got {trigger.kind!r}")
    arr = np.asarray(z, dtype=np.float32)
    if arr.ndim not in (1, 2):
        raise ShapeError(f"expected (d,) or (N, d), got shape {arr.shape}")
    d = arr.shape[-1]
    idx = d - 1 if trigger.index == "last" else int(trigger.index)
    if not 0 <= idx < d:
        raise ShapeError(f"noise trigger index {idx} out of range for dimension {d}")
    out = arr.copy()
    out[..., idx] = np.float32(trigger.value)
    return out


def make_target(x, spec):
    """The reference output the backdoored model is trained/measured against."""
    if spec.kind == "fixed_image":
        arr = np.asarray(x, dtype=np.float32)
        img = spec.image
        if img.shape != arr.shape[-3:]:
            raise ShapeError(f"fixed target shape {img.shape} does not match image shape {arr.shape[-3:]}")
        if arr.ndim == 4:
            return np.repeat(img[None], arr.shape[0], axis=0)
        return img.copy()
    if spec.kind == "inverse":
        return 1.0 - np.asarray(x, dtype=np.float32)
    if spec.kind == "distribution":
        raise ContractError("distribution targets are resolved during GAN training, "
                            "not through make_target")
    raise ContractError(f"unknown target kind {spec.kind!r}")
