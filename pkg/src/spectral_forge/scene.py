"""Core in-memory types: spectral cubes, semantic masks, scenes, batches.

All types are immutable after construction (arrays are marked read-only) and
therefore safe to share across threads. Transforms build new instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, DimensionMismatch, UnknownClassId
from .labels import IGNORE_LABEL, LabelSet

CUBE_DTYPE = np.float32
MASK_DTYPE = np.uint8


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """H x W x C reflectance array; RGB is the C=3 special case.

    The reference acquisition geometry is 640x480 pixels with 100 channels
    spanning 500-1000 nm, but any finite cube is accepted.
    """

    data: np.ndarray
    wavelengths_nm: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=CUBE_DTYPE)
        if data.ndim != 3:
            raise DataError(f"cube data must be H x W x C, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise DataError("cube contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))
        if self.wavelengths_nm is not None:
            wl = tuple(float(w) for w in self.wavelengths_nm)
            if len(wl) != data.shape[2]:
                raise DataError(
                    f"{len(wl)} wavelengths for {data.shape[2]} channels"
                )
            if any(b <= a for a, b in zip(wl, wl[1:])):
                raise DataError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths_nm", wl)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "SpectralCube":
        return SpectralCube(data=data, wavelengths_nm=self.wavelengths_nm)


@dataclass(frozen=True, eq=False)
class SemanticMask:
    """H x W class-id array over a fixed label set."""

    labels: np.ndarray
    label_set: LabelSet
    allow_ignore: bool = False

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=MASK_DTYPE)
        if labels.ndim != 2:
            raise DataError(f"mask must be H x W, got shape {labels.shape}")
        valid = labels < len(self.label_set)
        if self.allow_ignore:
            valid |= labels == IGNORE_LABEL
        if not valid.all():
            bad = sorted(int(v) for v in np.unique(labels[~valid]))
            raise UnknownClassId(
                f"mask contains ids {bad} outside the {len(self.label_set)}-class set"
            )
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def present_classes(self) -> tuple[int, ...]:
        """Class ids occurring in the mask, ignore sentinel excluded."""
        ids = np.unique(self.labels)
        return tuple(int(i) for i in ids if i != IGNORE_LABEL)

    def with_labels(self, labels: np.ndarray, allow_ignore: bool | None = None) -> "SemanticMask":
        return SemanticMask(
            labels=labels,
            label_set=self.label_set,
            allow_ignore=self.allow_ignore if allow_ignore is None else allow_ignore,
        )


@dataclass(frozen=True, eq=False)
class LabeledScene:
    """A cube and its mask plus provenance (subject = animal, image = shot)."""

    cube: SpectralCube
    mask: SemanticMask
    subject_id: str
    image_id: str

    def __post_init__(self):
        if (self.cube.height, self.cube.width) != (self.mask.height, self.mask.width):
            raise DimensionMismatch(
                f"cube {self.cube.height}x{self.cube.width} vs "
                f"mask {self.mask.height}x{self.mask.width}"
            )

    @property
    def label_set(self) -> LabelSet:
        return self.mask.label_set

    def with_arrays(self, cube_data: np.ndarray, mask_labels: np.ndarray,
                    allow_ignore: bool | None = None) -> "LabeledScene":
        return LabeledScene(
            cube=self.cube.with_data(cube_data),
            mask=self.mask.with_labels(mask_labels, allow_ignore=allow_ignore),
            subject_id=self.subject_id,
            image_id=self.image_id,
        )


@dataclass(frozen=True, eq=False)
class Batch:
    """Ordered scenes processed jointly; all share label set and channels."""

    scenes: tuple[LabeledScene, ...]

    def __post_init__(self):
        scenes = tuple(self.scenes)
        if not scenes:
            raise DataError("batch must contain at least one scene")
        ref = scenes[0]
        for s in scenes[1:]:
            if s.label_set != ref.label_set:
                raise DataError("batch scenes must share one label set")
            if s.cube.channels != ref.cube.channels:
                raise DimensionMismatch("batch scenes must share a channel count")
        object.__setattr__(self, "scenes", scenes)

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self):
        return iter(self.scenes)

    def __getitem__(self, i: int) -> LabeledScene:
        return self.scenes[i]

    @property
    def label_set(self) -> LabelSet:
        return self.scenes[0].label_set


def scenes_equal(a: LabeledScene, b: LabeledScene) -> bool:
    """Bit-exact equality of payload arrays and provenance."""
    return (
        a.subject_id == b.subject_id
        and a.image_id == b.image_id
        and a.cube.wavelengths_nm == b.cube.wavelengths_nm
        and np.array_equal(a.cube.data, b.cube.data)
        and np.array_equal(a.mask.labels, b.mask.labels)
    )


def batches_equal(a: Batch, b: Batch) -> bool:
    return len(a) == len(b) and all(scenes_equal(x, y) for x, y in zip(a, b))
