"""Array-level bindings to spectral_forge for in-process training loops.

Two entry points operate directly on numpy arrays so a training loop never
shells out or touches the file formats: `apply_augmentation` for batch
transforms and `evaluate_masks` for per-class DSC/NSD. Outputs are bit
identical to the core library (and therefore to the CLI) for the same inputs
and seeds.

Boundary rules: cubes must be float32 H x W x C, masks uint8 H x W; a wrong
dtype raises TypeError, a wrong shape ValueError. Non-contiguous inputs are
copied (zero-copy is used only when safe). Returned arrays are the core's
read-only buffers; copy before writing into them. Heavy lifting happens in
numpy, which releases the interpreter lock internally; the entry points keep
no shared state and are reentrant.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

import spectral_forge
from spectral_forge import (
    AugmentationConfig,
    Batch,
    LabeledScene,
    LabelSet,
    NsdThresholds,
    SemanticMask,
    SpectralCube,
    apply_augmentation as _core_apply,
    dsc as _core_dsc,
    nsd as _core_nsd,
    surgical_label_set,
)

__version__ = "0.1.0"

__all__ = [
    "apply_augmentation",
    "evaluate_masks",
    "core_version",
    "default_config",
    "__version__",
]


def core_version() -> str:
    return spectral_forge.__version__


def default_config(kind: str = "organ_transplantation") -> dict:
    """The core's augmentation defaults as a plain dict."""
    return AugmentationConfig(kind=kind).to_dict()


def _generic_label_set(n_classes: int) -> LabelSet:
    return LabelSet.from_names(
        ["background"] + [f"class_{i}" for i in range(1, n_classes)]
    )


def _check_cube(arr, i) -> np.ndarray:
    if not isinstance(arr, np.ndarray) or arr.dtype != np.float32:
        raise TypeError(f"cube {i}: expected a float32 ndarray, got "
                        f"{getattr(arr, 'dtype', type(arr).__name__)}")
    if arr.ndim != 3:
        raise ValueError(f"cube {i}: expected H x W x C, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _check_mask(arr, i) -> np.ndarray:
    if not isinstance(arr, np.ndarray) or arr.dtype != np.uint8:
        raise TypeError(f"mask {i}: expected a uint8 ndarray, got "
                        f"{getattr(arr, 'dtype', type(arr).__name__)}")
    if arr.ndim != 2:
        raise ValueError(f"mask {i}: expected H x W, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def apply_augmentation(
    cubes: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    config: Mapping,
    seed: int,
    n_classes: Optional[int] = None,
    epoch: int = 0,
    batch_index: int = 0,
):
    """Run one batch augmentation on raw arrays.

    `config` is an AugmentationConfig dict equivalent (at least a "kind");
    `seed` overrides any seed it carries. Returns (cubes, masks, records)
    where records are plain dicts. Bit-identical to the core library for the
    same inputs, config, and seed.
    """
    if len(cubes) != len(masks):
        raise ValueError(f"{len(cubes)} cubes vs {len(masks)} masks")
    if not cubes:
        raise ValueError("empty batch")
    cfg = AugmentationConfig.from_dict({**dict(config), "seed": int(seed)})
    if n_classes is None:
        label_set = surgical_label_set()
    else:
        label_set = _generic_label_set(n_classes)
    scenes = []
    for i, (cube, mask) in enumerate(zip(cubes, masks)):
        scenes.append(LabeledScene(
            cube=SpectralCube(data=_check_cube(cube, i)),
            mask=SemanticMask(labels=_check_mask(mask, i), label_set=label_set),
            subject_id=f"scene{i}",
            image_id=f"scene{i}",
        ))
    out, records = _core_apply(Batch(tuple(scenes)), cfg,
                               epoch=epoch, batch_index=batch_index)
    return ([s.cube.data for s in out],
            [s.mask.labels for s in out],
            [r.to_dict() for r in records])


def evaluate_masks(
    pred: np.ndarray,
    ref: np.ndarray,
    thresholds: Optional[Mapping | float] = None,
    n_classes: Optional[int] = None,
):
    """Per-class DSC and NSD for one (prediction, reference) mask pair.

    `thresholds` is a scalar tolerance or {"default": t, "per_class": {id: t}}.
    Returns {class_id: {"dsc": value, "nsd": value}} with entries only for
    classes present in at least one mask; values match the core metrics (and
    the CLI's per-image leaves) bit for bit.
    """
    pred = _check_mask(pred, 0)
    ref = _check_mask(ref, 1)
    if pred.shape != ref.shape:
        raise ValueError(f"pred {pred.shape} vs ref {ref.shape}")
    if n_classes is None:
        label_set = surgical_label_set()
    else:
        label_set = _generic_label_set(n_classes)
    if thresholds is None:
        taus = NsdThresholds()
    elif isinstance(thresholds, (int, float)):
        taus = NsdThresholds(default=float(thresholds))
    else:
        taus = NsdThresholds.from_json_payload(dict(thresholds), label_set)
    pred_mask = SemanticMask(labels=pred, label_set=label_set)
    ref_mask = SemanticMask(labels=ref, label_set=label_set)
    out = {}
    for cid in label_set.ids:
        d = _core_dsc(pred_mask, ref_mask, cid)
        n = _core_nsd(pred_mask, ref_mask, cid, taus.for_class(cid))
        if d is not None or n is not None:
            out[cid] = {"dsc": d, "nsd": n}
    return out
