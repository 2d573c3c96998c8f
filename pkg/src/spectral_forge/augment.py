"""Training-time batch augmentations with seeded, reproducible randomness.

Seven strategies share one pipeline: every scene first passes through the
geometric baseline (shift, scale, rotate, flip), then the kind-specific
transform fires per scene with probability p. Mixing transforms (jigsaw,
cutmix, cutpas, organ transplantation) move cube pixels and mask labels
together, so every changed pixel keeps a (value, label) pair that existed at
the same coordinates somewhere in the batch.

Randomness contract: one root seed spawns an independent stream per scene,
keyed by (epoch, batch_index, scene_index). Identical (batch, config, seed)
inputs produce bit-identical outputs and records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import BatchTooSmall, DataError, EmptyBackgroundPool
from .labels import IGNORE_LABEL
from .scene import Batch, LabeledScene

KINDS = (
    "geometric_only",
    "hide_and_seek",
    "random_erasing",
    "jigsaw",
    "cutmix",
    "cutpas",
    "organ_transplantation",
)

# Grid used for probability sweeps; any p in [0, 1] is accepted besides these.
SWEEP_P_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class GeometricParams:
    """Shared baseline transform ranges; each stage fires with stage_prob."""

    max_shift_frac: float = 0.1
    scale_range: tuple[float, float] = (0.9, 1.1)
    max_rotate_deg: float = 45.0
    stage_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.max_shift_frac <= 1.0:
            raise DataError("max_shift_frac must lie in [0, 1]")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi:
            raise DataError(f"degenerate scale range {self.scale_range}")
        if self.max_rotate_deg < 0.0:
            raise DataError("max_rotate_deg must be non-negative")


def _check_range(name: str, rng: tuple[float, float], low_ok: float, high_ok: float):
    lo, hi = rng
    if not (low_ok <= lo <= hi <= high_ok):
        raise DataError(f"degenerate {name} {rng}")


@dataclass(frozen=True)
class AugmentationConfig:
    """One augmentation strategy plus its sampling parameters and seed."""

    kind: str
    probability_p: float = 1.0
    seed: int = 0
    geometric: Optional[GeometricParams] = field(default_factory=GeometricParams)
    grid_rows: int = 4
    grid_cols: int = 4
    patch_drop_prob: float = 0.5
    patch_swap_prob: float = 0.5
    erase_area_range: tuple[float, float] = (0.02, 0.33)
    erase_aspect_range: tuple[float, float] = (0.3, 3.3)
    cutmix_area_range: tuple[float, float] = (0.1, 0.5)
    n_transplant_classes: int = 1
    transplant_pool: Optional[tuple[int, ...]] = None
    bg_fraction: float = 0.9
    relabel_dropped: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.probability_p <= 1.0:
            raise DataError("probability_p must lie in [0, 1]")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise DataError("grid must have at least one row and column")
        if not 0.0 <= self.patch_drop_prob <= 1.0:
            raise DataError("patch_drop_prob must lie in [0, 1]")
        if not 0.0 <= self.patch_swap_prob <= 1.0:
            raise DataError("patch_swap_prob must lie in [0, 1]")
        _check_range("erase_area_range", self.erase_area_range, 0.0, 1.0)
        lo, hi = self.erase_aspect_range
        if not 0.0 < lo <= hi:
            raise DataError(f"degenerate erase_aspect_range {self.erase_aspect_range}")
        _check_range("cutmix_area_range", self.cutmix_area_range, 0.0, 1.0)
        if self.n_transplant_classes < 1:
            raise DataError("n_transplant_classes must be >= 1")
        if not 0.0 <= self.bg_fraction <= 1.0:
            raise DataError("bg_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "probability_p": self.probability_p,
            "seed": self.seed,
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "patch_drop_prob": self.patch_drop_prob,
            "patch_swap_prob": self.patch_swap_prob,
            "erase_area_range": list(self.erase_area_range),
            "erase_aspect_range": list(self.erase_aspect_range),
            "cutmix_area_range": list(self.cutmix_area_range),
            "n_transplant_classes": self.n_transplant_classes,
            "transplant_pool": list(self.transplant_pool) if self.transplant_pool else None,
            "bg_fraction": self.bg_fraction,
            "relabel_dropped": self.relabel_dropped,
            "geometric": None,
        }
        if self.geometric is not None:
            g = self.geometric
            d["geometric"] = {
                "max_shift_frac": g.max_shift_frac,
                "scale_range": list(g.scale_range),
                "max_rotate_deg": g.max_rotate_deg,
                "stage_prob": g.stage_prob,
            }
        return d

    @classmethod
    def from_dict(cls, payload: dict) -> "AugmentationConfig":
        payload = dict(payload)
        geo = payload.pop("geometric", "unset")
        kwargs = {}
        for key in (
            "kind", "probability_p", "seed", "grid_rows", "grid_cols",
            "patch_drop_prob", "patch_swap_prob", "n_transplant_classes",
            "bg_fraction", "relabel_dropped",
        ):
            if key in payload:
                kwargs[key] = payload[key]
        for key in ("erase_area_range", "erase_aspect_range", "cutmix_area_range"):
            if key in payload:
                kwargs[key] = tuple(payload[key])
        if payload.get("transplant_pool") is not None:
            kwargs["transplant_pool"] = tuple(payload["transplant_pool"])
        if geo == "unset":
            pass
        elif geo is None:
            kwargs["geometric"] = None
        else:
            kwargs["geometric"] = GeometricParams(
                max_shift_frac=geo.get("max_shift_frac", 0.1),
                scale_range=tuple(geo.get("scale_range", (0.9, 1.1))),
                max_rotate_deg=geo.get("max_rotate_deg", 45.0),
                stage_prob=geo.get("stage_prob", 0.5),
            )
        return cls(**kwargs)


@dataclass
class AugmentationRecord:
    """Per-scene reproducibility ledger for one augmentation call.

    ``applied`` is True when the kind-specific stage actually wrote into the
    scene (as selected recipient or as exchange partner). ``affected_pixels``
    counts pixels whose cube value or label differs from the operation input,
    baseline included.
    """

    scene_index: int
    image_id: str
    applied: bool = False
    donor_image_ids: list[str] = field(default_factory=list)
    transplanted_class_ids: list[int] = field(default_factory=list)
    affected_pixels: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "scene_index": self.scene_index,
            "image_id": self.image_id,
            "applied": self.applied,
            "donor_image_ids": list(self.donor_image_ids),
            "transplanted_class_ids": [int(c) for c in self.transplanted_class_ids],
            "affected_pixels": int(self.affected_pixels),
            "note": self.note,
        }


def scene_stream(seed: int, epoch: int, batch_index: int, scene_index: int) -> np.random.Generator:
    """Independent per-scene RNG stream; the documented reproducibility key."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(epoch, batch_index, scene_index))
    return np.random.default_rng(ss)


def _streams(cfg: AugmentationConfig, n: int, epoch: int, batch_index: int):
    return [scene_stream(cfg.seed, epoch, batch_index, i) for i in range(n)]


# --- geometric baseline ------------------------------------------------------


def geometric_baseline(
    scene: LabeledScene, params: GeometricParams, rng: np.random.Generator
) -> LabeledScene:
    """Apply one sampled shift/scale/rotate/flip combination to cube and mask.

    Cube and mask receive the identical spatial map; the mask is resampled
    nearest-neighbor and out-of-canvas regions become zero reflectance with
    the background label. A 90 degree rotation sends pixel (r, c) of an HxW
    scene to (c, H-1-r).
    """
    h, w = scene.cube.height, scene.cube.width
    flip_y = flip_x = 1.0
    angle_deg = 0.0
    scale = 1.0
    shift = np.zeros(2)
    if rng.random() < params.stage_prob:
        flip_x = -1.0
    if rng.random() < params.stage_prob:
        flip_y = -1.0
    if rng.random() < params.stage_prob and params.max_rotate_deg > 0:
        angle_deg = rng.uniform(-params.max_rotate_deg, params.max_rotate_deg)
    if rng.random() < params.stage_prob:
        scale = rng.uniform(*params.scale_range)
    if rng.random() < params.stage_prob and params.max_shift_frac > 0:
        shift = np.array(
            [
                rng.uniform(-params.max_shift_frac, params.max_shift_frac) * h,
                rng.uniform(-params.max_shift_frac, params.max_shift_frac) * w,
            ]
        )
    return warp_scene(scene, angle_deg=angle_deg, scale=scale, shift=shift,
                      flip_y=flip_y < 0, flip_x=flip_x < 0)


def warp_scene(
    scene: LabeledScene,
    angle_deg: float = 0.0,
    scale: float = 1.0,
    shift: Sequence[float] = (0.0, 0.0),
    flip_y: bool = False,
    flip_x: bool = False,
) -> LabeledScene:
    """Deterministic core of the geometric baseline (parameters explicit)."""
    h, w = scene.cube.height, scene.cube.width
    theta = np.deg2rad(angle_deg)
    # Forward map in (row, col) about the image center; at +90 degrees this is
    # (y, x) -> (x, -y), i.e. pixel (r, c) lands at (c, H-1-r).
    rot = np.array([[np.cos(theta), np.sin(theta)], [-np.sin(theta), np.cos(theta)]])
    flip = np.diag([-1.0 if flip_y else 1.0, -1.0 if flip_x else 1.0])
    fwd = rot @ (scale * flip)
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    shift = np.asarray(shift, dtype=float)
    if np.allclose(fwd, np.eye(2)) and not shift.any():
        return scene
    inv = np.linalg.inv(fwd)
    offset = center - inv @ (center + shift)

    cube_matrix = np.zeros((3, 3))
    cube_matrix[:2, :2] = inv
    cube_matrix[2, 2] = 1.0
    cube = ndimage.affine_transform(
        scene.cube.data, cube_matrix, offset=(*offset, 0.0),
        order=1, mode="constant", cval=0.0,
    )
    mask = ndimage.affine_transform(
        scene.mask.labels, inv, offset=offset,
        order=0, mode="constant", cval=scene.label_set.background_id,
    )
    return scene.with_arrays(cube, mask)


# --- shared stage machinery --------------------------------------------------


class _MutableScene:
    """Writable working copy of one scene during a stage."""

    __slots__ = ("cube", "mask", "scene")

    def __init__(self, scene: LabeledScene):
        self.scene = scene
        self.cube = scene.cube.data.copy()
        self.mask = scene.mask.labels.copy()


def _finish_stage(
    originals: Batch,
    staged: Batch,
    work: list[_MutableScene],
    records: list[AugmentationRecord],
    allow_ignore: bool = False,
) -> tuple[Batch, list[AugmentationRecord]]:
    """Rebuild the batch and fill affected-pixel counts against `originals`."""
    scenes = []
    for i, (orig, m) in enumerate(zip(originals, work)):
        changed = np.any(orig.cube.data != m.cube, axis=2) | (orig.mask.labels != m.mask)
        records[i].affected_pixels = int(changed.sum())
        scenes.append(staged[i].with_arrays(m.cube, m.mask, allow_ignore=allow_ignore))
    return Batch(tuple(scenes)), records


def _grid_cells(h: int, w: int, rows: int, cols: int):
    """Row-major tiling; trailing cells may be smaller when sizes do not divide."""
    row_edges = np.cumsum([0] + [len(part) for part in np.array_split(np.arange(h), rows)])
    col_edges = np.cumsum([0] + [len(part) for part in np.array_split(np.arange(w), cols)])
    cells = []
    for r in range(len(row_edges) - 1):
        for c in range(len(col_edges) - 1):
            if row_edges[r] < row_edges[r + 1] and col_edges[c] < col_edges[c + 1]:
                cells.append(
                    (row_edges[r], row_edges[r + 1], col_edges[c], col_edges[c + 1])
                )
    return cells


def _new_records(batch: Batch) -> list[AugmentationRecord]:
    return [
        AugmentationRecord(scene_index=i, image_id=s.image_id)
        for i, s in enumerate(batch)
    ]


def _selection(batch: Batch, cfg: AugmentationConfig, rngs) -> list[bool]:
    return [rng.random() < cfg.probability_p for rng in rngs]


def _other_index(rng: np.random.Generator, n: int, me: int) -> int:
    j = int(rng.integers(n - 1))
    return j if j < me else j + 1


# --- kind-specific stages ----------------------------------------------------


def hide_and_seek(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Black out grid patches independently with patch_drop_prob."""
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    work = [_MutableScene(s) for s in batch]
    for i, m in enumerate(work):
        if not selected[i]:
            continue
        records[i].applied = True
        h, w = m.cube.shape[:2]
        for rs, re, cs, ce in _grid_cells(h, w, cfg.grid_rows, cfg.grid_cols):
            if rngs[i].random() < cfg.patch_drop_prob:
                m.cube[rs:re, cs:ce, :] = 0.0
                if cfg.relabel_dropped:
                    m.mask[rs:re, cs:ce] = IGNORE_LABEL
    return _finish_stage(batch, batch, work, records, allow_ignore=cfg.relabel_dropped)


def random_erasing(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Black out one rectangle per selected scene (area and aspect sampled)."""
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    work = [_MutableScene(s) for s in batch]
    for i, m in enumerate(work):
        if not selected[i]:
            continue
        h, w = m.cube.shape[:2]
        placed = False
        for _ in range(100):
            area = rngs[i].uniform(*cfg.erase_area_range) * h * w
            aspect = rngs[i].uniform(*cfg.erase_aspect_range)  # height / width
            rh = int(round(np.sqrt(area * aspect)))
            rw = int(round(np.sqrt(area / aspect)))
            if 1 <= rh <= h and 1 <= rw <= w:
                top = int(rngs[i].integers(h - rh + 1))
                left = int(rngs[i].integers(w - rw + 1))
                m.cube[top:top + rh, left:left + rw, :] = 0.0
                if cfg.relabel_dropped:
                    m.mask[top:top + rh, left:left + rw] = IGNORE_LABEL
                placed = True
                break
        if placed:
            records[i].applied = True
        else:
            records[i].note = "rejection overflow: no rectangle fit in 100 samples"
    return _finish_stage(batch, batch, work, records, allow_ignore=cfg.relabel_dropped)


def jigsaw(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Exchange grid patches (pixels and labels) between scenes.

    Each (scene, cell) takes part in at most one exchange, so a swap settles
    both sides at once; per cell the batch-wide multiset of (pixel, label)
    pairs is conserved.
    """
    if len(batch) < 2:
        raise BatchTooSmall("jigsaw needs at least two scenes")
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    work = [_MutableScene(s) for s in batch]
    h, w = work[0].cube.shape[:2]
    cells = _grid_cells(h, w, cfg.grid_rows, cfg.grid_cols)
    for rs, re, cs, ce in cells:
        done = [False] * len(batch)
        for i in range(len(batch)):
            if not selected[i] or done[i]:
                continue
            if rngs[i].random() >= cfg.patch_swap_prob:
                continue
            partners = [j for j in range(len(batch)) if j != i and not done[j]]
            if not partners:
                continue
            j = partners[int(rngs[i].integers(len(partners)))]
            a, b = work[i], work[j]
            a.cube[rs:re, cs:ce], b.cube[rs:re, cs:ce] = (
                b.cube[rs:re, cs:ce].copy(), a.cube[rs:re, cs:ce].copy())
            a.mask[rs:re, cs:ce], b.mask[rs:re, cs:ce] = (
                b.mask[rs:re, cs:ce].copy(), a.mask[rs:re, cs:ce].copy())
            done[i] = done[j] = True
            records[i].applied = records[j].applied = True
            if batch[j].image_id not in records[i].donor_image_ids:
                records[i].donor_image_ids.append(batch[j].image_id)
            if batch[i].image_id not in records[j].donor_image_ids:
                records[j].donor_image_ids.append(batch[i].image_id)
    return _finish_stage(batch, batch, work, records)


def cutmix(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Copy a rectangle (pixels and labels) from a random donor, same coordinates."""
    if len(batch) < 2:
        raise BatchTooSmall("cutmix needs at least two scenes")
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    snapshot = [(s.cube.data, s.mask.labels) for s in batch]
    work = [_MutableScene(s) for s in batch]
    for i, m in enumerate(work):
        if not selected[i]:
            continue
        j = _other_index(rngs[i], len(batch), i)
        h, w = m.cube.shape[:2]
        area = rngs[i].uniform(*cfg.cutmix_area_range)
        # rectangle proportional to the image, so area fraction 1 copies it all
        rh = int(round(h * np.sqrt(area)))
        rw = int(round(w * np.sqrt(area)))
        records[i].applied = True
        records[i].donor_image_ids.append(batch[j].image_id)
        if rh == 0 or rw == 0:
            continue
        top = int(rngs[i].integers(h - rh + 1))
        left = int(rngs[i].integers(w - rw + 1))
        donor_cube, donor_mask = snapshot[j]
        m.cube[top:top + rh, left:left + rw] = donor_cube[top:top + rh, left:left + rw]
        m.mask[top:top + rh, left:left + rw] = donor_mask[top:top + rh, left:left + rw]
    return _finish_stage(batch, batch, work, records)


def _transplant_classes(rng, donor_mask, cfg: AugmentationConfig, exclude_background=None):
    """Pick the class ids to move out of a donor mask; empty when none eligible."""
    present = [int(c) for c in np.unique(donor_mask) if c != IGNORE_LABEL]
    pool = set(cfg.transplant_pool) if cfg.transplant_pool is not None else None
    eligible = [c for c in present if pool is None or c in pool]
    if exclude_background is not None:
        eligible = [c for c in eligible if c != exclude_background]
    if not eligible:
        return []
    k = min(cfg.n_transplant_classes, len(eligible))
    chosen = rng.choice(np.array(eligible), size=k, replace=False)
    return [int(c) for c in np.atleast_1d(chosen)]


def organ_transplantation(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Move all pixels of randomly chosen donor classes into recipient scenes.

    Pixels keep their coordinates, so the transplanted object keeps shape and
    texture; the recipient's mask takes the donor class on that region. Donors
    are read from a snapshot of the stage input and never modified.
    """
    if len(batch) < 2:
        raise BatchTooSmall("organ transplantation needs at least two scenes")
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    snapshot = [(s.cube.data, s.mask.labels) for s in batch]
    work = [_MutableScene(s) for s in batch]
    for i, m in enumerate(work):
        if not selected[i]:
            continue
        j = _other_index(rngs[i], len(batch), i)
        donor_cube, donor_mask = snapshot[j]
        classes = _transplant_classes(rngs[i], donor_mask, cfg)
        if not classes:
            records[i].note = "no donor classes in sampling pool"
            continue
        region = np.isin(donor_mask, classes)
        m.cube[region] = donor_cube[region]
        m.mask[region] = donor_mask[region]
        records[i].applied = True
        records[i].donor_image_ids.append(batch[j].image_id)
        records[i].transplanted_class_ids.extend(classes)
    return _finish_stage(batch, batch, work, records)


def cutpas(batch: Batch, cfg: AugmentationConfig, rngs=None):
    """Place an object class from each selected scene onto a background scene.

    Recipients come from the pool of background-dominant scenes (mask at least
    bg_fraction background); the donor object class is non-background.
    """
    if len(batch) < 2:
        raise BatchTooSmall("cutpas needs at least two scenes")
    rngs = rngs or _streams(cfg, len(batch), 0, 0)
    bg = batch.label_set.background_id
    pool = [
        i for i, s in enumerate(batch)
        if np.mean(s.mask.labels == bg) >= cfg.bg_fraction
    ]
    if not pool:
        raise EmptyBackgroundPool(
            f"no scene is at least {cfg.bg_fraction:.0%} background"
        )
    records = _new_records(batch)
    selected = _selection(batch, cfg, rngs)
    snapshot = [(s.cube.data, s.mask.labels) for s in batch]
    work = [_MutableScene(s) for s in batch]
    for i in range(len(batch)):
        if not selected[i]:
            continue
        recipients = [r for r in pool if r != i]
        if not recipients:
            records[i].note = "no background recipient other than self"
            continue
        r = recipients[int(rngs[i].integers(len(recipients)))]
        donor_cube, donor_mask = snapshot[i]
        classes = _transplant_classes(rngs[i], donor_mask, cfg, exclude_background=bg)
        if not classes:
            records[i].note = "no donor classes in sampling pool"
            continue
        region = np.isin(donor_mask, classes)
        work[r].cube[region] = donor_cube[region]
        work[r].mask[region] = donor_mask[region]
        records[r].applied = True
        records[r].donor_image_ids.append(batch[i].image_id)
        records[r].transplanted_class_ids.extend(classes)
    return _finish_stage(batch, batch, work, records)


def _geometric_only(batch: Batch, cfg: AugmentationConfig, rngs=None):
    return _finish_stage(batch, batch, [_MutableScene(s) for s in batch],
                         _new_records(batch))


_KIND_OPS: dict[str, Callable] = {
    "geometric_only": _geometric_only,
    "hide_and_seek": hide_and_seek,
    "random_erasing": random_erasing,
    "jigsaw": jigsaw,
    "cutmix": cutmix,
    "cutpas": cutpas,
    "organ_transplantation": organ_transplantation,
}


def apply_augmentation(
    batch: Batch,
    cfg: AugmentationConfig,
    epoch: int = 0,
    batch_index: int = 0,
) -> tuple[Batch, list[AugmentationRecord]]:
    """Run baseline + kind-specific stage on a batch.

    Affected-pixel counts in the records compare against the input batch, so
    they include changes made by the geometric baseline.
    """
    originals = batch
    rngs = _streams(cfg, len(batch), epoch, batch_index)
    if cfg.geometric is not None:
        batch = Batch(tuple(
            geometric_baseline(s, cfg.geometric, rng) for s, rng in zip(batch, rngs)
        ))
    staged, records = _KIND_OPS[cfg.kind](batch, cfg, rngs)
    # recompute affected counts against the true operation input
    scenes = []
    for i, (orig, out) in enumerate(zip(originals, staged)):
        changed = np.any(orig.cube.data != out.cube.data, axis=2) | (
            orig.mask.labels != out.mask.labels
        )
        records[i].affected_pixels = int(changed.sum())
        scenes.append(out)
    return Batch(tuple(scenes)), records
