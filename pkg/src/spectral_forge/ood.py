"""Synthetic geometric-OOD datasets: organs in isolation and organ removal.

Isolation keeps one target class and wipes everything else; removal wipes the
target class and keeps the rest. Wiped pixels are either zeroed or filled with
spectra sampled from a background scene, and always relabeled background.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, InsufficientBackground, TargetAbsent
from .parallel import thread_map
from .scene import LabeledScene
from .storage import (
    DatasetManifest,
    LabelSet,
    SceneRef,
    load_scene,
    save_manifest,
    save_scene,
)

MODES = ("isolation_zero", "isolation_bgr", "removal_zero", "removal_bgr")


@dataclass(frozen=True)
class SynthesisSpec:
    """Which manipulation to run, on which target class, with which filler."""

    mode: str
    target_label: int
    background_source: Optional[LabeledScene] = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown synthesis mode {self.mode!r}")
        if self.mode.endswith("_bgr") and self.background_source is None:
            raise DataError(f"mode {self.mode} needs a background_source scene")

    @property
    def is_isolation(self) -> bool:
        return self.mode.startswith("isolation")

    @property
    def uses_background(self) -> bool:
        return self.mode.endswith("_bgr")


def _background_spectra(spec: SynthesisSpec, scene: LabeledScene, n: int) -> np.ndarray:
    """Sample n spectra uniformly with replacement from the source's background.

    The stream is keyed by (seed, target scene id, target label) so every
    output scene is reproducible on its own, in any processing order.
    """
    src = spec.background_source
    bg = src.label_set.background_id
    rows, cols = np.nonzero(src.mask.labels == bg)
    if rows.size == 0:
        raise InsufficientBackground(
            f"background source {src.image_id!r} has no background pixels"
        )
    if src.cube.channels != scene.cube.channels:
        raise DataError(
            f"background source has {src.cube.channels} channels, "
            f"scene has {scene.cube.channels}"
        )
    key = (zlib.crc32(scene.image_id.encode()), spec.target_label)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=key))
    pick = rng.integers(rows.size, size=n)
    return src.cube.data[rows[pick], cols[pick], :]


def _replace_pixels(scene: LabeledScene, region: np.ndarray, spec: SynthesisSpec,
                    suffix: str) -> LabeledScene:
    cube = scene.cube.data.copy()
    mask = scene.mask.labels.copy()
    if spec.uses_background:
        cube[region] = _background_spectra(spec, scene, int(region.sum()))
    else:
        cube[region] = 0.0
    mask[region] = scene.label_set.background_id
    out = scene.with_arrays(cube, mask)
    return LabeledScene(
        cube=out.cube,
        mask=out.mask,
        subject_id=scene.subject_id,
        image_id=f"{scene.image_id}{suffix}",
    )


def isolate(scene: LabeledScene, spec: SynthesisSpec) -> LabeledScene:
    """Keep only the target class; wipe and background-relabel everything else."""
    if not spec.is_isolation:
        raise DataError(f"isolate called with mode {spec.mode!r}")
    l = spec.target_label
    if l == scene.label_set.background_id:
        raise DataError("isolation target must not be the background class")
    present = scene.mask.labels == l
    if not present.any():
        raise TargetAbsent(f"class {l} absent from scene {scene.image_id!r}")
    return _replace_pixels(scene, ~present, spec, f"__{spec.mode}_l{l}")


def remove(scene: LabeledScene, spec: SynthesisSpec) -> LabeledScene:
    """Wipe the target class (simulated resection); keep everything else."""
    if spec.is_isolation:
        raise DataError(f"remove called with mode {spec.mode!r}")
    l = spec.target_label
    if l == scene.label_set.background_id:
        raise DataError("removing the background is not a resection")
    region = scene.mask.labels == l
    if not region.any():
        raise TargetAbsent(f"class {l} absent from scene {scene.image_id!r}")
    return _replace_pixels(scene, region, spec, f"__{spec.mode}_l{l}")


def eligible_labels(scene: LabeledScene) -> tuple[int, ...]:
    """Target labels synthesized for a scene: present non-background classes."""
    bg = scene.label_set.background_id
    return tuple(c for c in scene.mask.present_classes() if c != bg)


def synthesize_scene_set(scene: LabeledScene, mode: str,
                         background_source: Optional[LabeledScene] = None,
                         seed: int = 0) -> list[LabeledScene]:
    op = isolate if mode.startswith("isolation") else remove
    out = []
    for l in eligible_labels(scene):
        spec = SynthesisSpec(mode=mode, target_label=l,
                             background_source=background_source, seed=seed)
        out.append(op(scene, spec))
    return out


def synthesize_dataset(
    manifest: DatasetManifest,
    mode: str,
    label_set: LabelSet,
    out_dir,
    background_source: Optional[LabeledScene] = None,
    seed: int = 0,
    threads: int = 1,
) -> DatasetManifest:
    """Apply the manipulation to every scene and every eligible target label.

    One fixed background source serves the whole dataset in *_bgr modes.
    Output image ids encode (image_id, mode, target label); the manifest is
    written to out_dir.
    """
    if mode not in MODES:
        raise DataError(f"unknown synthesis mode {mode!r}")
    if mode.endswith("_bgr") and background_source is None:
        raise DataError(f"mode {mode} needs a background source scene")

    def synth_one(ref):
        scene = load_scene(*manifest.scene_paths(ref), label_set,
                           subject_id=ref.subject_id, image_id=ref.image_id)
        return synthesize_scene_set(scene, mode, background_source, seed)

    refs = []
    out_dir = Path(out_dir)
    for produced in thread_map(synth_one, manifest.scenes, threads):
        for out_scene in produced:
            cube_rel = f"{out_scene.image_id}.hsi"
            mask_rel = f"{out_scene.image_id}.png"
            save_scene(out_scene, out_dir / cube_rel, out_dir / mask_rel)
            refs.append(SceneRef(cube=cube_rel, mask=mask_rel,
                                 subject_id=out_scene.subject_id,
                                 image_id=out_scene.image_id))
    name = f"{manifest.name}__{mode}"
    out_manifest = DatasetManifest(name=name, split_tag=manifest.split_tag,
                                   scenes=tuple(refs))
    return save_manifest(out_manifest, out_dir / f"{name}.json")
