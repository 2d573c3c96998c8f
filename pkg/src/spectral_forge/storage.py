"""On-disk formats and dataset manifests.

Cube files are raw little-endian float32 in H-major, W, C order with a JSON
sidecar header (``<cube_path>.json``) carrying height/width/channels and the
optional wavelength axis. Masks are 8-bit single-channel PNG with the class id
as pixel value. Both round-trip bit-exactly. Manifests are JSON files that
reference scenes by paths relative to the manifest's own directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from .errors import (
    HeaderMismatch,
    IoError,
    ManifestError,
    MissingFile,
    SplitLeakage,
)
from .labels import LabelSet
from .scene import CUBE_DTYPE, LabeledScene, SemanticMask, SpectralCube


def sidecar_path(cube_path: str | Path) -> Path:
    return Path(str(cube_path) + ".json")


def save_cube(cube: SpectralCube, cube_path: str | Path) -> None:
    """Write a bare cube (raw f32le plus sidecar header)."""
    cube_path = Path(cube_path)
    header = {
        "height": cube.height,
        "width": cube.width,
        "channels": cube.channels,
        "wavelengths_nm": list(cube.wavelengths_nm)
        if cube.wavelengths_nm is not None
        else None,
    }
    try:
        cube_path.parent.mkdir(parents=True, exist_ok=True)
        cube_path.write_bytes(cube.data.astype("<f4", copy=False).tobytes(order="C"))
        sidecar_path(cube_path).write_text(
            json.dumps(header, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write cube: {exc}") from exc


def load_cube(cube_path: str | Path) -> SpectralCube:
    cube_path = Path(cube_path)
    for p in (cube_path, sidecar_path(cube_path)):
        if not p.is_file():
            raise MissingFile(str(p))
    try:
        header = json.loads(sidecar_path(cube_path).read_text(encoding="utf-8"))
        raw = cube_path.read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read cube: {exc}") from exc
    h, w, c = int(header["height"]), int(header["width"]), int(header["channels"])
    if len(raw) != h * w * c * 4:
        raise HeaderMismatch(
            f"{cube_path}: header says {h}x{w}x{c} but file holds "
            f"{len(raw) // 4} float32 values"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, c).astype(CUBE_DTYPE)
    wl = header.get("wavelengths_nm")
    return SpectralCube(data=data, wavelengths_nm=tuple(wl) if wl else None)


def save_scene(scene: LabeledScene, cube_path: str | Path, mask_path: str | Path) -> None:
    """Write cube (raw f32le + sidecar) and mask (PNG); round-trips bit-exactly."""
    cube_path, mask_path = Path(cube_path), Path(mask_path)
    header = {
        "height": scene.cube.height,
        "width": scene.cube.width,
        "channels": scene.cube.channels,
        "wavelengths_nm": list(scene.cube.wavelengths_nm)
        if scene.cube.wavelengths_nm is not None
        else None,
    }
    try:
        cube_path.parent.mkdir(parents=True, exist_ok=True)
        mask_path.parent.mkdir(parents=True, exist_ok=True)
        cube_path.write_bytes(scene.cube.data.astype("<f4", copy=False).tobytes(order="C"))
        sidecar_path(cube_path).write_text(
            json.dumps(header, sort_keys=True) + "\n", encoding="utf-8"
        )
        Image.fromarray(scene.mask.labels, mode="L").save(mask_path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write scene: {exc}") from exc


def load_mask(mask_path: str | Path, label_set: LabelSet) -> SemanticMask:
    mask_path = Path(mask_path)
    if not mask_path.is_file():
        raise MissingFile(str(mask_path))
    try:
        labels = np.asarray(Image.open(mask_path), dtype=np.uint8)
    except OSError as exc:
        raise IoError(f"cannot read mask: {exc}") from exc
    if labels.ndim != 2:
        raise HeaderMismatch(f"{mask_path}: mask PNG must be single-channel")
    return SemanticMask(labels=labels, label_set=label_set)


def load_scene(
    cube_path: str | Path,
    mask_path: str | Path,
    label_set: LabelSet,
    subject_id: Optional[str] = None,
    image_id: Optional[str] = None,
) -> LabeledScene:
    """Load and validate a scene; ids default to the cube file stem."""
    cube_path = Path(cube_path)
    cube = load_cube(cube_path)
    mask = load_mask(mask_path, label_set)
    if (mask.height, mask.width) != (cube.height, cube.width):
        raise HeaderMismatch(
            f"mask {mask.height}x{mask.width} does not match cube "
            f"{cube.height}x{cube.width}"
        )
    stem = cube_path.name.split(".")[0]
    return LabeledScene(
        cube=cube,
        mask=mask,
        subject_id=subject_id if subject_id is not None else stem,
        image_id=image_id if image_id is not None else stem,
    )


# --- manifests --------------------------------------------------------------

VALID_SPLIT_TAGS = ("train", "test")  # plus "fold-<k>"


def _check_split_tag(tag: str) -> str:
    if tag in VALID_SPLIT_TAGS or tag.startswith("fold-"):
        return tag
    raise ManifestError(f"invalid split_tag {tag!r}")


@dataclass(frozen=True)
class SceneRef:
    """One manifest record; paths are relative to the manifest file."""

    cube: str
    mask: str
    subject_id: str
    image_id: str


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split_tag: str
    scenes: tuple[SceneRef, ...]
    # directory the relative paths resolve against; set on load/save
    root: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        _check_split_tag(self.split_tag)
        keys = [(s.subject_id, s.image_id) for s in self.scenes]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise ManifestError(f"duplicate (subject_id, image_id) pairs: {dupes}")

    def __len__(self) -> int:
        return len(self.scenes)

    def subject_ids(self) -> frozenset[str]:
        return frozenset(s.subject_id for s in self.scenes)

    def scene_paths(self, ref: SceneRef) -> tuple[Path, Path]:
        if self.root is None:
            raise ManifestError("manifest has no root directory; load or save it first")
        return self.root / ref.cube, self.root / ref.mask

    def load_scenes(self, label_set: LabelSet) -> list[LabeledScene]:
        return [
            load_scene(*self.scene_paths(ref), label_set,
                       subject_id=ref.subject_id, image_id=ref.image_id)
            for ref in self.scenes
        ]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "split_tag": self.split_tag,
            "scenes": [
                {
                    "cube": s.cube,
                    "mask": s.mask,
                    "subject_id": s.subject_id,
                    "image_id": s.image_id,
                }
                for s in self.scenes
            ],
        }


def save_manifest(manifest: DatasetManifest, path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc
    return DatasetManifest(
        name=manifest.name,
        split_tag=manifest.split_tag,
        scenes=manifest.scenes,
        root=path.parent,
    )


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read manifest: {exc}") from exc
    try:
        scenes = tuple(
            SceneRef(
                cube=str(s["cube"]),
                mask=str(s["mask"]),
                subject_id=str(s["subject_id"]),
                image_id=str(s["image_id"]),
            )
            for s in payload["scenes"]
        )
        manifest = DatasetManifest(
            name=str(payload["name"]),
            split_tag=str(payload["split_tag"]),
            scenes=scenes,
            root=path.parent,
        )
    except KeyError as exc:
        raise ManifestError(f"manifest missing field {exc}") from exc
    if check_files:
        for ref in manifest.scenes:
            cube_path, mask_path = manifest.scene_paths(ref)
            for p in (cube_path, sidecar_path(cube_path), mask_path):
                if not p.is_file():
                    raise ManifestError(f"manifest references missing file {p}")
    return manifest


def check_disjoint_subjects(train: DatasetManifest, test: DatasetManifest) -> None:
    """Subject-level split rule: no subject may appear on both sides."""
    leaked = train.subject_ids() & test.subject_ids()
    if leaked:
        raise SplitLeakage(f"subjects in both splits: {sorted(leaked)}")


def write_scene_files(
    scenes: Iterable[LabeledScene],
    out_dir: str | Path,
    name: str,
    split_tag: str,
    manifest_filename: Optional[str] = None,
) -> DatasetManifest:
    """Save scenes under out_dir and emit a manifest referencing them."""
    out_dir = Path(out_dir)
    refs = []
    for scene in scenes:
        cube_rel = f"{scene.image_id}.hsi"
        mask_rel = f"{scene.image_id}.png"
        save_scene(scene, out_dir / cube_rel, out_dir / mask_rel)
        refs.append(
            SceneRef(cube=cube_rel, mask=mask_rel,
                     subject_id=scene.subject_id, image_id=scene.image_id)
        )
    manifest = DatasetManifest(name=name, split_tag=split_tag, scenes=tuple(refs))
    return save_manifest(manifest, out_dir / (manifest_filename or f"{name}.json"))
