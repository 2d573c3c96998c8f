"""Synthetic scene generator with a rigged class-adjacency rule.

Tissue classes come in twin pairs whose spectra differ only by a small
perturbation. The two twins always appear in different contexts: the odd
member sits in a cluster touching a designated bright tissue neighbor, while
the even member always lies alone on dim background. In distribution, the
neighborhood is therefore a far stronger cue for telling twins apart than the
pixel's own spectrum, and a segmenter happily takes that shortcut. Once the
odd member is isolated (surroundings zeroed), its neighborhood collapses to
the dim signature of its standalone twin and the shortcut answers wrongly;
only the pixel spectrum can still resolve the pair.

Odd classes are wired in triads (a, b, c) with neighbor map a->b->c->a, laid
out as an L-shaped cluster in which all three blobs touch each other; even
classes have the background as designated neighbor. The rule holds in every
generated mask by construction, and every scene contains every class, so
in-distribution scoring never meets a class that is absent from a reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError
from .labels import LabelSet
from .ood import synthesize_dataset
from .scene import LabeledScene, SemanticMask, SpectralCube
from .storage import DatasetManifest, load_manifest, write_scene_files


@dataclass(frozen=True)
class SyntheticWorldConfig:
    """Layout, spectra, and split sizes of the synthetic world."""

    n_classes: int = 7  # background + twin pairs in groups of three
    height: int = 32
    width: int = 32
    channels: int = 8
    n_train_scenes: int = 48
    n_test_scenes: int = 12
    n_train_subjects: int = 6
    n_test_subjects: int = 3
    clusters_per_group: tuple[int, int] = (1, 2)
    standalones_per_class: tuple[int, int] = (1, 2)
    blob_side: tuple[int, int] = (3, 5)
    # twin separation and noise sit where the context shortcut clearly beats
    # the pixel spectrum in-distribution yet the spectrum alone still works
    pair_separation: float = 0.068
    noise_sigma: float = 0.028
    background_level: float = 0.05
    seed: int = 0

    def __post_init__(self):
        n_tissue = self.n_classes - 1
        if n_tissue < 6 or n_tissue % 6 != 0:
            raise DataError(
                "n_classes must be 1 + a positive multiple of 6 "
                f"(triad wiring), got {self.n_classes}"
            )
        if self.blob_side[0] < 2 or self.blob_side[0] > self.blob_side[1]:
            raise DataError(f"bad blob_side {self.blob_side}")
        if self.clusters_per_group[0] < 1 or self.standalones_per_class[0] < 1:
            raise DataError(
                "every scene needs at least one cluster per group and one "
                "standalone blob per even class"
            )
        if min(self.height, self.width) < 2 * self.blob_side[1]:
            raise DataError("scene too small for the largest cluster")
        if self.pair_separation <= 0 or self.noise_sigma < 0:
            raise DataError("pair_separation must be > 0, noise_sigma >= 0")

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "n_train_scenes": self.n_train_scenes,
            "n_test_scenes": self.n_test_scenes,
            "n_train_subjects": self.n_train_subjects,
            "n_test_subjects": self.n_test_subjects,
            "clusters_per_group": list(self.clusters_per_group),
            "standalones_per_class": list(self.standalones_per_class),
            "blob_side": list(self.blob_side),
            "pair_separation": self.pair_separation,
            "noise_sigma": self.noise_sigma,
            "background_level": self.background_level,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticWorldConfig":
        kwargs = dict(payload)
        for key in ("clusters_per_group", "standalones_per_class", "blob_side"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticWorldConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def world_label_set(cfg: SyntheticWorldConfig) -> LabelSet:
    names = ["background"] + [f"tissue_{i}" for i in range(1, cfg.n_classes)]
    return LabelSet.from_names(names)


def neighbor_map(cfg: SyntheticWorldConfig) -> dict[int, int]:
    """Designated neighbor per tissue class: odd classes cycle within their
    triad (a->b->c->a); even classes neighbor the background."""
    mapping: dict[int, int] = {}
    for a, b, c in _triads(cfg):
        mapping[a] = b
        mapping[b] = c
        mapping[c] = a
    for even in _standalone_classes(cfg):
        mapping[even] = 0
    return mapping


def _triads(cfg: SyntheticWorldConfig) -> list[tuple[int, int, int]]:
    """One odd-class triad per group of three twin pairs, e.g. (1, 3, 5)."""
    n_groups = (cfg.n_classes - 1) // 6
    return [(6 * g + 1, 6 * g + 3, 6 * g + 5) for g in range(n_groups)]


def _standalone_classes(cfg: SyntheticWorldConfig) -> list[int]:
    """Even twins, always placed alone on background, e.g. 2, 4, 6."""
    return [c for c in range(2, cfg.n_classes, 2)]


def class_spectra(cfg: SyntheticWorldConfig) -> np.ndarray:
    """Mean spectrum per class id; pair members differ by +-pair_separation."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    spectra = np.zeros((cfg.n_classes, cfg.channels))
    spectra[0] = cfg.background_level
    n_pairs = (cfg.n_classes - 1) // 2
    for p in range(n_pairs):
        base = rng.uniform(0.3, 0.9, cfg.channels)
        direction = rng.normal(size=cfg.channels)
        direction /= np.linalg.norm(direction)
        spectra[2 * p + 1] = base + cfg.pair_separation * direction
        spectra[2 * p + 2] = base - cfg.pair_separation * direction
    return np.clip(spectra, 0.01, None)


def _stamp_cluster(rng: np.random.Generator, triad, cfg: SyntheticWorldConfig
                   ) -> np.ndarray:
    """L-shaped triad stamp: a top-left, b top-right, c across the bottom."""
    lo, hi = cfg.blob_side
    h1, h2, w1, w2 = rng.integers(lo, hi + 1, size=4)
    stamp = np.zeros((h1 + h2, w1 + w2), dtype=np.uint8)
    a, b, c = triad
    stamp[:h1, :w1] = a
    stamp[:h1, w1:] = b
    stamp[h1:, :] = c
    return np.rot90(stamp, k=int(rng.integers(4)))


def _place(rng: np.random.Generator, mask: np.ndarray, stamp: np.ndarray,
           required: bool) -> bool:
    """Drop a stamp at a random free position; surround by one background
    pixel of clearance so separate placements never touch."""
    sh, sw = stamp.shape
    h, w = mask.shape
    attempts = 200 if required else 30
    for _ in range(attempts):
        top = int(rng.integers(h - sh + 1))
        left = int(rng.integers(w - sw + 1))
        r0, r1 = max(top - 1, 0), min(top + sh + 1, h)
        c0, c1 = max(left - 1, 0), min(left + sw + 1, w)
        if not mask[r0:r1, c0:c1].any():
            region = mask[top:top + sh, left:left + sw]
            region[stamp > 0] = stamp[stamp > 0]
            return True
    if required:
        raise DataError("scene too crowded to place every required blob")
    return False


def _generate_scene(rng: np.random.Generator, cfg: SyntheticWorldConfig,
                    spectra: np.ndarray, subject_id: str, image_id: str
                    ) -> LabeledScene:
    mask = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    lo, hi = cfg.blob_side
    # required content first so that every class occurs in every scene
    for triad in _triads(cfg):
        n = int(rng.integers(cfg.clusters_per_group[0],
                             cfg.clusters_per_group[1] + 1))
        for k in range(n):
            _place(rng, mask, _stamp_cluster(rng, triad, cfg), required=k == 0)
    for even in _standalone_classes(cfg):
        n = int(rng.integers(cfg.standalones_per_class[0],
                             cfg.standalones_per_class[1] + 1))
        for k in range(n):
            bh, bw = rng.integers(lo, hi + 1, size=2)
            stamp = np.full((bh, bw), even, dtype=np.uint8)
            _place(rng, mask, stamp, required=k == 0)
    cube = spectra[mask] + rng.normal(0.0, cfg.noise_sigma,
                                      (cfg.height, cfg.width, cfg.channels))
    cube = np.clip(cube, 0.001, None)
    label_set = world_label_set(cfg)
    return LabeledScene(
        cube=SpectralCube(data=cube.astype(np.float32)),
        mask=SemanticMask(labels=mask, label_set=label_set),
        subject_id=subject_id,
        image_id=image_id,
    )


@dataclass(frozen=True)
class World:
    """Generated manifests plus everything needed to train and evaluate."""

    config: SyntheticWorldConfig
    label_set: LabelSet
    train: DatasetManifest
    test_in_dist: DatasetManifest
    test_isolation: DatasetManifest
    root: Path


def generate_world(cfg: SyntheticWorldConfig, out_dir: str | Path) -> World:
    """Write train/test scene sets and the isolation-OOD variant of the test set.

    Deterministic: the same config (seed included) reproduces identical files.
    """
    out_dir = Path(out_dir)
    spectra = class_spectra(cfg)

    def make_split(n_scenes, n_subjects, tag, split_tag, stream_key):
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(stream_key,)))
        scenes = []
        for i in range(n_scenes):
            subject = f"{tag}pig{i % n_subjects}"
            scenes.append(_generate_scene(rng, cfg, spectra, subject,
                                          f"{tag}{i:03d}"))
        return write_scene_files(scenes, out_dir / tag, name=tag,
                                 split_tag=split_tag)

    train = make_split(cfg.n_train_scenes, cfg.n_train_subjects, "train", "train", 1)
    test = make_split(cfg.n_test_scenes, cfg.n_test_subjects, "test", "test", 2)
    label_set = world_label_set(cfg)
    isolation = synthesize_dataset(
        test, "isolation_zero", label_set, out_dir / "test_isolation_zero")
    (out_dir / "world.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return World(config=cfg, label_set=label_set, train=train,
                 test_in_dist=test, test_isolation=isolation, root=out_dir)


def load_world(root: str | Path) -> World:
    root = Path(root)
    cfg = SyntheticWorldConfig.from_json(root / "world.json")
    return World(
        config=cfg,
        label_set=world_label_set(cfg),
        train=load_manifest(root / "train" / "train.json"),
        test_in_dist=load_manifest(root / "test" / "test.json"),
        test_isolation=load_manifest(
            root / "test_isolation_zero" / "test__isolation_zero.json"),
        root=root,
    )


def audit_adjacency(scene: LabeledScene, neighbors: dict[int, int]) -> bool:
    """True when every connected blob of every tissue class touches its
    designated neighbor class (4-connectivity)."""
    labels = scene.mask.labels
    for cid, partner in neighbors.items():
        region = labels == cid
        if not region.any():
            continue
        components, n = ndimage.label(region)
        for comp in range(1, n + 1):
            blob = components == comp
            ring = ndimage.binary_dilation(blob) & ~blob
            if not (labels[ring] == partner).any():
                return False
    return True
