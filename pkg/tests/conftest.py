import numpy as np
import pytest

from spectral_forge import LabelSet, LabeledScene, SemanticMask, SpectralCube


@pytest.fixture
def labels6():
    """Small 7-class set (background + 6 tissue classes) used across tests."""
    return LabelSet.from_names(
        ["background"] + [f"tissue_{i}" for i in range(1, 7)]
    )


@pytest.fixture
def make_scene(labels6):
    def _make(mask_rows, subject_id="pig0", image_id="img0", channels=3,
              rng=None, label_set=None):
        label_set = label_set or labels6
        mask = np.asarray(mask_rows, dtype=np.uint8)
        rng = rng or np.random.default_rng(0)
        cube = rng.uniform(0.05, 1.0, (*mask.shape, channels)).astype(np.float32)
        return LabeledScene(
            cube=SpectralCube(data=cube),
            mask=SemanticMask(labels=mask, label_set=label_set),
            subject_id=subject_id,
            image_id=image_id,
        )

    return _make


@pytest.fixture
def random_scene(labels6):
    def _make(seed=0, h=8, w=8, channels=3, n_classes=None, subject_id=None,
              image_id=None, label_set=None):
        label_set = label_set or labels6
        n_classes = n_classes or len(label_set)
        rng = np.random.default_rng(seed)
        mask = rng.integers(0, n_classes, (h, w)).astype(np.uint8)
        cube = rng.uniform(0.05, 1.0, (h, w, channels)).astype(np.float32)
        return LabeledScene(
            cube=SpectralCube(data=cube),
            mask=SemanticMask(labels=mask, label_set=label_set),
            subject_id=subject_id or f"pig{seed % 3}",
            image_id=image_id or f"img{seed}",
        )

    return _make
