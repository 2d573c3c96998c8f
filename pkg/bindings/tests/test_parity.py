"""Binding parity: array-level results must equal the CLI's file-level results."""

import json

import numpy as np
import pytest

import spectral_forge_bindings as bindings
from spectral_forge import LabelSet, LabeledScene, SemanticMask, SpectralCube
from spectral_forge.cli import main as cli_main
from spectral_forge.storage import load_manifest, write_scene_files

N_CLASSES = 7
KINDS = ["hide_and_seek", "random_erasing", "jigsaw", "cutmix",
         "organ_transplantation", "geometric_only"]


def label_set():
    return LabelSet.from_names(
        ["background"] + [f"class_{i}" for i in range(1, N_CLASSES)])


def random_batch_arrays(rng, n, h=8, w=8, c=3):
    cubes = [rng.uniform(0.05, 1.0, (h, w, c)).astype(np.float32)
             for _ in range(n)]
    masks = [rng.integers(0, N_CLASSES, (h, w)).astype(np.uint8)
             for _ in range(n)]
    return cubes, masks


def cli_augment(tmp_path, cubes, masks, kind, p, seed, tag):
    """Run the CLI on the same data written to disk; return its output arrays."""
    ls = label_set()
    scenes = [
        LabeledScene(cube=SpectralCube(data=cube),
                     mask=SemanticMask(labels=mask, label_set=ls),
                     subject_id=f"scene{i}", image_id=f"scene{i}")
        for i, (cube, mask) in enumerate(zip(cubes, masks))
    ]
    data_dir = tmp_path / f"{tag}_in"
    write_scene_files(scenes, data_dir, name="batch", split_tag="train")
    labels_path = tmp_path / "labels.json"
    labels_path.write_text(json.dumps(ls.to_dict()))
    out_dir = tmp_path / f"{tag}_out"
    records_path = out_dir / "records.json"
    code = cli_main([
        "augment", "--manifest", str(data_dir / "batch.json"),
        "--kind", kind, "--p", str(p), "--seed", str(seed),
        "--out", str(out_dir), "--records", str(records_path),
        "--labels", str(labels_path),
    ])
    assert code == 0
    manifest = load_manifest(out_dir / f"batch__aug_{kind}.json")
    out_scenes = manifest.load_scenes(ls)
    records = json.loads(records_path.read_text())["records"]
    return out_scenes, records


class TestAugmentationParity:
    def test_hundred_random_batches_byte_identical(self, tmp_path):
        """[SECONDARY] acceptance: 100 random batches, CLI vs bindings."""
        rng = np.random.default_rng(424242)
        for i in range(100):
            n = int(rng.integers(2, 5))
            cubes, masks = random_batch_arrays(rng, n)
            kind = KINDS[i % len(KINDS)]
            seed = int(rng.integers(2**31))
            p = float(rng.choice([0.5, 1.0]))
            config = {"kind": kind, "probability_p": p}

            b_cubes, b_masks, b_records = bindings.apply_augmentation(
                cubes, masks, config, seed, n_classes=N_CLASSES)
            out_scenes, cli_records = cli_augment(
                tmp_path / f"b{i}", cubes, masks, kind, p, seed, tag="x")

            for bc, bm, scene in zip(b_cubes, b_masks, out_scenes):
                assert bc.tobytes() == scene.cube.data.tobytes()
                assert bm.tobytes() == scene.mask.labels.tobytes()
            assert b_records == cli_records

    def test_p_zero_is_identity(self):
        rng = np.random.default_rng(1)
        cubes, masks = random_batch_arrays(rng, 3)
        config = {"kind": "cutmix", "probability_p": 0.0, "geometric": None}
        out_cubes, out_masks, records = bindings.apply_augmentation(
            cubes, masks, config, seed=9, n_classes=N_CLASSES)
        for before, after in zip(cubes, out_cubes):
            assert np.array_equal(before, after)
        for before, after in zip(masks, out_masks):
            assert np.array_equal(before, after)
        assert all(not r["applied"] for r in records)

    def test_wrong_dtype_rejected(self):
        rng = np.random.default_rng(2)
        cubes, masks = random_batch_arrays(rng, 2)
        bad_cubes = [c.astype(np.float64) for c in cubes]
        with pytest.raises(TypeError):
            bindings.apply_augmentation(bad_cubes, masks,
                                        {"kind": "cutmix"}, 1,
                                        n_classes=N_CLASSES)
        bad_masks = [m.astype(np.int32) for m in masks]
        with pytest.raises(TypeError):
            bindings.apply_augmentation(cubes, bad_masks,
                                        {"kind": "cutmix"}, 1,
                                        n_classes=N_CLASSES)

    def test_wrong_shape_rejected(self):
        rng = np.random.default_rng(3)
        cubes, masks = random_batch_arrays(rng, 2)
        with pytest.raises(ValueError):
            bindings.apply_augmentation([cubes[0][:, :, 0]], [masks[0]],
                                        {"kind": "cutmix"}, 1,
                                        n_classes=N_CLASSES)

    def test_non_contiguous_inputs_copied_not_rejected(self):
        rng = np.random.default_rng(4)
        cubes, masks = random_batch_arrays(rng, 2, h=8, w=10)
        strided = [np.asfortranarray(c) for c in cubes]
        a = bindings.apply_augmentation(strided, masks,
                                        {"kind": "jigsaw"}, 5,
                                        n_classes=N_CLASSES)
        b = bindings.apply_augmentation(cubes, masks,
                                        {"kind": "jigsaw"}, 5,
                                        n_classes=N_CLASSES)
        for x, y in zip(a[0], b[0]):
            assert x.tobytes() == y.tobytes()


class TestMetricsParity:
    def test_hundred_mask_pairs_bit_equal_with_cli(self, tmp_path):
        """[SECONDARY] acceptance: 100 mask pairs, bindings vs CLI evaluate."""
        rng = np.random.default_rng(31415)
        ls = label_set()
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(ls.to_dict()))

        pred_scenes, ref_scenes = [], []
        pairs = []
        for i in range(100):
            h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            pred = rng.integers(0, N_CLASSES, (h, w)).astype(np.uint8)
            ref = rng.integers(0, N_CLASSES, (h, w)).astype(np.uint8)
            pairs.append((pred, ref))
            cube = np.zeros((h, w, 1), dtype=np.float32)
            pred_scenes.append(LabeledScene(
                cube=SpectralCube(data=cube),
                mask=SemanticMask(labels=pred, label_set=ls),
                subject_id=f"pig{i % 3}", image_id=f"pair{i:03d}"))
            ref_scenes.append(LabeledScene(
                cube=SpectralCube(data=cube),
                mask=SemanticMask(labels=ref, label_set=ls),
                subject_id=f"pig{i % 3}", image_id=f"pair{i:03d}"))
        write_scene_files(pred_scenes, tmp_path / "pred", name="pred",
                          split_tag="test")
        write_scene_files(ref_scenes, tmp_path / "ref", name="ref",
                          split_tag="test")
        report_path = tmp_path / "report.json"
        code = cli_main([
            "evaluate", "--pred-manifest", str(tmp_path / "pred" / "pred.json"),
            "--ref-manifest", str(tmp_path / "ref" / "ref.json"),
            "--metric", "dsc,nsd", "--out", str(report_path),
            "--labels", str(labels_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        cli_leaves = {}
        for metric in ("DSC", "NSD"):
            for leaf in report["metrics"][metric]["per_image"]:
                cli_leaves[(leaf["image_id"], leaf["class_id"], metric)] = \
                    leaf["value"]

        checked = 0
        for i, (pred, ref) in enumerate(pairs):
            scores = bindings.evaluate_masks(pred, ref, n_classes=N_CLASSES)
            for cid, vals in scores.items():
                image = f"pair{i:03d}"
                if vals["dsc"] is not None:
                    assert cli_leaves[(image, cid, "DSC")] == vals["dsc"]
                    checked += 1
                if vals["nsd"] is not None:
                    assert cli_leaves[(image, cid, "NSD")] == vals["nsd"]
                    checked += 1
        assert checked > 100  # plenty of present-class leaves compared

    def test_identical_masks_score_one(self):
        rng = np.random.default_rng(6)
        mask = rng.integers(0, N_CLASSES, (6, 6)).astype(np.uint8)
        scores = bindings.evaluate_masks(mask, mask.copy(), n_classes=N_CLASSES)
        for cid in np.unique(mask):
            assert scores[int(cid)] == {"dsc": 1.0, "nsd": 1.0}

    def test_dsc_fixture(self):
        pred = np.array([[1, 1, 0]], dtype=np.uint8)
        ref = np.array([[0, 1, 1]], dtype=np.uint8)
        scores = bindings.evaluate_masks(pred, ref, n_classes=N_CLASSES)
        assert scores[1]["dsc"] == 0.5

    def test_threshold_forms(self):
        pred = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        ref = np.array([[0, 0], [0, 1]], dtype=np.uint8)
        loose = bindings.evaluate_masks(pred, ref, thresholds=5.0,
                                        n_classes=N_CLASSES)
        tight = bindings.evaluate_masks(
            pred, ref, thresholds={"default": 0.0}, n_classes=N_CLASSES)
        assert loose[1]["nsd"] == 1.0
        assert tight[1]["nsd"] == 0.0

    def test_dims_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bindings.evaluate_masks(np.zeros((2, 2), dtype=np.uint8),
                                    np.zeros((3, 2), dtype=np.uint8),
                                    n_classes=N_CLASSES)


class TestIntrospection:
    def test_versions_exposed(self):
        assert bindings.__version__
        assert bindings.core_version()

    def test_default_config_round_trips(self):
        from spectral_forge import AugmentationConfig

        cfg = bindings.default_config("cutmix")
        assert cfg["kind"] == "cutmix"
        AugmentationConfig.from_dict(cfg)
