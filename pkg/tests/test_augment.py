import numpy as np
import pytest

from spectral_forge import (
    AugmentationConfig,
    Batch,
    GeometricParams,
    apply_augmentation,
    cutmix,
    cutpas,
    geometric_baseline,
    hide_and_seek,
    jigsaw,
    organ_transplantation,
    random_erasing,
)
from spectral_forge.augment import scene_stream, warp_scene
from spectral_forge.errors import BatchTooSmall, DataError, EmptyBackgroundPool
from spectral_forge.labels import IGNORE_LABEL
from spectral_forge.scene import batches_equal, scenes_equal


def cfg_for(kind, **kw):
    kw.setdefault("probability_p", 1.0)
    kw.setdefault("seed", 17)
    kw.setdefault("geometric", None)
    return AugmentationConfig(kind=kind, **kw)


def random_batch(random_scene, n=3, seed0=0, h=8, w=8):
    return Batch(tuple(
        random_scene(seed=seed0 + i, h=h, w=w, subject_id=f"pig{i}",
                     image_id=f"img{seed0 + i}")
        for i in range(n)
    ))


def assert_label_consistency(batch_in: Batch, batch_out: Batch):
    """Every changed pixel's (value, label) pair must exist at the same
    coordinates in some input scene."""
    inputs = [(s.cube.data, s.mask.labels) for s in batch_in]
    for before, after in zip(batch_in, batch_out):
        changed = (np.any(before.cube.data != after.cube.data, axis=2)
                   | (before.mask.labels != after.mask.labels))
        if not changed.any():
            continue
        ok = np.zeros_like(changed)
        for cube_j, mask_j in inputs:
            ok |= (np.all(cube_j == after.cube.data, axis=2)
                   & (mask_j == after.mask.labels))
        assert ok[changed].all()


class TestConfig:
    def test_paper_grid_exposed(self):
        from spectral_forge import SWEEP_P_GRID

        assert SWEEP_P_GRID == (0.2, 0.4, 0.6, 0.8, 1.0)

    def test_p_outside_unit_interval_rejected(self):
        with pytest.raises(DataError):
            cfg_for("cutmix", probability_p=1.5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(DataError):
            cfg_for("mixup")

    def test_degenerate_ranges_rejected(self):
        with pytest.raises(DataError):
            cfg_for("random_erasing", erase_area_range=(0.5, 0.2))
        with pytest.raises(DataError):
            cfg_for("random_erasing", erase_aspect_range=(0.0, 1.0))

    def test_dict_round_trip(self):
        cfg = cfg_for("organ_transplantation", n_transplant_classes=2,
                      geometric=GeometricParams(max_rotate_deg=30.0))
        assert AugmentationConfig.from_dict(cfg.to_dict()) == cfg


class TestGeometricBaseline:
    def test_identity_params_unchanged(self, random_scene):
        scene = random_scene()
        out = warp_scene(scene)
        assert scenes_equal(out, scene)

    def test_hflip_is_involution(self, random_scene):
        scene = random_scene()
        once = warp_scene(scene, flip_x=True)
        assert not scenes_equal(once, scene)
        twice = warp_scene(once, flip_x=True)
        assert scenes_equal(twice, scene)

    def test_rotation_index_formula_3x3(self, make_scene):
        # pixel (r, c) of an HxW scene lands at (c, H-1-r) under 90 degrees
        scene = make_scene([[0, 1, 2], [3, 4, 5], [0, 1, 2]])
        out = warp_scene(scene, angle_deg=90.0)
        h = scene.cube.height
        for r in range(3):
            for c in range(3):
                assert out.mask.labels[c, h - 1 - r] == scene.mask.labels[r, c]
                assert np.allclose(out.cube.data[c, h - 1 - r],
                                   scene.cube.data[r, c], atol=1e-5)

    def test_mask_and_cube_share_transform(self, random_scene):
        scene = random_scene(h=12, w=12)
        rng = scene_stream(99, 0, 0, 0)
        out = geometric_baseline(scene, GeometricParams(stage_prob=1.0), rng)
        # background fill appears in both arrays at the same out-of-canvas spots
        bg = scene.label_set.background_id
        zero_cube = ~np.any(out.cube.data != 0.0, axis=2)
        assert (out.mask.labels[zero_cube] == bg).all()

    def test_out_of_canvas_fill(self, make_scene):
        scene = make_scene([[1, 1], [1, 1]])
        out = warp_scene(scene, shift=(0.0, 1.0))  # shift one column right
        assert np.all(out.cube.data[:, 0, :] == 0.0)
        assert np.all(out.mask.labels[:, 0] == scene.label_set.background_id)
        assert np.array_equal(out.cube.data[:, 1, :], scene.cube.data[:, 0, :])


class TestDeterminismAndIdentity:
    @pytest.mark.parametrize("kind", ["geometric_only", "hide_and_seek",
                                      "random_erasing", "jigsaw", "cutmix",
                                      "organ_transplantation"])
    def test_bit_identical_under_seed(self, random_scene, kind):
        cfg = AugmentationConfig(kind=kind, probability_p=0.7, seed=23)
        batch = random_batch(random_scene)
        out1, rec1 = apply_augmentation(batch, cfg, epoch=2, batch_index=5)
        out2, rec2 = apply_augmentation(batch, cfg, epoch=2, batch_index=5)
        assert batches_equal(out1, out2)
        assert [r.to_dict() for r in rec1] == [r.to_dict() for r in rec2]

    def test_different_scene_streams_differ(self, random_scene):
        cfg = AugmentationConfig(kind="random_erasing", probability_p=1.0, seed=23)
        batch = random_batch(random_scene)
        out, _ = apply_augmentation(batch, cfg, epoch=0, batch_index=0)
        out_next, _ = apply_augmentation(batch, cfg, epoch=1, batch_index=0)
        assert not batches_equal(out, out_next)

    @pytest.mark.parametrize("kind", ["hide_and_seek", "random_erasing",
                                      "jigsaw", "cutmix", "cutpas",
                                      "organ_transplantation"])
    def test_p_zero_is_identity(self, random_scene, make_scene, kind):
        scenes = list(random_batch(random_scene))
        # cutpas needs a background-dominant scene in the pool
        scenes.append(make_scene(np.zeros((8, 8), dtype=int).tolist(),
                                 subject_id="pigbg", image_id="bg0"))
        batch = Batch(tuple(scenes))
        cfg = cfg_for(kind, probability_p=0.0)
        out, records = apply_augmentation(batch, cfg)
        assert batches_equal(out, batch)
        assert all(not r.applied and r.affected_pixels == 0 for r in records)


class TestHideAndSeek:
    def test_drop_prob_zero_is_noop(self, random_scene):
        batch = random_batch(random_scene)
        out, _ = hide_and_seek(batch, cfg_for("hide_and_seek", patch_drop_prob=0.0))
        assert batches_equal(out, batch)

    def test_drop_prob_one_blacks_out_everything(self, random_scene):
        batch = random_batch(random_scene)
        out, records = hide_and_seek(batch, cfg_for("hide_and_seek",
                                                    patch_drop_prob=1.0))
        for before, after in zip(batch, out):
            assert np.all(after.cube.data == 0.0)
            assert np.array_equal(after.mask.labels, before.mask.labels)
        assert all(r.applied for r in records)

    def test_single_dropped_patch_counts_four_pixels(self, random_scene):
        # 2x2 grid over 4x4 image: each patch is 2x2 = 4 pixels
        batch = Batch((random_scene(h=4, w=4),))
        cfg = cfg_for("hide_and_seek", grid_rows=2, grid_cols=2,
                      patch_drop_prob=0.5, seed=0)
        for seed in range(50):
            out, records = hide_and_seek(
                batch, cfg_for("hide_and_seek", grid_rows=2, grid_cols=2,
                               patch_drop_prob=0.5, seed=seed))
            if records[0].affected_pixels == 4:
                zeroed = ~np.any(out[0].cube.data != 0.0, axis=2)
                assert zeroed.sum() == 4
                return
        pytest.fail("no seed produced exactly one dropped patch")

    def test_relabel_dropped_uses_ignore_sentinel(self, random_scene):
        batch = random_batch(random_scene, n=1)
        out, _ = hide_and_seek(batch, cfg_for("hide_and_seek",
                                              patch_drop_prob=1.0,
                                              relabel_dropped=True))
        assert np.all(out[0].mask.labels == IGNORE_LABEL)

    def test_uneven_grid_tiles_whole_image(self, random_scene):
        batch = random_batch(random_scene, n=1, h=5, w=7)
        out, _ = hide_and_seek(batch, cfg_for("hide_and_seek", grid_rows=3,
                                              grid_cols=4, patch_drop_prob=1.0))
        assert np.all(out[0].cube.data == 0.0)


class TestRandomErasing:
    def test_quarter_area_square_on_4x4(self, random_scene):
        batch = Batch((random_scene(h=4, w=4),))
        cfg = cfg_for("random_erasing", erase_area_range=(0.25, 0.25),
                      erase_aspect_range=(1.0, 1.0))
        out, records = random_erasing(batch, cfg)
        zeroed = ~np.any(out[0].cube.data != 0.0, axis=2)
        assert zeroed.sum() == 4
        assert records[0].affected_pixels == 4
        rows, cols = np.nonzero(zeroed)
        assert rows.max() - rows.min() == 1 and cols.max() - cols.min() == 1

    def test_labels_unchanged_by_default(self, random_scene):
        batch = random_batch(random_scene)
        out, _ = random_erasing(batch, cfg_for("random_erasing"))
        for before, after in zip(batch, out):
            assert np.array_equal(before.mask.labels, after.mask.labels)

    def test_rejection_overflow_logs_noop(self, random_scene):
        # area fraction 1 with extreme aspect cannot fit inside the image
        batch = Batch((random_scene(h=4, w=4),))
        cfg = cfg_for("random_erasing", erase_area_range=(1.0, 1.0),
                      erase_aspect_range=(100.0, 100.0))
        out, records = random_erasing(batch, cfg)
        assert batches_equal(out, batch)
        assert not records[0].applied
        assert "rejection overflow" in records[0].note


class TestJigsaw:
    def test_batch_too_small(self, random_scene):
        with pytest.raises(BatchTooSmall):
            jigsaw(Batch((random_scene(),)), cfg_for("jigsaw"))

    def test_whole_image_swap_on_two_scenes(self, random_scene):
        batch = random_batch(random_scene, n=2)
        cfg = cfg_for("jigsaw", grid_rows=1, grid_cols=1, patch_swap_prob=1.0)
        out, records = jigsaw(batch, cfg)
        assert np.array_equal(out[0].cube.data, batch[1].cube.data)
        assert np.array_equal(out[1].cube.data, batch[0].cube.data)
        assert np.array_equal(out[0].mask.labels, batch[1].mask.labels)
        assert records[0].donor_image_ids == [batch[1].image_id]

    def test_multiset_conservation_per_grid_cell(self, random_scene):
        batch = random_batch(random_scene, n=4, h=6, w=6)
        cfg = cfg_for("jigsaw", grid_rows=3, grid_cols=2, patch_swap_prob=1.0)
        out, _ = jigsaw(batch, cfg)
        from spectral_forge.augment import _grid_cells

        for rs, re, cs, ce in _grid_cells(6, 6, 3, 2):
            def cell_multiset(b):
                items = []
                for s in b:
                    cube = s.cube.data[rs:re, cs:ce].reshape(-1)
                    mask = s.mask.labels[rs:re, cs:ce].reshape(-1)
                    items.append(np.concatenate([cube, mask.astype(np.float32)]))
                return sorted(tuple(x) for x in items)

            assert cell_multiset(batch) == cell_multiset(out)

    def test_label_consistency(self, random_scene):
        batch = random_batch(random_scene, n=3)
        out, _ = jigsaw(batch, cfg_for("jigsaw", patch_swap_prob=0.8))
        assert_label_consistency(batch, out)


class TestCutmix:
    def test_batch_too_small(self, random_scene):
        with pytest.raises(BatchTooSmall):
            cutmix(Batch((random_scene(),)), cfg_for("cutmix"))

    def test_zero_area_is_unchanged(self, random_scene):
        batch = random_batch(random_scene, n=2)
        out, _ = cutmix(batch, cfg_for("cutmix", cutmix_area_range=(0.0, 0.0)))
        assert batches_equal(out, batch)

    def test_full_area_copies_donor(self, random_scene):
        batch = random_batch(random_scene, n=2)
        out, records = cutmix(batch, cfg_for("cutmix", cutmix_area_range=(1.0, 1.0)))
        donor0 = records[0].donor_image_ids[0]
        src = next(s for s in batch if s.image_id == donor0)
        assert np.array_equal(out[0].cube.data, src.cube.data)
        assert np.array_equal(out[0].mask.labels, src.mask.labels)

    def test_rectangle_matches_donor_rest_untouched(self, random_scene):
        batch = random_batch(random_scene, n=2, h=8, w=8)
        cfg = cfg_for("cutmix", cutmix_area_range=(0.25, 0.25))
        out, records = cutmix(batch, cfg)
        recipient, original = out[0], batch[0]
        donor = next(s for s in batch if s.image_id == records[0].donor_image_ids[0])
        changed = np.any(recipient.cube.data != original.cube.data, axis=2)
        if changed.any():
            rows, cols = np.nonzero(changed)
            rs, re = rows.min(), rows.max() + 1
            cs, ce = cols.min(), cols.max() + 1
            assert np.array_equal(recipient.cube.data[rs:re, cs:ce],
                                  donor.cube.data[rs:re, cs:ce])
            assert np.array_equal(recipient.mask.labels[rs:re, cs:ce],
                                  donor.mask.labels[rs:re, cs:ce])
            outside = ~changed
            assert np.array_equal(recipient.cube.data[outside],
                                  original.cube.data[outside])

    def test_donor_unchanged(self, random_scene):
        batch = random_batch(random_scene, n=2)
        for seed in range(30):
            cfg = AugmentationConfig(kind="cutmix", probability_p=0.5, seed=seed,
                                     geometric=None,
                                     cutmix_area_range=(0.5, 0.5))
            out, records = cutmix(batch, cfg)
            applied = [r.applied for r in records]
            if applied == [True, False]:
                assert scenes_equal(out[1], batch[1])
                return
        pytest.fail("no seed selected exactly the first scene")

    def test_label_consistency(self, random_scene):
        batch = random_batch(random_scene, n=3)
        out, _ = cutmix(batch, cfg_for("cutmix"))
        assert_label_consistency(batch, out)


class TestOrganTransplantation:
    def test_batch_too_small(self, random_scene):
        with pytest.raises(BatchTooSmall):
            organ_transplantation(Batch((random_scene(),)), cfg_for("organ_transplantation"))

    def test_two_by_two_fixture(self, make_scene):
        donor = make_scene([[2, 2], [0, 0]], subject_id="pigD", image_id="donor")
        recipient = make_scene([[1, 1], [1, 1]], subject_id="pigR",
                               image_id="recipient")
        batch = Batch((recipient, donor))
        # restrict the pool to class 2 so the chosen class is forced
        cfg = cfg_for("organ_transplantation", transplant_pool=(2,), seed=1)
        for seed in range(40):
            out, records = organ_transplantation(
                batch, cfg_for("organ_transplantation", transplant_pool=(2,),
                               seed=seed))
            if records[0].applied and not records[1].applied:
                assert records[0].transplanted_class_ids == [2]
                assert records[0].affected_pixels == 2
                assert np.array_equal(out[0].mask.labels,
                                      np.array([[2, 2], [1, 1]], dtype=np.uint8))
                assert np.array_equal(out[0].cube.data[0], donor.cube.data[0])
                assert np.array_equal(out[0].cube.data[1], recipient.cube.data[1])
                assert scenes_equal(out[1], donor)
                return
        pytest.fail("no seed selected only the recipient")

    def test_donor_fully_one_class_copies_whole_scene(self, make_scene):
        donor = make_scene([[3, 3], [3, 3]], subject_id="pigD", image_id="donor")
        recipient = make_scene([[0, 1], [2, 4]], subject_id="pigR", image_id="rec")
        out, records = organ_transplantation(
            Batch((recipient, donor)),
            cfg_for("organ_transplantation", probability_p=1.0, seed=3,
                    transplant_pool=(3,)))
        assert np.all(out[0].mask.labels == 3)
        assert np.array_equal(out[0].cube.data, donor.cube.data)
        assert records[0].affected_pixels == 4

    def test_absent_pool_class_is_noop(self, make_scene):
        donor = make_scene([[1, 1], [1, 1]], subject_id="pigD", image_id="donor")
        recipient = make_scene([[2, 2], [2, 2]], subject_id="pigR", image_id="rec")
        out, records = organ_transplantation(
            Batch((recipient, donor)),
            cfg_for("organ_transplantation", transplant_pool=(5,)))
        assert scenes_equal(out[0], recipient)
        assert not records[0].applied
        assert "no donor classes" in records[0].note

    def test_background_is_eligible_by_default(self, make_scene):
        donor = make_scene([[0, 0], [0, 0]], subject_id="pigD", image_id="donor")
        recipient = make_scene([[1, 1], [1, 1]], subject_id="pigR", image_id="rec")
        out, records = organ_transplantation(
            Batch((recipient, donor)), cfg_for("organ_transplantation", seed=4))
        assert records[0].transplanted_class_ids == [0]
        assert np.all(out[0].mask.labels == 0)

    def test_donor_never_modified(self, random_scene):
        batch = random_batch(random_scene, n=3)
        out, records = organ_transplantation(batch, cfg_for("organ_transplantation"))
        # every donor named in the records must be bit-identical to its input
        for rec in records:
            for donor_id in rec.donor_image_ids:
                i = next(k for k, s in enumerate(batch) if s.image_id == donor_id)
                donated = batch[i]
                # the donor may itself have been a recipient; compare the
                # transplanted region against the donor's INPUT state
                region = np.isin(batch[i].mask.labels,
                                 rec.transplanted_class_ids)
                got = out[rec.scene_index]
                assert np.array_equal(got.cube.data[region],
                                      donated.cube.data[region])

    def test_multi_class_transplant(self, make_scene):
        donor = make_scene([[1, 2], [3, 0]], subject_id="pigD", image_id="donor")
        recipient = make_scene([[5, 5], [5, 5]], subject_id="pigR", image_id="rec")
        out, records = organ_transplantation(
            Batch((recipient, donor)),
            cfg_for("organ_transplantation", n_transplant_classes=4, seed=0))
        assert sorted(records[0].transplanted_class_ids) == [0, 1, 2, 3]
        assert np.array_equal(out[0].mask.labels, donor.mask.labels)

    def test_label_consistency(self, random_scene):
        batch = random_batch(random_scene, n=4)
        out, _ = organ_transplantation(batch, cfg_for("organ_transplantation"))
        assert_label_consistency(batch, out)


class TestCutpas:
    def make_pool_batch(self, make_scene, random_scene):
        organ = random_scene(seed=1, subject_id="pigA", image_id="organ1")
        bg1 = make_scene(np.zeros((8, 8), dtype=int).tolist(),
                         subject_id="pigB", image_id="bg1")
        bg2 = make_scene(np.zeros((8, 8), dtype=int).tolist(),
                         subject_id="pigC", image_id="bg2")
        return Batch((organ, bg1, bg2))

    def test_empty_pool_raises(self, random_scene):
        batch = random_batch(random_scene, n=3)  # random masks, never 90% bg
        with pytest.raises(EmptyBackgroundPool):
            cutpas(batch, cfg_for("cutpas", bg_fraction=0.95))

    def test_transplant_onto_background_scene(self, make_scene, random_scene):
        batch = self.make_pool_batch(make_scene, random_scene)
        out, records = cutpas(batch, cfg_for("cutpas", seed=8))
        modified = [r for r in records if r.applied]
        assert modified, "the organ scene should have seeded a transplant"
        for rec in modified:
            assert rec.donor_image_ids == ["organ1"]
            got = out[rec.scene_index].mask.labels
            classes = set(np.unique(got).tolist())
            assert classes == set(rec.transplanted_class_ids) | {0}
            # transplanted class is an object class, never background
            assert 0 not in rec.transplanted_class_ids

    def test_donor_and_recipient_always_distinct(self, make_scene, random_scene):
        batch = self.make_pool_batch(make_scene, random_scene)
        for seed in range(10):
            _, records = cutpas(batch, cfg_for("cutpas", seed=seed))
            for rec in records:
                assert rec.image_id not in rec.donor_image_ids

    def test_label_consistency(self, make_scene, random_scene):
        batch = self.make_pool_batch(make_scene, random_scene)
        out, _ = cutpas(batch, cfg_for("cutpas", seed=2))
        assert_label_consistency(batch, out)


class TestMaskValidityEverywhere:
    @pytest.mark.parametrize("kind", ["hide_and_seek", "random_erasing",
                                      "jigsaw", "cutmix", "organ_transplantation"])
    def test_output_masks_stay_in_label_set(self, random_scene, kind):
        batch = random_batch(random_scene, n=3)
        cfg = AugmentationConfig(kind=kind, probability_p=1.0, seed=5)
        out, _ = apply_augmentation(batch, cfg)
        n = len(batch.label_set)
        for scene in out:
            assert scene.mask.labels.max() < n
