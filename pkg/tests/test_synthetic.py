import math

import numpy as np
import pytest

from rosetteseg.errors import SpecInfeasibleError
from rosetteseg.masks import BinaryMask, intersection_area
from rosetteseg.model import ImageMeta, LeafInstance, PipelineConfig
from rosetteseg.sceneio import canonical_dumps
from rosetteseg.stems import (
    MultiResAttention,
    aggregate_attention,
    clip_segment_to_mask,
    crop_leaf,
    fit_wls_line,
    select_base_point,
    to_global,
    weighted_centroid,
)
from rosetteseg.synthetic import SceneSpec, generate_scene
from rosetteseg.tiling import nms_merge
from rosetteseg.model import CandidateMask

CFG = PipelineConfig()


class TestDeterminism:
    def test_same_seed_is_byte_identical(self):
        a = generate_scene(SceneSpec(plants=4, seed=11, duplicate_prob=0.3,
                                     boundary_prob=0.3, attention_noise=0.05))
        b = generate_scene(SceneSpec(plants=4, seed=11, duplicate_prob=0.3,
                                     boundary_prob=0.3, attention_noise=0.05))
        assert canonical_dumps(a[0]) == canonical_dumps(b[0])
        assert canonical_dumps(a[2]) == canonical_dumps(b[2])
        assert sorted(a[1]) == sorted(b[1])
        for name in a[1]:
            assert np.array_equal(a[1][name], b[1][name])

    def test_different_seeds_differ(self):
        a = generate_scene(SceneSpec(plants=4, seed=1))
        b = generate_scene(SceneSpec(plants=4, seed=2))
        assert canonical_dumps(a[0]) != canonical_dumps(b[0])


class TestSpecValidation:
    def test_zero_plants_gives_empty_scene(self):
        scene_doc, attention, gt_doc = generate_scene(SceneSpec(plants=0, seed=0))
        assert scene_doc["candidates"] == []
        assert attention == {}
        assert gt_doc["leaves"] == [] and gt_doc["plants"] == []

    def test_negative_plants_rejected(self):
        with pytest.raises(SpecInfeasibleError):
            SceneSpec(plants=-1)

    def test_bad_probability_rejected(self):
        with pytest.raises(SpecInfeasibleError):
            SceneSpec(duplicate_prob=1.5)

    def test_infeasible_density_rejected(self):
        # far too many plants for the separation constraint to be satisfiable
        with pytest.raises(SpecInfeasibleError):
            generate_scene(SceneSpec(image_size=1000, plants=100,
                                     center_separation_eps=4.0, seed=0))


class TestGroundTruthGeometry:
    def scene(self, seed=0):
        return generate_scene(SceneSpec(plants=6, seed=seed))

    def test_plant_masks_pairwise_disjoint(self):
        for seed in range(3):
            _, _, gt = self.scene(seed)
            masks = [BinaryMask.from_rle_dict(p["rle"]) for p in gt["plants"]]
            for i in range(len(masks)):
                for j in range(i + 1, len(masks)):
                    assert intersection_area(masks[i], masks[j]) == 0

    def test_plant_mask_is_union_of_its_leaves(self):
        _, _, gt = self.scene()
        leaf_masks = {e["id"]: BinaryMask.from_rle_dict(e["rle"]) for e in gt["leaves"]}
        for p in gt["plants"]:
            union = np.zeros(0, dtype=np.int64)
            for lid in p["leaf_ids"]:
                union = np.union1d(union, leaf_masks[lid].foreground_indices())
            pm = BinaryMask.from_rle_dict(p["rle"])
            assert np.array_equal(pm.foreground_indices(), union)

    def test_base_and_tip_near_leaf_mask(self):
        _, _, gt = self.scene()
        leaf_masks = {e["id"]: BinaryMask.from_rle_dict(e["rle"]) for e in gt["leaves"]}
        for stem in gt["stems"]:
            m = leaf_masks[stem["leaf_id"]]
            xs, ys = m.foreground_xy()
            for pt in (stem["base"], stem["tip"]):
                d = np.hypot(xs + 0.5 - pt[0], ys + 0.5 - pt[1]).min()
                assert d <= 2.0

    def test_base_is_inner_vertex(self):
        # the base must sit between the plant center and the tip
        _, _, gt = self.scene()
        centers = {p["id"]: p["leaf_ids"] for p in gt["plants"]}
        plant_center = {}
        for p in gt["plants"]:
            for lid in p["leaf_ids"]:
                plant_center[lid] = p["center"]
        for stem in gt["stems"]:
            c = plant_center[stem["leaf_id"]]
            d_base = math.hypot(stem["base"][0] - c[0], stem["base"][1] - c[1])
            d_tip = math.hypot(stem["tip"][0] - c[0], stem["tip"][1] - c[1])
            assert d_base < d_tip


class TestCandidates:
    def test_every_candidate_has_valid_rle_and_scores(self):
        scene_doc, attention, _ = generate_scene(
            SceneSpec(plants=4, seed=3, duplicate_prob=1.0, boundary_prob=1.0))
        for c in scene_doc["candidates"]:
            m = BinaryMask.from_rle_dict(c["rle"])
            assert m.area > 0
            assert 0.0 < c["score"] <= 1.0
            assert set(c["class_scores"]) == {"green leaf", "soil"}

    def test_duplicates_are_count_preserving_under_nms(self):
        scene_doc, _, gt = generate_scene(SceneSpec(plants=6, seed=4, duplicate_prob=1.0))
        # lift every full candidate to global coordinates via its window
        from rosetteseg.tiling import lift_and_reject, plan_windows

        meta = ImageMeta(width=scene_doc["image"]["width"],
                         height=scene_doc["image"]["height"])
        windows = {w.id: w for w in plan_windows(meta, CFG)}
        lifted = []
        for c in scene_doc["candidates"]:
            cand = CandidateMask(id=c["id"], mask=BinaryMask.from_rle_dict(c["rle"]),
                                 score=c["score"])
            got = lift_and_reject(cand, windows[c["window_id"]], meta)
            if got is not None:
                lifted.append(got)
        merged = nms_merge(lifted, CFG)
        assert len(merged) == len(gt["leaves"])

    def test_attention_files_cover_full_candidates(self):
        scene_doc, attention, _ = generate_scene(SceneSpec(plants=3, seed=5))
        referenced = {int(n.split("_")[1]) for n in attention}
        ids = {c["id"] for c in scene_doc["candidates"]}
        assert referenced <= ids
        # each referenced candidate carries all four pyramid levels
        for cid in referenced:
            assert {f"att_{cid}_L{k}.f32grid" for k in range(4)} <= set(attention)


class TestRidgeOrientation:
    def test_noiseless_ridge_axis_matches_stem(self):
        scene_doc, attention, gt = generate_scene(SceneSpec(plants=4, seed=6))
        meta = ImageMeta(width=scene_doc["image"]["width"],
                         height=scene_doc["image"]["height"])
        gt_stems = {s["leaf_id"]: s for s in gt["stems"]}
        checked = 0
        for e in gt["leaves"]:
            mask = BinaryMask.from_rle_dict(e["rle"])
            leaf = LeafInstance(id=e["id"], mask=mask, score=1.0)
            # attention ids correspond to candidates, not gt ids, so rebuild
            # the ridge directly from the generator's geometry
            from rosetteseg.synthetic import _attention_levels
            rng = np.random.default_rng(0)
            s = gt_stems[e["id"]]
            levels = _attention_levels(mask, tuple(s["base"]), tuple(s["tip"]),
                                       meta, CFG, 0.0, rng)
            t, grid = crop_leaf(leaf, meta, CFG)
            amap = aggregate_attention(
                MultiResAttention(leaf_id=e["id"],
                                  levels=[lv.astype(np.float64) for lv in levels]), CFG)
            line = fit_wls_line(amap)
            e1, e2 = clip_segment_to_mask(line, grid)
            base_g, tip_g = select_base_point(e1, e2, weighted_centroid(amap))
            bx, by = to_global(t, base_g)
            tx, ty = to_global(t, tip_g)
            true_angle = math.atan2(s["tip"][1] - s["base"][1], s["tip"][0] - s["base"][0])
            got_angle = math.atan2(ty - by, tx - bx)
            diff = abs((got_angle - true_angle + math.pi) % (2 * math.pi) - math.pi)
            assert diff <= math.radians(3.0)
            checked += 1
        assert checked >= 10
