import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxdet.geometry import (
    BBox,
    RelationConfig,
    boundary_relations,
    central_relations,
    distance_relation,
    iou,
    overlap_relation,
    relation_bits,
    scale_relation,
)


def box(x, y, w, h):
    return BBox(float(x), float(y), float(w), float(h))


int_boxes = st.builds(
    box,
    st.integers(-50, 50),
    st.integers(-50, 50),
    st.integers(1, 30),
    st.integers(1, 30),
)


class TestBBox:
    def test_properties(self):
        b = box(2, 3, 4, 3)
        assert (b.right, b.bottom, b.area) == (6.0, 6.0, 12.0)
        assert b.diagonal == 5.0

    @pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (-1, 5), (5, -2)])
    def test_rejects_non_positive_extent(self, w, h):
        with pytest.raises(ValueError):
            box(0, 0, w, h)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BBox(float("nan"), 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            BBox(0.0, 0.0, float("inf"), 1.0)


class TestIou:
    def test_half_offset(self):
        # 5x10 intersection over 150 union
        assert abs(iou(box(0, 0, 10, 10), box(5, 0, 10, 10)) - 1 / 3) < 1e-12

    def test_identical(self):
        assert iou(box(3, 4, 7, 2), box(3, 4, 7, 2)) == 1.0

    def test_disjoint_and_touching(self):
        assert iou(box(0, 0, 10, 10), box(20, 0, 5, 5)) == 0.0
        # shared edge has zero area
        assert iou(box(0, 0, 10, 10), box(10, 0, 5, 5)) == 0.0

    def test_matches_unit_pixel_count(self):
        import numpy as np

        rng = np.random.default_rng(7)
        for _ in range(1500):
            ax, ay, bx, by = rng.integers(-20, 20, 4)
            aw, ah, bw, bh = rng.integers(1, 15, 4)
            a = box(ax, ay, aw, ah)
            b = box(bx, by, bw, bh)
            cells_a = {(i, j) for i in range(ax, ax + aw) for j in range(ay, ay + ah)}
            cells_b = {(i, j) for i in range(bx, bx + bw) for j in range(by, by + bh)}
            expected = len(cells_a & cells_b) / len(cells_a | cells_b)
            assert abs(iou(a, b) - expected) < 1e-9

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)


class TestBoundary:
    def test_clearly_separated(self):
        # ref sits fully above obj: bottom edge 10 < obj top 30
        assert boundary_relations(box(0, 0, 10, 10), box(0, 30, 10, 10)) == (1, 0, 0, 0)
        assert boundary_relations(box(0, 30, 10, 10), box(0, 0, 10, 10)) == (0, 1, 0, 0)
        assert boundary_relations(box(0, 0, 10, 10), box(30, 0, 10, 10)) == (0, 0, 1, 0)
        assert boundary_relations(box(30, 0, 10, 10), box(0, 0, 10, 10)) == (0, 0, 0, 1)

    def test_touching_edges_do_not_count(self):
        # strict inequality: bottom == top is neither above nor below
        assert boundary_relations(box(0, 0, 10, 10), box(0, 10, 10, 10)) == (0, 0, 0, 0)

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_antisymmetry(self, r, o):
        above, below, left, right = boundary_relations(r, o)
        o_above, o_below, o_left, o_right = boundary_relations(o, r)
        assert above == o_below and below == o_above
        assert left == o_right and right == o_left

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_exclusive_pairs(self, r, o):
        above, below, left, right = boundary_relations(r, o)
        assert not (above and below)
        assert not (left and right)


class TestCentral:
    def test_above(self):
        # half-sum 2 < 3 and ref starts higher
        assert central_relations(box(0, 0, 10, 4), box(0, 2, 10, 4)) == (1, 0, 0, 0)

    def test_right(self):
        assert central_relations(box(4, 0, 4, 10), box(0, 0, 4, 10)) == (0, 0, 0, 1)

    def test_guard_blocks_direction(self):
        # half-sums differ but ref does not start higher, so above stays off
        assert central_relations(box(0, 5, 10, 4), box(0, 2, 10, 10))[0] == 0

    def test_literal_and_midpoint_forms_differ(self):
        r = box(0, 0, 8, 10)
        o = box(0, 6, 8, 2)
        # literal half-sums: (0+10)/2=5 vs (6+2)/2=4 -> below
        assert central_relations(r, o, form="literal") == (0, 1, 0, 0)
        # geometric midpoints: 5 vs 7 -> above
        assert central_relations(r, o, form="midpoint") == (1, 0, 0, 0)

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_exclusive_pairs(self, r, o):
        above, below, left, right = central_relations(r, o)
        assert not (above and below)
        assert not (left and right)


class TestScale:
    @pytest.mark.parametrize(
        "ref,obj,expected",
        [
            (box(0, 0, 100, 100), box(0, 0, 103, 103), "equal"),  # 3% within eps
            (box(0, 0, 100, 100), box(0, 0, 110, 110), "smaller"),
            (box(0, 0, 110, 110), box(0, 0, 100, 100), "larger"),
            (box(0, 0, 5, 5), box(50, 50, 5, 5), "equal"),
        ],
    )
    def test_diagonal_comparison(self, ref, obj, expected):
        assert scale_relation(ref, obj) == expected

    def test_eps_zero_breaks_near_ties(self):
        assert scale_relation(box(0, 0, 100, 100), box(0, 0, 103, 103), eps=0.0) == "smaller"

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_antisymmetry_without_tolerance(self, r, o):
        fwd = scale_relation(r, o, eps=0.0)
        back = scale_relation(o, r, eps=0.0)
        assert {("larger", "smaller"), ("smaller", "larger"), ("equal", "equal")} >= {(fwd, back)}


class TestDistance:
    def test_near_when_gap_below_diagonal(self):
        # gap 5 - 0 = 5 equals the 3-4-5 diagonal: ties count as near
        assert distance_relation(box(5, 0, 3, 4), box(-2, 0, 2, 2)) == "near"

    def test_far_beyond_diagonal(self):
        assert distance_relation(box(5, 0, 3, 4), box(-10, 0, 2, 2)) == "far"

    def test_object_on_the_right_is_near(self):
        # the gap formula is one-sided: negative gap always reads near
        assert distance_relation(box(0, 0, 3, 4), box(100, 0, 2, 2)) == "near"


class TestOverlap:
    def test_threshold_mode_boundary(self):
        # IoU exactly 0.5 counts as overlapping
        assert overlap_relation(box(0, 0, 2, 1), box(0, 0, 1, 1)) == "yes"
        assert overlap_relation(box(0, 0, 3, 1), box(0, 0, 1, 1)) == "no"

    def test_any_positive_mode(self):
        a, sliver = box(0, 0, 10, 10), box(9, 9, 10, 10)
        assert overlap_relation(a, sliver) == "no"
        assert overlap_relation(a, sliver, mode="any_positive") == "yes"
        assert overlap_relation(a, box(10, 0, 5, 5), mode="any_positive") == "no"


class TestRelationBits:
    def test_worked_example(self):
        """Small ref far above a larger obj: the full 16-bit picture."""
        bits = relation_bits(box(0, 0, 3, 4), box(0, 20, 6, 8), RelationConfig())
        assert bits.as_dict() == {
            "cooccur": 1,
            "overlap_yes": 0,
            "overlap_no": 1,
            "larger": 0,
            "smaller": 1,
            "equal": 0,
            "b_above": 1,
            "b_below": 0,
            "b_left": 0,
            "b_right": 0,
            "c_above": 1,
            "c_below": 0,
            "c_left": 0,
            "c_right": 0,
            "near": 1,
            "far": 0,
        }

    def test_inactive_families_stay_zero(self):
        config = RelationConfig(
            overlapping=False, scale=False, boundary=False, central=False, nearfar=False
        )
        bits = relation_bits(box(0, 0, 3, 4), box(0, 20, 6, 8), config)
        assert bits.as_dict() == {name: int(name == "cooccur") for name in bits.as_dict()}

    @given(int_boxes, int_boxes)
    @settings(deadline=None)
    def test_one_hot_families(self, r, o):
        bits = relation_bits(r, o, RelationConfig())
        assert bits.cooccur == 1
        assert bits.overlap_yes + bits.overlap_no == 1
        assert bits.larger + bits.smaller + bits.equal == 1
        assert bits.near + bits.far == 1


class TestRelationConfig:
    def test_active_layout_order(self):
        config = RelationConfig()
        assert config.features_per_class() == 16
        assert config.active_feature_names()[:3] == ("cooccur", "overlap_yes", "overlap_no")
        assert config.active_feature_names()[-2:] == ("near", "far")

    def test_disabling_a_family_shrinks_the_block(self):
        assert RelationConfig(scale=False).features_per_class() == 13
        assert RelationConfig(
            cooccurrence=False, overlapping=False, scale=False, central=False, nearfar=False
        ).features_per_class() == 4

    def test_all_inactive_rejected(self):
        with pytest.raises(ValueError):
            RelationConfig(
                cooccurrence=False,
                overlapping=False,
                scale=False,
                boundary=False,
                central=False,
                nearfar=False,
            )

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"eps_scale": -0.1},
            {"overlap_threshold": 1.5},
            {"overlap_mode": "sometimes"},
            {"central_form": "weird"},
        ],
    )
    def test_rejects_bad_knobs(self, kwargs):
        with pytest.raises(ValueError):
            RelationConfig(**kwargs)

    def test_dict_round_trip(self):
        config = RelationConfig(eps_scale=0.1, overlap_mode="any_positive")
        assert RelationConfig.from_dict(config.to_dict()) == config
        with pytest.raises(ValueError):
            RelationConfig.from_dict({"unknown_knob": 1})
