import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from teachset.geometry import BBox
from teachset.metrics import (
    DESCRIPTOR_PAIRINGS,
    PhotoAnnotation,
    SetAnnotationSummary,
    annotated_size_variation,
    annotated_small,
    correlate_descriptors,
    pearson,
    shannon_wiener,
    summarize_annotations,
)
from teachset.setdesc import SetDescriptors


def test_shannon_examples():
    assert shannon_wiener(["a"] * 7) == 0.0
    assert shannon_wiener(["a"] * 10 + ["b"] * 10 + ["c"] * 10) == pytest.approx(1.0986122887, abs=1e-9)
    assert shannon_wiener(["a", "b"]) == pytest.approx(0.6931471806, abs=1e-9)
    with pytest.raises(ValueError):
        shannon_wiener([])


@pytest.mark.parametrize("k", [1, 2, 3, 10])
def test_shannon_equal_groups_is_ln_k(k):
    assert abs(shannon_wiener([g for g in range(k) for _ in range(4)]) - math.log(k)) <= 1e-12


@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.randoms())
def test_shannon_permutation_invariant_and_bounded(groups, rnd):
    shuffled = list(groups)
    rnd.shuffle(shuffled)
    h = shannon_wiener(groups)
    assert shannon_wiener(shuffled) == pytest.approx(h, abs=1e-12)
    k = len(set(groups))
    assert h <= math.log(k) + 1e-12
    counts = [groups.count(g) for g in set(groups)]
    if len(set(counts)) == 1:
        assert h == pytest.approx(math.log(k), abs=1e-12)


def test_size_variation_examples():
    b = BBox(0.2, 0.2, 0.6, 0.6)
    assert annotated_size_variation([b, b, b]) == 0.0
    assert annotated_size_variation([None, BBox(0, 0, 1, 0.5)]) == pytest.approx(0.25)
    assert annotated_size_variation([None, None]) == 0.0
    with pytest.raises(ValueError):
        annotated_size_variation([])


def test_annotated_small():
    assert annotated_small(BBox(0, 0, 0.5, 0.2))
    assert not annotated_small(BBox(0, 0, 1, 0.5))
    assert not annotated_small(None)


def test_summary_counts():
    anns = [
        PhotoAnnotation(cropped=True, bbox=BBox(0, 0, 0.2, 0.2), background_group="a", perspective_group="+Z"),
        PhotoAnnotation(hand=True, blurry=True, bbox=BBox(0.1, 0.1, 0.9, 0.9), background_group="b",
                        perspective_group="+Z"),
        PhotoAnnotation(blurry=True, bbox=None, background_group="a", perspective_group="+X"),
    ]
    s = summarize_annotations(anns)
    assert (s.cropped_count, s.hand_count, s.blurry_count, s.small_count, s.photo_count) == (1, 1, 2, 1, 3)
    h = -(2 / 3) * math.log(2 / 3) - (1 / 3) * math.log(1 / 3)
    assert s.background_diversity == pytest.approx(h)
    assert s.perspective_diversity == pytest.approx(h)
    assert SetAnnotationSummary.from_json(s.to_json()) == s


def test_annotation_json_round_trip():
    a = PhotoAnnotation(True, False, True, BBox(0.1, 0.2, 0.3, 0.4), "room:-Z4", "+Z", 0.02)
    assert PhotoAnnotation.from_json(a.to_json()) == a
    assert "hand_fraction" not in PhotoAnnotation().to_json()


def test_pearson_examples():
    x = [1.0, 2.0, 4.0, 7.0]
    assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)
    assert pearson(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)
    assert pearson([3.0] * 4, x) is None
    assert pearson(x, [0.1] * 4) is None
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [1])


def test_pearson_against_numpy():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


series = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=20)


@given(series, st.floats(0.1, 10), st.floats(-50, 50), st.randoms())
def test_pearson_affine_invariance(xs, a, b, rnd):
    ys = [v + rnd.uniform(-10, 10) for v in xs]
    r = pearson(xs, ys)
    assume(r is not None and pearson([a * v + b for v in xs], ys) is not None)
    assert pearson([a * v + b for v in xs], ys) == pytest.approx(r, abs=1e-6)
    assert pearson([-v for v in xs], ys) == pytest.approx(-r, abs=1e-9)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=15), st.randoms())
def test_size_variation_order_free(fracs, rnd):
    boxes = [BBox(0, 0, 1, f) if f > 0 else None for f in fracs]
    shuffled = list(boxes)
    rnd.shuffle(shuffled)
    assert annotated_size_variation(shuffled) == pytest.approx(annotated_size_variation(boxes), abs=1e-12)


def _summary(size, persp, bg, flags):
    return SetDescriptors(size, persp, bg, flags, 30)


def _ann(size, bg, persp, cropped, hand, blurry, small=0):
    return SetAnnotationSummary(size, bg, persp, cropped, hand, blurry, small, 30)


def test_correlate_matched_scales_all_one():
    pairs = []
    for k in range(5):
        flags = {"small_object": 0.0, "cropped_object": 10.0 * k, "hand_in_photo": 5.0 * k,
                 "blurry_photo": 3.0 * k * k, "object_missing": 0.0}
        pairs.append((_summary(20.0 * k, 15.0 * (1 + k % 2), 7.0 * k, flags),
                      _ann(0.02 * k, 0.7 * k, 0.69 * (k % 2), 3 * k, 1.5 * k, 0.9 * k * k)))
    out = correlate_descriptors(pairs)
    assert set(out) == set(DESCRIPTOR_PAIRINGS)
    for name in ("variation_in_size", "variation_in_background", "variation_in_perspective",
                 "cropped_object", "hand_in_photo", "blurry_photo"):
        assert out[name].r == pytest.approx(1.0, abs=1e-12), name
        assert out[name].n == 5
    assert not out["small_object"].defined


def test_correlate_skips_unavailable_and_needs_two_pairs():
    flags = {k: 0.0 for k in ("small_object", "cropped_object", "hand_in_photo", "blurry_photo", "object_missing")}
    pairs = [(_summary(None, 15.0, None, flags), _ann(0.1, 0, 0, 0, 0, 0)),
             (_summary(10.0, 30.0, 5.0, flags), _ann(0.2, 1, 1, 0, 0, 0)),
             (_summary(20.0, 15.0, 9.0, flags), _ann(0.3, 2, 0, 0, 0, 0))]
    out = correlate_descriptors(pairs)
    assert out["variation_in_size"].n == 2
    assert out["variation_in_perspective"].n == 3
    with pytest.raises(ValueError):
        correlate_descriptors(pairs[:1])


def test_correlate_random_noise_is_defined():
    rng = np.random.default_rng(2)
    pairs = []
    for _ in range(12):
        flags = {k: float(rng.uniform(0, 100)) for k in
                 ("small_object", "cropped_object", "hand_in_photo", "blurry_photo", "object_missing")}
        pairs.append((_summary(*rng.uniform(0, 100, 3), flags),
                      _ann(*rng.uniform(0, 1, 3), *rng.integers(0, 30, 4))))
    out = correlate_descriptors(pairs)
    assert all(r.defined and -1 <= r.r <= 1 for r in out.values())
