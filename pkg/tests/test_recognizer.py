import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from teachset.recognizer import (
    DONT_KNOW,
    FileExtractor,
    Model,
    PooledExtractor,
    RejectionConfig,
    TrainConfig,
    _augment,
    cross_evaluate,
    decide,
    entropy,
    evaluate,
    extract_features,
    extractor_from_spec,
    is_correct,
    loss_and_gradient,
    predict,
    predict_confidences,
    softmax_rows,
    train,
)
from teachset.detect import image_key

from helpers import solid


def numeric_gradient(w, xa, y, h=1e-6):
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        g[idx] = (loss_and_gradient(wp, xa, y)[0] - loss_and_gradient(wm, xa, y)[0]) / (2 * h)
    return g


def cross_entropy_loops(w, xa, y):
    # per-sample softmax written out without vectorization
    total = 0.0
    for x, t in zip(xa, y):
        s = [sum(wi * xi for wi, xi in zip(row, x)) for row in w]
        m = max(s)
        total += -(s[t] - m - math.log(sum(math.exp(v - m) for v in s)))
    return total / len(y)


def test_features_of_black_white_and_split():
    assert np.all(extract_features(solid(32, 32, (0, 0, 0))) == 0)
    assert np.all(extract_features(solid(32, 32, (255, 255, 255))) == 1)
    img = solid(32, 32, (0, 0, 255))
    img[:, :16] = (255, 0, 0)
    f = extract_features(img).reshape(3, 8, 8)
    assert f.shape == (3, 8, 8)
    assert np.all(f[0][:, :4] == 1) and np.all(f[0][:, 4:] == 0)
    assert np.all(f[2][:, 4:] == 1) and np.all(f[2][:, :4] == 0)
    assert np.all(f[1] == 0)


def test_pooling_matches_block_means():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, (40, 24, 3), dtype=np.uint8)
    f = PooledExtractor(4)(img).reshape(3, 4, 4)
    blocks = img.reshape(4, 10, 4, 6, 3).mean(axis=(1, 3)) / 255.0
    assert np.allclose(f, np.moveaxis(blocks, -1, 0))
    assert PooledExtractor().dim == 192


def test_file_extractor_and_spec():
    img = solid(4, 4, (1, 2, 3))
    fx = FileExtractor({image_key(img): [0.5, 0.25]})
    assert fx(img).tolist() == [0.5, 0.25]
    with pytest.raises(KeyError):
        fx(solid(4, 4, (9, 9, 9)))
    assert isinstance(extractor_from_spec({"id": "pool", "grid": 4}), PooledExtractor)
    with pytest.raises(ValueError):
        extractor_from_spec({"id": "cnn"})


def test_softmax_examples():
    c = softmax_rows(np.array([[10.0, 0.0, 0.0]]))[0]
    assert c == pytest.approx([0.99990920, 4.5395e-5, 4.5395e-5], rel=1e-4)
    assert softmax_rows(np.array([[1000.0, 0.0]]))[0].tolist() == [1.0, 0.0]
    m = Model(["a", "b", "c"], np.zeros((3, 5)))
    assert predict_confidences(m, np.ones(4)) == pytest.approx([1 / 3] * 3)
    with pytest.raises(ValueError):
        predict_confidences(m, np.ones(3))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
def test_confidences_are_a_distribution(scores):
    c = softmax_rows(np.array([scores]))[0]
    assert abs(c.sum() - 1) <= 1e-9
    assert np.all(c > 0)


def test_entropy_examples():
    assert entropy([1 / 3] * 3) == pytest.approx(math.log(3), abs=1e-12)
    assert entropy([0.9, 0.05, 0.05]) == pytest.approx(0.3944, abs=5e-5)
    assert entropy([1 - 2e-12, 1e-12, 1e-12]) < 1e-9
    assert entropy([0.5, 0.5], "base-2") == pytest.approx(1.0)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=6))
def test_entropy_bounded_by_log_k(scores):
    c = softmax_rows(np.array([scores]))[0]
    assert entropy(c) <= math.log(len(c)) + 1e-12
    assert entropy(c, "base-2") <= math.log2(len(c)) + 1e-12


def test_decide_examples():
    assert decide([1 / 3] * 3).outcome == DONT_KNOW
    assert decide([0.9, 0.05, 0.05], labels=["x", "y", "z"]).outcome == "x"
    assert decide([0.39, 0.31, 0.30]).outcome == DONT_KNOW
    assert decide([0.4, 0.3, 0.3]).outcome == "0"  # 0.4 is not lower than 0.4


def test_entropy_clause_alone():
    # many classes: a 0.45 top confidence but entropy above 2.0 nats
    c = [0.45] + [0.55 / 40] * 40
    assert entropy(c) > 2.0
    assert decide(c).outcome == DONT_KNOW
    assert decide(c, RejectionConfig(entropy_threshold=10)).outcome == "0"


def test_entropy_clause_unreachable_for_three_classes():
    # max entropy over 3 classes is ln 3 (nats) or log2 3 (bits), both below 2.0
    assert math.log(3) < 2.0 and math.log2(3) < 2.0
    for a, b in itertools.product(np.linspace(0.001, 0.998, 60), repeat=2):
        if a + b >= 1:
            continue
        c = [a, b, 1 - a - b]
        assert entropy(c) <= 2.0
        assert entropy(c, "base-2") <= 2.0


def test_decide_ties_go_to_class_order():
    assert decide([0.45, 0.45, 0.1], labels=["a", "b", "c"]).outcome == "a"


@given(st.lists(st.floats(0.01, 1), min_size=3, max_size=3), st.permutations([0, 1, 2]))
def test_decide_relabeling_covariant(raw, perm):
    c = np.array(raw) / sum(raw)
    if len(set(np.round(c, 12))) < 3:
        return
    labels = ["a", "b", "c"]
    p1 = decide(c, labels=labels)
    p2 = decide(c[list(perm)], labels=[labels[i] for i in perm])
    assert p1.outcome == p2.outcome


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    k, d, n = int(rng.integers(2, 4)), int(rng.integers(1, 6)), int(rng.integers(3, 9))
    xa = _augment(rng.normal(size=(n, d)))
    y = rng.integers(0, k, n)
    w = rng.normal(size=(k, d + 1))
    loss, g = loss_and_gradient(w, xa, y)
    assert loss == pytest.approx(cross_entropy_loops(w, xa, y), rel=1e-12)
    num = numeric_gradient(w, xa, y)
    assert np.linalg.norm(g - num) <= 1e-5 * max(np.linalg.norm(num), 1e-8)


def _clusters(rng, n=20):
    a = rng.normal(0.2, 0.05, (n, 6))
    b = rng.normal(0.8, 0.05, (n, 6))
    return [(x, "a") for x in a] + [(x, "b") for x in b]


def test_separable_clusters_train_to_perfect_accuracy():
    rng = np.random.default_rng(0)
    data = _clusters(rng)
    m = train(data)
    preds = [m.labels[int(np.argmax(predict_confidences(m, x)))] for x, _ in data]
    assert preds == [lbl for _, lbl in data]
    assert len(m.loss_history) == 501
    assert all(b <= a for a, b in zip(m.loss_history, m.loss_history[1:]))


def test_duplicated_dataset_gives_same_weights():
    rng = np.random.default_rng(1)
    data = _clusters(rng, 7)
    a = train(data)
    b = train(data + data)
    assert np.max(np.abs(a.weights - b.weights)) <= 1e-12


def test_train_errors():
    with pytest.raises(ValueError):
        train([(np.ones(3), "a"), (np.zeros(3), "a")])
    with pytest.raises(ValueError):
        train([(np.ones(3), "a"), (np.zeros(4), "b")])
    with pytest.raises(ValueError):
        train([])
    with pytest.raises(ValueError):
        train([(np.ones(3), "a"), (np.zeros(3), "b")], labels=["a", "b", "c"])
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)


def test_training_is_deterministic():
    rng = np.random.default_rng(3)
    data = _clusters(rng, 5)
    assert np.array_equal(train(data).weights, train(data).weights)


def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    m = train(_clusters(rng, 4), TrainConfig(20, 0.01), {"id": "pool", "grid": 8})
    m.save(tmp_path / "m.json")
    back = Model.load(tmp_path / "m.json")
    assert back.labels == m.labels and np.array_equal(back.weights, m.weights)
    assert back.train_config == m.train_config
    bad = m.to_json()
    bad["version"] = 99
    with pytest.raises(ValueError):
        Model.from_json(bad)


def _image_model():
    red, blue = solid(16, 16, (255, 0, 0)), solid(16, 16, (0, 0, 255))
    fx = PooledExtractor(2)
    m = train([(fx(red), "red"), (fx(blue), "blue")], TrainConfig(500, 0.5), fx.spec())
    return m, red, blue


def test_evaluate_and_abstention_accounting():
    m, red, blue = _image_model()
    assert evaluate(m, [(red, "red"), (blue, "blue")]).accuracy == 1.0
    assert evaluate(m, [(red, "red"), (blue, "blue"), (red, "blue")]).accuracy == pytest.approx(2 / 3)
    strict = RejectionConfig(confidence_threshold=1.01)
    ev = evaluate(m, [(red, "red"), (blue, "blue")], strict)
    assert ev.accuracy == 0.0 and {o for _, o, _ in ev.outcomes} == {DONT_KNOW}
    assert is_correct(m, "ghost", DONT_KNOW)
    with pytest.raises(ValueError):
        evaluate(m, [])


def test_predict_uses_model_extractor():
    m, red, _ = _image_model()
    p = predict(m, red)
    assert p.outcome == "red"
    assert set(p.to_json()) == {"outcome", "confidences", "entropy"}


def test_cross_evaluate_shapes():
    m, red, blue = _image_model()
    sets = {"own": [(red, "red")], "other": [(blue, "blue"), (red, "blue")]}
    grid = cross_evaluate([m, m], sets)
    assert grid == [[1.0, 0.5], [1.0, 0.5]]
    assert cross_evaluate([m], {"own": [(red, "red")]}) == [[evaluate(m, [(red, "red")]).accuracy]]
    assert cross_evaluate([], sets) == []
    other = Model(["x", "y"], np.zeros((2, m.weights.shape[1])), m.extractor)
    with pytest.raises(ValueError):
        cross_evaluate([m, other], sets)
