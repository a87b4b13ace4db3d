import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_operator
from vsgraph.anchors import (
    enhance_metadata,
    load_anchors,
    multi_label_anchor_sets,
    save_anchors,
    score_all_labels,
    score_anchors,
    select_anchors,
)
from vsgraph.errors import ArgumentError, ShapeError
from vsgraph.graph import graph_from_edges, knn_graph, normalize

R = np.sqrt(0.5)


def brute_top_m(scores, labels, m, c):
    members = [i for i in range(len(labels)) if labels[i] == c]
    members.sort(key=lambda i: (-scores[i], i))
    return members[:m]


def test_enhance_swap():
    S = normalize(graph_from_edges(2, [0, 1], [1, 0], [1.0, 1.0]), 0.0)
    t = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert enhance_metadata(S, t).tolist() == [[0.0, 2.0], [1.0, 0.0]]


def test_enhance_isolated_self_only():
    S = normalize(graph_from_edges(1, [], [], []), 1.0)
    assert enhance_metadata(S, np.array([[3.0, 4.0]])).tolist() == [[3.0, 4.0]]


def test_enhance_path_matches_dense():
    g = graph_from_edges(3, [0, 1, 1, 2], [1, 0, 2, 1], [R] * 4)
    t = np.random.default_rng(0).normal(size=(3, 5))
    ref = dense_operator(g.dense(), 0.0) @ t
    np.testing.assert_allclose(enhance_metadata(normalize(g, 0.0), t), ref, rtol=1e-12)


def test_enhance_shape_mismatch():
    S = normalize(graph_from_edges(2, [0, 1], [1, 0], [1.0, 1.0]), 0.0)
    with pytest.raises(ShapeError):
        enhance_metadata(S, np.ones((3, 2)))


def test_scores():
    l = np.array([[1.0, 0.0], [0.0, 3.0]])
    t = np.array([[2.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    s = score_anchors(t, l, np.array([0, 1, 0, 1]))
    np.testing.assert_allclose(s[:3], [1.0, 0.0, 0.7071067811865476], rtol=1e-12)
    assert s[3] == -1.0


def test_score_dim_mismatch():
    with pytest.raises(ShapeError):
        score_anchors(np.ones((2, 3)), np.ones((2, 2)), np.array([0, 1]))


def test_select_tie_break():
    scores = np.zeros(10)
    labels = np.full(10, 1)
    labels[[4, 7, 2, 9]] = 0
    scores[[4, 7, 2, 9]] = [0.9, 0.8, 0.8, 0.1]
    a = select_anchors(scores, labels, 2, 2)
    chosen = a.samples[a.classes == 0].tolist()
    assert sorted(chosen) == [2, 4]
    assert a.per_class_threshold[0] == 0.8


def test_select_saturates_small_class():
    labels = np.array([0, 0, 0, 1, 1, 1, 1])
    with pytest.warns(UserWarning, match="class 0"):
        a = select_anchors(np.arange(7, dtype=float), labels, 4, 2)
    assert sorted(a.samples[a.classes == 0].tolist()) == [0, 1, 2]
    assert a.class_counts().tolist() == [3, 4]


def test_select_empty_class_warns():
    with pytest.warns(UserWarning, match="no samples"):
        a = select_anchors(np.ones(3), np.array([0, 0, 2]), 1, 3)
    assert np.isnan(a.per_class_threshold[1])
    assert len(a) == 2


def test_select_bad_m():
    with pytest.raises(ArgumentError):
        select_anchors(np.ones(2), np.array([0, 1]), 0, 2)


def test_two_classes_match_full_sort():
    rng = np.random.default_rng(9)
    labels = rng.integers(0, 2, 40)
    scores = np.round(rng.uniform(-1, 1, 40), 1)  # rounding forces ties
    a = select_anchors(scores, labels, 5, 2)
    for c in range(2):
        assert a.samples[a.classes == c].tolist() == brute_top_m(scores, labels, 5, c)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 5))
def test_selection_invariants(seed, m, C):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    labels = rng.integers(0, C, n)
    scores = np.round(rng.uniform(-1, 1, n), 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = select_anchors(scores, labels, m, C)
        b = select_anchors(np.exp(3 * scores), labels, m, C)  # strictly monotone map
    pops = np.bincount(labels, minlength=C)
    assert len(a) == np.minimum(m, pops).sum()
    assert np.array_equal(a.samples, b.samples)
    for c in range(C):
        chosen = set(a.samples[a.classes == c].tolist())
        assert len(chosen) == min(m, pops[c])
        assert all(labels[i] == c for i in chosen)
        if not chosen:
            continue
        tau = a.per_class_threshold[c]
        for i in np.flatnonzero(labels == c):
            if i in chosen:
                assert scores[i] >= tau
            else:
                assert scores[i] <= tau


def test_multi_label_shared_anchor():
    web = np.array([[1, 1, 0], [1, 0, 0], [0, 1, 0]])
    scores = np.array([[0.9, 0.9, 0.0], [0.5, 0.1, 0.2], [0.3, 0.4, 0.1]])
    with pytest.warns(UserWarning, match="label 2"):
        a = multi_label_anchor_sets(scores, web, 1)
    pairs = set(zip(a.samples.tolist(), a.classes.tolist()))
    assert pairs == {(0, 0), (0, 1)}
    assert np.isnan(a.per_class_threshold[2])


def test_multi_label_matches_brute_force():
    rng = np.random.default_rng(4)
    web = (rng.random((5, 3)) < 0.6).astype(np.uint8)
    web[0] = 1
    scores = rng.uniform(-1, 1, (5, 3))
    a = multi_label_anchor_sets(scores, web, 2)
    for c in range(3):
        members = sorted(np.flatnonzero(web[:, c]).tolist(), key=lambda i: (-scores[i, c], i))[:2]
        assert a.samples[a.classes == c].tolist() == members


def test_score_all_labels_consistent():
    rng = np.random.default_rng(2)
    t, l = rng.normal(size=(8, 4)), rng.normal(size=(3, 4))
    y = rng.integers(0, 3, 8)
    table = score_all_labels(t, l)
    np.testing.assert_allclose(table[np.arange(8), y], score_anchors(t, l, y), rtol=1e-12)


def test_anchor_file_round_trip(tmp_path):
    scores = np.array([0.3, 0.1, 0.7, 0.2])
    with pytest.warns(UserWarning):
        a = select_anchors(scores, np.array([0, 0, 1, 1]), 1, 3)
    save_anchors(a, tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "sample_id,class_id,score"
    b = load_anchors(tmp_path / "a.csv")
    assert b.samples.tolist() == a.samples.tolist()
    assert b.scores.tolist() == a.scores.tolist()
    assert b.m == 1 and b.class_count == 3
    assert np.isnan(b.per_class_threshold[2])


def test_enhancement_excludes_adversarial_sample():
    """One sample per cluster carries another label's description as metadata."""
    rng = np.random.default_rng(0)
    C, per, d = 3, 12, 8
    visual = np.eye(d)[:C] * 5
    text = np.eye(d)[C:2 * C]
    concept = np.repeat(np.arange(C), per)
    features = visual[concept] + rng.normal(scale=0.1, size=(C * per, d))
    metadata = text[concept] + rng.normal(scale=0.1, size=(C * per, d))
    web = concept.copy()
    bad = np.array([0, per, 2 * per])
    # the bad sample is visually in cluster c but web-labelled c+1 with matching metadata
    web[bad] = (concept[bad] + 1) % C
    metadata[bad] = text[web[bad]]
    m = 5
    raw = select_anchors(score_anchors(metadata, text, web), web, m, C)
    assert set(bad.tolist()) <= set(raw.samples.tolist())

    op = normalize(knn_graph(features, 5), 0.0)
    enhanced = enhance_metadata(op, metadata)
    a = select_anchors(score_anchors(enhanced, text, web), web, m, C)
    assert not set(bad.tolist()) & set(a.samples.tolist())
    assert a.precision(concept) == 1.0
