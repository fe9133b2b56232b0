import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import make_dataset
from mhmmx.cvi import (
    CVI_COLUMNS, Clustering, calinski_harabasz, cvi_row, davies_bouldin_star, impute_patient_mean, silhouette,
)

FOUR = Clustering([0, 0, 1, 1], [[0, 0], [0, 2], [10, 0], [10, 2]])
FIVE = Clustering(["a", "a", "b", "b", "b"], [[0.0], [2.0], [5.0], [7.0], [9.0]])


def test_four_point_hand_values():
    assert calinski_harabasz(FOUR) == pytest.approx(10.0, abs=1e-12)
    assert davies_bouldin_star(FOUR) == pytest.approx(0.2, abs=1e-12)
    # a = 1 for every point (self included), b = mean(10, sqrt(104))
    b = (10 + math.sqrt(104)) / 2
    assert silhouette(FOUR) == pytest.approx((b - 1) / b, abs=1e-12)


def test_five_point_hand_values():
    # centroids 1 and 7, scatters 1 and 4/3, grand mean 4.6
    assert calinski_harabasz(FIVE) == pytest.approx(7.2, abs=1e-12)
    assert davies_bouldin_star(FIVE) == pytest.approx(7 / 18, abs=1e-12)
    terms = [Fraction(6, 7), Fraction(4, 5), Fraction(1, 2), Fraction(7, 9), Fraction(3, 4)]
    assert silhouette(FIVE) == pytest.approx(float(sum(terms) / 5), abs=1e-12)


def _direct(labels, Y):
    """Plain-loop transcription of the three printed formulas."""
    labels = list(labels)
    Y = [list(map(float, r)) for r in Y]
    N = len(Y)
    dist = lambda u, v: math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))
    ks = sorted(set(labels))
    members = {k: [i for i in range(N) if labels[i] == k] for k in ks}
    cent = {k: [sum(Y[i][t] for i in members[k]) / len(members[k]) for t in range(len(Y[0]))] for k in ks}
    grand = [sum(Y[i][t] for i in range(N)) / N for t in range(len(Y[0]))]
    scat = {k: sum(dist(Y[i], cent[k]) for i in members[k]) / len(members[k]) for k in ks}
    K = len(ks)
    ch = (N - K) / (K - 1) * sum(len(members[k]) * dist(grand, cent[k]) for k in ks) \
        / sum(len(members[k]) * scat[k] for k in ks)
    sil = 0.0
    for k in ks:
        for i in members[k]:
            a = sum(dist(Y[i], Y[j]) for j in members[k]) / len(members[k])
            b = min(sum(dist(Y[i], Y[j]) for j in members[l]) / len(members[l]) for l in ks if l != k)
            sil += (b - a) / max(a, b)
    sil /= N
    db = sum(max(scat[k] + scat[l] for l in ks if l != k) / min(dist(cent[k], cent[l]) for l in ks if l != k)
             for k in ks) / K
    return ch, sil, db


def test_matches_direct_script_on_random_clusterings():
    rng = np.random.default_rng(99)
    for _ in range(50):
        N = int(rng.integers(6, 25))
        K = int(rng.integers(2, 5))
        labels = np.concatenate([np.arange(K), rng.integers(0, K, N - K)])
        rng.shuffle(labels)
        Y = rng.normal(size=(N, int(rng.integers(1, 8)))) * 3
        c = Clustering(labels, Y)
        ch, sil, db = _direct(labels, Y)
        assert calinski_harabasz(c) == pytest.approx(ch, rel=1e-10)
        assert silhouette(c) == pytest.approx(sil, rel=1e-10, abs=1e-12)
        assert davies_bouldin_star(c) == pytest.approx(db, rel=1e-10)


def test_duplicated_points():
    c = Clustering([0, 0, 1, 1], [[1, 1], [1, 1], [5, 5], [5, 5]])
    assert silhouette(c) == 1.0
    assert davies_bouldin_star(c) == 0.0
    assert math.isnan(calinski_harabasz(c))


def test_invariances():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 3, 20)
    labels[:3] = [0, 1, 2]
    Y = rng.normal(size=(20, 5))
    base = Clustering(labels, Y)
    vals = np.array([f(base) for f in (calinski_harabasz, silhouette, davies_bouldin_star)])
    perm = rng.permutation(20)
    variants = [
        Clustering(labels[perm], Y[perm]),
        Clustering((labels + 1) % 3, Y),
        Clustering(labels, Y + rng.normal(size=5)),
        Clustering(labels, 7.5 * Y),
    ]
    for c in variants:
        got = np.array([f(c) for f in (calinski_harabasz, silhouette, davies_bouldin_star)])
        assert np.allclose(got, vals, rtol=1e-10)


def test_separation_and_scatter_monotonicity():
    rng = np.random.default_rng(2)
    Y = np.vstack([rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (10, 2))])
    labels = np.repeat([0, 1], 10)
    shuffled = rng.permutation(labels)
    assert calinski_harabasz(Clustering(labels, Y)) > calinski_harabasz(Clustering(shuffled, Y))
    cents = np.repeat([[0, 0], [5, 5]], 10, axis=0)
    wide = Clustering(labels, cents + (Y - cents) * 2)
    assert davies_bouldin_star(Clustering(labels, Y)) < davies_bouldin_star(wide)


def test_undefined_and_errors():
    c = Clustering([0, 1, 0, 1], [[0.0], [1.0], [1.0], [0.0]])  # coincident centroids
    assert math.isnan(davies_bouldin_star(c))
    one = Clustering([0, 0, 0], [[0.0], [1.0], [2.0]])
    for f in (calinski_harabasz, silhouette, davies_bouldin_star):
        with pytest.raises(ValueError):
            f(one)
    with pytest.raises(ValueError):
        Clustering([0, 1], [[np.nan], [1.0]])
    with pytest.raises(ValueError):
        Clustering([0, 1, 1], [[0.0], [1.0]])


def test_textbook_silhouette():
    # singleton contributes 0; others use |c_k| - 1
    c = Clustering([0, 0, 1], [[0.0], [2.0], [10.0]])
    a = 2.0
    b0, b1 = 10.0, 8.0
    expected = ((b0 - a) / b0 + (b1 - a) / b1 + 0.0) / 3
    assert silhouette(c, textbook=True) == pytest.approx(expected, abs=1e-12)


def test_imputation():
    Y = np.array([[1.0, -1, 3.0], [-1, -1, -1], [np.nan, 4.0, 4.0]])
    out = impute_patient_mean(Y)
    assert out[0].tolist() == [1.0, 2.0, 3.0]
    assert out[1].tolist() == [3.0] * 3  # panel mean of observed entries
    assert out[2].tolist() == [4.0] * 3
    with pytest.raises(ValueError):
        impute_patient_mean([[-1, -1]])


def test_cvi_row():
    X = np.zeros((4, 1))
    ds = make_dataset(X, [[0, 0], [0, 2], [4, 0], [4, 2]], [[1, 1], [1, -1], [3, 3], [2, 2]])
    row = cvi_row("mhmmx", [1, 1, 2, 2], ds)
    assert tuple(row) == CVI_COLUMNS
    assert row["subgroups"] == 2
    assert row["pain_ch"] == pytest.approx(calinski_harabasz(Clustering([1, 1, 2, 2], ds.yp)))
    single = cvi_row("one", [1, 1, 1, 1], ds)
    assert math.isnan(single["pain_sil"]) and math.isnan(single["disability_db_star"])
