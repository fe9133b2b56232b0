"""Cluster validity indices on observed trajectories, one symptom dimension at a time.

Formulas follow the printed definitions literally: Euclidean distances
are not squared in Calinski-Harabasz, the silhouette cohesion term
averages over the whole own cluster including the point itself, and the
Davies-Bouldin variant takes the maximum scatter sum over the minimum
centroid separation. Undefined values (zero denominators, coincident
centroids) come back as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import MISSING, Dataset


def impute_patient_mean(Y) -> np.ndarray:
    """Replace missing entries (NaN or the missing sentinel) by the patient's own mean.

    A patient with no observations at all takes the mean over all observed
    entries of the panel.
    """
    Y = np.asarray(Y, dtype=float).copy()
    Y[Y == MISSING] = np.nan
    obs = np.isfinite(Y)
    if not obs.any():
        raise ValueError("no observed entries")
    overall = Y[obs].mean()
    counts = obs.sum(axis=1)
    sums = np.where(obs, Y, 0.0).sum(axis=1)
    row_mean = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    return np.where(obs, Y, row_mean[:, None])


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray  # (N,), any hashable cluster labels
    Y: np.ndarray  # (N, T) complete trajectories of one dimension

    def __post_init__(self):
        labels = np.asarray(self.labels)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2 or labels.shape != (Y.shape[0],):
            raise ValueError("need one label per trajectory row")
        if not np.all(np.isfinite(Y)):
            raise ValueError("trajectories must be complete; impute missing entries first")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_observed(cls, labels, Y) -> "Clustering":
        return cls(labels, impute_patient_mean(Y))

    @property
    def clusters(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in np.unique(self.labels)]

    @property
    def K(self) -> int:
        return int(np.unique(self.labels).size)

    @property
    def N(self) -> int:
        return int(self.Y.shape[0])

    def _require_k2(self):
        if self.K < 2:
            raise ValueError("cluster validity indices need at least two clusters")

    def centroids(self) -> np.ndarray:
        return np.stack([self.Y[idx].mean(axis=0) for idx in self.clusters])

    def scatter(self) -> np.ndarray:
        """Mean distance of each cluster's members to its centroid."""
        cents = self.centroids()
        return np.array([np.linalg.norm(self.Y[idx] - c, axis=1).mean()
                         for idx, c in zip(self.clusters, cents)])


def calinski_harabasz(c: Clustering) -> float:
    c._require_k2()
    N, K = c.N, c.K
    sizes = np.array([idx.size for idx in c.clusters], dtype=float)
    cents = c.centroids()
    grand = c.Y.mean(axis=0)
    between = np.sum(sizes * np.linalg.norm(cents - grand, axis=1))
    within = np.sum(sizes * c.scatter())
    if within == 0:
        return float("nan")
    return float((N - K) / (K - 1) * between / within)


def silhouette(c: Clustering, textbook: bool = False) -> float:
    """Mean silhouette width.

    With ``textbook`` the cohesion term excludes the point itself (divides
    by |c_k| - 1) and singletons score 0.
    """
    c._require_k2()
    D = cdist(c.Y, c.Y)
    clusters = c.clusters
    total = 0.0
    for k, idx in enumerate(clusters):
        others = [np.asarray(D[np.ix_(idx, j)].mean(axis=1)) for m, j in enumerate(clusters) if m != k]
        b = np.min(np.stack(others), axis=0)
        own = D[np.ix_(idx, idx)].sum(axis=1)
        if textbook:
            if idx.size == 1:
                continue  # contributes 0
            a = own / (idx.size - 1)
        else:
            a = own / idx.size
        den = np.maximum(a, b)
        total += np.sum(np.where(den > 0, (b - a) / np.where(den > 0, den, 1.0), 0.0))
    return float(total / c.N)


def davies_bouldin_star(c: Clustering) -> float:
    c._require_k2()
    cents = c.centroids()
    scat = c.scatter()
    K = c.K
    D = cdist(cents, cents)
    terms = []
    for k in range(K):
        others = [l for l in range(K) if l != k]
        sep = D[k, others].min()
        if sep == 0:
            return float("nan")
        terms.append(max(scat[k] + scat[l] for l in others) / sep)
    return float(np.mean(terms))


PANELS = (("pain", "yp"), ("disability", "yd"))


def cvi_row(method: str, labels, ds: Dataset) -> dict:
    """One output row: method, number of subgroups, and the three indices for each symptom panel."""
    labels = np.asarray(labels)
    row = {"method": method, "subgroups": int(np.unique(labels).size)}
    for panel, attr in PANELS:
        cl = Clustering.from_observed(labels, getattr(ds, attr))
        if cl.K < 2:
            row.update({f"{panel}_sil": float("nan"), f"{panel}_ch": float("nan"),
                        f"{panel}_db_star": float("nan")})
            continue
        row[f"{panel}_sil"] = silhouette(cl)
        row[f"{panel}_ch"] = calinski_harabasz(cl)
        row[f"{panel}_db_star"] = davies_bouldin_star(cl)
    return row


CVI_COLUMNS = ("method", "subgroups", "pain_sil", "pain_ch", "pain_db_star",
               "disability_sil", "disability_ch", "disability_db_star")
