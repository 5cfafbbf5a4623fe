"""Contextual rearrangement of the user and post axes.

Popularity signals of contextually similar users/posts tend to look alike,
so before any block decomposition the tensor axes are permuted to make
neighbouring regions homogeneous: users are grouped by k-means on their
influence features, posts by k-means on their content/metadata features,
and inside each post group the posts are ordered by sharing time.  The
resulting permutations are bijections and can be undone exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mtpop.tensor import MaskedTensor


@dataclass
class ContextFeatures:
    """Per-id context vectors driving the rearrangement.

    user_features : dict mapping user id -> 1D float vector (influence stats)
    post_features : dict mapping post id -> 1D float vector (content + metadata,
        sharing time deliberately excluded)
    share_time    : dict mapping post id -> epoch seconds of first share
    """

    user_features: dict[str, np.ndarray]
    post_features: dict[str, np.ndarray]
    share_time: dict[str, float]

    def __post_init__(self):
        self.user_features = {k: np.asarray(v, dtype=np.float64) for k, v in self.user_features.items()}
        self.post_features = {k: np.asarray(v, dtype=np.float64) for k, v in self.post_features.items()}
        _check_uniform("user_features", self.user_features)
        _check_uniform("post_features", self.post_features)


def _check_uniform(name: str, table: dict[str, np.ndarray]) -> None:
    dim = None
    for key, vec in table.items():
        if vec.ndim != 1:
            raise ValueError(f"{name}[{key!r}] must be a 1D vector")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ValueError(f"{name}[{key!r}] has length {vec.shape[0]}, expected {dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{name}[{key!r}] contains non-finite components")


@dataclass
class Rearrangement:
    """Axis permutations plus the group label behind each index.

    ``user_perm[new_position] = original_index``: applying the rearrangement
    places original row ``user_perm[i]`` at row ``i``.  ``user_groups`` /
    ``post_groups`` give the cluster id of each *original* index.
    """

    user_perm: np.ndarray
    post_perm: np.ndarray
    user_groups: np.ndarray
    post_groups: np.ndarray

    def __post_init__(self):
        self.user_perm = _as_permutation("user_perm", self.user_perm)
        self.post_perm = _as_permutation("post_perm", self.post_perm)

    def apply(self, t: MaskedTensor) -> MaskedTensor:
        """Permute user and post axes; values and mask move together."""
        self._check_dims(t)
        return MaskedTensor(
            t.values[self.user_perm][:, self.post_perm],
            t.mask[self.user_perm][:, self.post_perm],
        )

    def invert(self, t: MaskedTensor) -> MaskedTensor:
        """Undo :meth:`apply` exactly."""
        self._check_dims(t)
        inv_u = np.argsort(self.user_perm)
        inv_v = np.argsort(self.post_perm)
        return MaskedTensor(t.values[inv_u][:, inv_v], t.mask[inv_u][:, inv_v])

    def _check_dims(self, t: MaskedTensor) -> None:
        if t.dims[0] != len(self.user_perm) or t.dims[1] != len(self.post_perm):
            raise ValueError(
                f"permutation lengths ({len(self.user_perm)}, {len(self.post_perm)}) "
                f"do not match tensor dims {t.dims[:2]}"
            )


def _as_permutation(name: str, perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    n = len(perm)
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError(f"{name} is not a permutation of 0..{n - 1}")
    return perm


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """Lloyd's algorithm with greedy farthest-point seeding.

    Deterministic for a fixed seed: the first centroid comes from the seeded
    RNG, the rest are the points farthest from any chosen centroid, and all
    ties break toward the lowest index.  Empty clusters are re-seeded from
    the point farthest from its current centroid (skipped when every point
    already sits on its centroid).

    Returns the group id of each point (values in ``0..k-1``; some ids may
    be unused when clusters empty out on degenerate data).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, d) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    n = pts.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        centroids[i] = pts[int(np.argmax(d2))]
        d2 = np.minimum(d2, np.sum((pts - centroids[i]) ** 2, axis=1))

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.sum((pts[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dists, axis=1)

        # re-seed empty clusters from the worst-fit point, when one exists
        own = dists[np.arange(n), new_assign]
        for c in range(k):
            if not np.any(new_assign == c):
                far = int(np.argmax(own))
                if own[far] <= 0.0:
                    continue
                centroids[c] = pts[far]
                new_assign[far] = c
                own[far] = 0.0

        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = pts[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return assign


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0.0] = 1.0
    return (x - mu) / sd


def _group_order(features: np.ndarray, assign: np.ndarray, k: int) -> list[int]:
    # groups sorted by ascending centroid norm (ties by group id); empty groups vanish
    order = []
    for g in range(k):
        members = features[assign == g]
        if len(members):
            order.append((float(np.linalg.norm(members.mean(axis=0))), g))
    order.sort()
    return [g for _, g in order]


def build_rearrangement(
    features: ContextFeatures,
    user_ids: list[str],
    post_ids: list[str],
    k_user: int | None = None,
    k_post: int | None = None,
    seed: int = 0,
) -> Rearrangement:
    """Three-step rearrangement over tensor axes given in id order.

    Step 1 groups users by k-means on their influence features and lays the
    groups out contiguously.  Step 2 groups posts the same way on content
    features (sharing time excluded).  Step 3 orders posts inside each group
    by ascending sharing time.  Feature dimensions are z-scored before
    clustering and groups are placed in ascending centroid-norm order, so
    the output is deterministic for a fixed seed.
    """
    uf = _feature_matrix("user", features.user_features, user_ids)
    pf = _feature_matrix("post", features.post_features, post_ids)
    for v, pid in enumerate(post_ids):
        if pid not in features.share_time:
            raise ValueError(f"missing share_time for post index {v} (id {pid!r})")

    n_u, n_v = len(user_ids), len(post_ids)
    k_user = k_user if k_user is not None else min(n_u, math.ceil(math.sqrt(n_u)))
    k_post = k_post if k_post is not None else min(n_v, math.ceil(math.sqrt(n_v)))

    zu = _standardize(uf)
    zp = _standardize(pf)
    user_groups = kmeans(zu, k_user, seed=seed)
    post_groups = kmeans(zp, k_post, seed=seed + 1)

    user_perm = np.concatenate(
        [np.flatnonzero(user_groups == g) for g in _group_order(zu, user_groups, k_user)]
    )

    times = np.array([features.share_time[pid] for pid in post_ids])
    post_chunks = []
    for g in _group_order(zp, post_groups, k_post):
        members = np.flatnonzero(post_groups == g)
        post_chunks.append(members[np.lexsort((members, times[members]))])
    post_perm = np.concatenate(post_chunks)

    return Rearrangement(user_perm, post_perm, user_groups, post_groups)


def _feature_matrix(kind: str, table: dict[str, np.ndarray], ids: list[str]) -> np.ndarray:
    rows = []
    for i, key in enumerate(ids):
        if key not in table:
            raise ValueError(f"missing {kind} feature vector for index {i} (id {key!r})")
        rows.append(table[key])
    return np.stack(rows)


def mean_within_block_variance(features: np.ndarray, order: np.ndarray, block_size: int) -> float:
    """Average per-dimension variance inside contiguous index blocks.

    Measures how homogeneous an axis arrangement is: rows of ``features``
    are laid out in ``order`` and cut into consecutive blocks of
    ``block_size``; lower values mean neighbouring indices are more alike.
    """
    feats = np.asarray(features, dtype=np.float64)[np.asarray(order, dtype=np.int64)]
    n = feats.shape[0]
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    variances = []
    for start in range(0, n, block_size):
        chunk = feats[start : start + block_size]
        if len(chunk) > 1:
            variances.append(chunk.var(axis=0).mean())
    return float(np.mean(variances)) if variances else 0.0
