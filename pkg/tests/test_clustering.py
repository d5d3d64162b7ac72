import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evasov.clustering import (NOISE, ClusterConfig, UserState, cluster_centers, cluster_users,
                               combine, dbscan, distance_matrices, max_normalize, motion_vector,
                               point_to_viewport, single_group, viewport_to_point)
from evasov.geometry import Viewport
from evasov.prediction import Trace


def oracle_dbscan(m, eps, min_pts):
    # union-find over core points, then each border point takes the lowest-numbered adjacent cluster
    n = len(m)
    core = [sum(m[i][j] <= eps for j in range(n)) >= min_pts for i in range(n)]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i in range(n):
        for j in range(n):
            if core[i] and core[j] and m[i][j] <= eps:
                a, b = find(i), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    ids = {}
    labels = [NOISE] * n
    for i in range(n):
        if core[i]:
            root = find(i)
            ids.setdefault(root, len(ids))
            labels[i] = ids[root]
    for i in range(n):
        if not core[i]:
            adj = [labels[j] for j in range(n) if core[j] and m[i][j] <= eps]
            if adj:
                labels[i] = min(adj)
    return labels


def random_users(rng, n, spread=1.0):
    users = []
    for i in range(n):
        p = rng.normal(size=3)
        users.append(UserState(f"u{i}", p / np.linalg.norm(p), rng.normal(0, spread, 3)))
    return users


def test_dbscan_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 26))
        users = random_users(rng, n)
        mp, mv = distance_matrices(users)
        m = combine(mp, mv, float(rng.uniform()))
        eps = float(rng.uniform(0.05, 0.5))
        k = int(rng.integers(1, 5))
        assert dbscan(m, eps, k) == oracle_dbscan(m.tolist(), eps, k)


def test_dbscan_small_cases():
    m = np.array([[0, 0.1, 0.9], [0.1, 0, 0.9], [0.9, 0.9, 0]])
    assert dbscan(m, 0.15, 2) == [0, 0, NOISE]
    assert dbscan(m, 0.1, 2) == [0, 0, NOISE]        # closed neighbourhood
    assert dbscan(m, 0.05, 2) == [NOISE] * 3
    assert dbscan(m, 0.05, 1) == [0, 1, 2]
    # border point 4 touches one core of each cluster and joins the first
    m = np.full((9, 9), 9.0)
    for grp in ((0, 1, 2, 3), (5, 6, 7, 8)):
        for i in grp:
            for j in grp:
                m[i, j] = 0.1
    m[3, 4] = m[4, 3] = m[4, 5] = m[5, 4] = 0.1
    np.fill_diagonal(m, 0)
    assert dbscan(m, 0.1, 4) == [0, 0, 0, 0, 0, 1, 1, 1, 1]
    assert dbscan(m, 0.1, 4) == oracle_dbscan(m.tolist(), 0.1, 4)
    assert dbscan(m, 0.1, 6) == [NOISE] * 9


def test_max_normalize_and_combine():
    x = np.array([[0, 2], [2, 0.]])
    assert np.array_equal(max_normalize(x), x / 2)
    z = np.zeros((2, 2))
    assert np.array_equal(max_normalize(z), z)
    mp, mv = np.array([[0, 4], [4, 0.]]), np.array([[0, 1], [1, 0.]])
    assert np.array_equal(combine(mp, mv, 1.0), max_normalize(mp))
    assert np.array_equal(combine(mp, mv, 0.0), max_normalize(mv))
    assert np.allclose(combine(mp, mv, 0.25), 0.25 * mp / 4 + 0.75 * mv)
    with pytest.raises(ValueError, match="size mismatch"):
        combine(np.zeros((3, 3)), np.zeros((2, 2)), 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.floats(0, 1), st.integers(0, 2 ** 31 - 1))
def test_combine_properties(n, omega, seed):
    users = random_users(np.random.default_rng(seed), n)
    mp, mv = distance_matrices(users)
    m = combine(mp, mv, omega)
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 0)
    assert m.min() >= 0 and m.max() <= 1 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(-20, 20), st.integers(0, 2 ** 31 - 1))
def test_position_only_ignores_motion_scale(n, power, seed):
    users = random_users(np.random.default_rng(seed), n)
    scaled = [UserState(u.user_id, u.position, u.motion * 2.0 ** power) for u in users]
    cfg = ClusterConfig(eps=0.3, omega=1.0)
    assert cluster_users(users, cfg).labels == cluster_users(scaled, cfg).labels


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(-20, 20), st.floats(0, 1), st.integers(0, 2 ** 31 - 1))
def test_motion_scale_invariance(n, power, omega, seed):
    # max-normalisation makes any global rescale of the motion vectors irrelevant
    users = random_users(np.random.default_rng(seed), n)
    scaled = [UserState(u.user_id, u.position, u.motion * 2.0 ** power) for u in users]
    cfg = ClusterConfig(eps=0.3, omega=omega)
    assert cluster_users(users, cfg).labels == cluster_users(scaled, cfg).labels


def test_config_validation():
    with pytest.raises(ValueError):
        ClusterConfig(eps=0)
    with pytest.raises(ValueError):
        ClusterConfig(min_pts=0)
    with pytest.raises(ValueError):
        ClusterConfig(omega=1.5)


def test_point_viewport_round_trip():
    for vp in (Viewport(0, 0, 0), Viewport(1.0, 0.3, 0.7), Viewport(-2.5, -1.2, 0)):
        p = viewport_to_point(vp)
        assert np.linalg.norm(p) == pytest.approx(1.0)
        back = point_to_viewport(p)
        assert (back.yaw, back.pitch, back.roll) == pytest.approx((vp.yaw, vp.pitch, 0.0))


def test_motion_vector_analytic():
    w = 0.5  # rad/s yaw rate
    t = np.linspace(0, 2, 201)
    tr = Trace("a", t, np.stack([w * t, np.zeros_like(t), np.zeros_like(t)], axis=1))
    v = motion_vector(tr, 1.0, 1e-3)
    assert v == pytest.approx([-w * math.sin(1.0 * w), w * math.cos(1.0 * w), 0], abs=1e-3)
    still = Trace("b", t, np.zeros((len(t), 3)))
    assert np.array_equal(motion_vector(still, 1.0, 0.1), np.zeros(3))
    with pytest.raises(ValueError):
        motion_vector(still, 1.0, 0)


def test_centers():
    users = [UserState("a", viewport_to_point(Viewport(0.1, 0, 0))),
             UserState("b", viewport_to_point(Viewport(-0.1, 0, 0))),
             UserState("c", viewport_to_point(Viewport(math.pi / 2, 0.2, 0)))]
    c = cluster_centers([0, 0, 1], users)
    assert c[0].yaw == pytest.approx(0, abs=1e-12) and c[0].pitch == pytest.approx(0, abs=1e-12)
    assert c[1].yaw == pytest.approx(math.pi / 2) and c[1].pitch == pytest.approx(0.2)
    anti = [UserState("a", np.array([1.0, 0, 0])), UserState("b", np.array([-1.0, 0, 0]))]
    c = cluster_centers([0, 0], anti)
    assert c[0].yaw == pytest.approx(0.0)  # zero mean falls back to the first member
    g = single_group(users)
    assert g.labels == [0, 0, 0] and g.k == 1


def test_cluster_users_basic():
    p = viewport_to_point(Viewport(0.3, 0.1, 0))
    users = [UserState("a", p), UserState("b", p.copy()),
             UserState("c", viewport_to_point(Viewport(2.5, 0, 0)))]
    a = cluster_users(users, ClusterConfig())
    assert a.labels == [0, 0, NOISE] and a.k == 1 and a.noise_count == 1
    assert a.members(0) == [0, 1]
    assert cluster_users([], ClusterConfig()).k == 0


def test_duplicate_user_never_increases_k():
    rng = np.random.default_rng(3)
    for _ in range(50):
        users = random_users(rng, int(rng.integers(2, 15)))
        cfg = ClusterConfig(eps=0.25, omega=0.8)
        before = cluster_users(users, cfg)
        i = int(rng.integers(len(users)))
        dup = UserState("dup", users[i].position.copy(), users[i].motion.copy())
        after = cluster_users(users + [dup], cfg)
        assert after.k <= before.k + (1 if before.labels[i] == NOISE else 0)
        assert after.k + after.noise_count <= before.k + before.noise_count
