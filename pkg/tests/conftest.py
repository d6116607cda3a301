import numpy as np
import pytest

from posegraf.skeleton import h36m_topology, validate_topology


def random_tree(rng, n):
    """Random labelled tree on n joints: random attachment, then a random relabelling."""
    parents = [None] + [int(rng.integers(0, j)) for j in range(1, n)]
    perm = rng.permutation(n)  # old label -> new label
    new = [None] * n
    for j, p in enumerate(parents):
        new[perm[j]] = None if p is None else int(perm[p])
    return validate_topology({"parents": new})


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def h36m():
    return h36m_topology()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
