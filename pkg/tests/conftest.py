import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the brute module

from contree import Cluster, parse_profile

S_STAR_LINES = [
    "(((a,b),(c,d)),e);",
    "((a,b),(c,d),e);",
    "((((a,b),c),d),e);",
    "((a,c),(b,d,e));",
]


@pytest.fixture(scope="session")
def s_star():
    """Four-tree worked example: majority adds {a,b}; majority (+) adds
    {a,b,c,d}; frequency difference adds {c,d} on top of that."""
    return parse_profile(S_STAR_LINES)


def labelset(cluster: Cluster) -> frozenset[str]:
    return frozenset(cluster.labels())


def nontrivial(cluster_set) -> set[frozenset[str]]:
    return {labelset(c) for c in cluster_set if not c.is_trivial}


def tree_labelsets(t) -> set[frozenset[str]]:
    """All clusters of a tree as frozensets of labels."""
    u = t.universe
    bits = t.node_bits()
    return {frozenset(u.labels[i] for i in range(len(u)) if bits[v] >> i & 1)
            for v in t.preorder()}


def cl(universe, labels: str) -> Cluster:
    """Cluster from a compact label string like "abd"."""
    return Cluster.from_labels(universe, list(labels))
