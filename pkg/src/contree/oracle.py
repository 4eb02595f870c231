"""Brute-force reference implementations of the consensus definitions.

Everything here favors being obviously correct over being fast: clusters
are compared pairwise with plain bit-vector algebra, and the consensus
cluster sets fall directly out of the per-cluster tallies.  The optimized
algorithms are tested against these.
"""

from __future__ import annotations

from dataclasses import dataclass

from .phylo_core import Cluster, Profile, Tree, bits_compatible, tree_from_clusters


@dataclass
class ClusterCensus:
    """Per occurring cluster: how many trees contain it (``occ``), how many
    are incompatible with it (``inc``), and the largest occurrence count
    among occurring clusters that cross it (``max_crossing``, 0 if none)."""

    k: int
    occ: dict[int, int]
    inc: dict[int, int]
    max_crossing: dict[int, int]


def census(profile: Profile) -> ClusterCensus:
    """Exhaustive tallies for every cluster occurring in the profile."""
    per_tree: list[set[int]] = []
    for t in profile.trees:
        bits = t.node_bits()
        per_tree.append({bits[v] for v in t.preorder()})
    occ: dict[int, int] = {}
    for s in per_tree:
        for b in s:
            occ[b] = occ.get(b, 0) + 1
    inc: dict[int, int] = {}
    for b in occ:
        bad = 0
        for s in per_tree:
            if any(not bits_compatible(b, other) for other in s):
                bad += 1
        inc[b] = bad
    max_crossing: dict[int, int] = {}
    for b in occ:
        worst = 0
        for d, w in occ.items():
            if w > worst and not bits_compatible(b, d):
                worst = w
        max_crossing[b] = worst
    return ClusterCensus(profile.k, occ, inc, max_crossing)


def _clusters(profile: Profile, keep) -> set[Cluster]:
    c = census(profile)
    u = profile.universe
    return {Cluster(u, b) for b in c.occ if keep(c, b)}


def oracle_strict(profile: Profile) -> set[Cluster]:
    """Clusters occurring in every tree of the profile."""
    return _clusters(profile, lambda c, b: c.occ[b] == c.k)


def oracle_majority(profile: Profile) -> set[Cluster]:
    """Clusters occurring in more than half of the trees."""
    return _clusters(profile, lambda c, b: 2 * c.occ[b] > c.k)


def oracle_majority_plus(profile: Profile) -> set[Cluster]:
    """Clusters occurring in strictly more trees than are incompatible
    with them."""
    return _clusters(profile, lambda c, b: c.occ[b] > c.inc[b])


def oracle_freq_diff(profile: Profile) -> set[Cluster]:
    """Clusters occurring strictly more often than every cluster
    incompatible with them.

    The maximum ranges over occurring clusters only: a never-occurring
    cluster has count zero and can never beat a positive count, so the
    restriction loses nothing (and keeps the oracle polynomial).
    """
    return _clusters(profile, lambda c, b: c.occ[b] > c.max_crossing[b])


def oracle_tree(profile: Profile, which: str) -> Tree:
    """Consensus tree built directly from the corresponding oracle set."""
    fn = {
        "strict": oracle_strict,
        "majority": oracle_majority,
        "majority-plus": oracle_majority_plus,
        "freqdiff": oracle_freq_diff,
    }[which]
    return tree_from_clusters(fn(profile), profile.universe)
