"""Majority rule (+) consensus: clusters occurring in strictly more input
trees than are incompatible with them.

Phase 1 streams over the input trees maintaining a candidate tree with a
net score per node (occurrences minus incompatibilities since the cluster
became a candidate); scores hitting zero drop the node, and every cluster
of the current input that is compatible with the candidate tree but absent
from it joins with score one.  Phase 1 provably retains every majority (+)
cluster.  Phase 2 tallies exact occurrence and incompatibility counts for
the survivors and deletes those not strictly ahead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .phylo_core import Cluster, Profile, Tree, delete_nodes
from .tree_primitives import _cluster_flags, _merge_into, _RefContext


@dataclass
class CandidateState:
    """Working tree plus per-node tallies (arena-indexed lists)."""

    tree: Tree
    count: list[int]
    occ: list[int] = field(default_factory=list)  # exact occurrence tally
    inc: list[int] = field(default_factory=list)  # exact incompatibility tally


def _phase_one(profile: Profile) -> CandidateState:
    trees = profile.trees
    tj_orders = [t.preorder() for t in trees]
    state = CandidateState(trees[0].copy(), [1] * len(trees[0].parent))
    for j in range(1, len(trees)):
        t_j = trees[j]
        cur = state.tree
        order = cur.preorder()
        ctx_j = _RefContext(t_j)
        occurs, compat, _ = _cluster_flags(cur, ctx_j, order=order)
        count = state.count
        for v in order:
            if occurs[v]:
                count[v] += 1
            elif not compat[v]:
                count[v] -= 1
        doomed = [v for v in order if count[v] == 0]
        assert all(cur.parent[v] >= 0 and cur.leaf[v] < 0 for v in doomed), \
            "trivial clusters occur everywhere and cannot be dropped"
        delete_nodes(cur, doomed)
        # Insert the clusters of t_j that fit the current candidates: keep
        # the compatible part of t_j, merge it in, then carry scores across
        # by cluster identity (new nodes start at one).
        ctx_cur = _RefContext(cur)
        _, compat_ba, _ = _cluster_flags(t_j, ctx_cur, order=tj_orders[j])
        y = t_j.copy()
        delete_nodes(y, [v for v in tj_orders[j]
                         if not compat_ba[v] and y.parent[v] >= 0 and y.leaf[v] < 0])
        merged = _merge_into(y, _RefContext(y, light=True), cur)
        old_node = _match_nodes(merged, ctx_cur)
        new_count = [0] * len(merged.parent)
        for v in merged.preorder():
            new_count[v] = count[old_node[v]] if old_node[v] >= 0 else 1
        state.tree = merged
        state.count = new_count
    return state


def _match_nodes(t: Tree, ctx_ref: _RefContext) -> list[int]:
    """For nodes of ``t`` whose cluster occurs in the reference tree, the id
    of the matching reference node (day-interval slots, no hashing)."""
    day = ctx_ref.day_of_label
    node_for = ctx_ref.node_for_interval
    cap = len(t.parent)
    mn = [0] * cap
    mx = [0] * cap
    sz = [0] * cap
    out = [-1] * cap
    for v in t.postorder():
        if t.leaf[v] >= 0:
            mn[v] = mx[v] = day[t.leaf[v]]
            sz[v] = 1
        else:
            mn[v] = min(mn[c] for c in t.children[v])
            mx[v] = max(mx[c] for c in t.children[v])
            sz[v] = sum(sz[c] for c in t.children[v])
        out[v] = node_for(mn[v], mx[v], sz[v])
    return out


def _phase_two(profile: Profile, state: CandidateState) -> Tree:
    cur = state.tree
    cap = len(cur.parent)
    order = cur.preorder()
    state.occ = [0] * cap
    state.inc = [0] * cap
    for t_j in profile.trees:
        occurs, compat, _ = _cluster_flags(cur, _RefContext(t_j), order=order)
        occ, inc = state.occ, state.inc
        for v in order:
            if occurs[v]:
                occ[v] += 1
            elif not compat[v]:
                inc[v] += 1
    doomed = [v for v in order if state.occ[v] <= state.inc[v]]
    assert all(cur.parent[v] >= 0 and cur.leaf[v] < 0 for v in doomed), \
        "trivial clusters always win the occurrence tally"
    delete_nodes(cur, doomed)
    return cur


def majority_plus_consensus(profile: Profile) -> Tree:
    """The majority rule (+) consensus tree of the profile."""
    return _phase_two(profile, _phase_one(profile))


def majority_plus_with_candidates(profile: Profile) -> tuple[Tree, set[Cluster]]:
    """Consensus tree plus the candidate cluster set at the end of the
    streaming phase (a certified superset of the result's clusters)."""
    state = _phase_one(profile)
    u = profile.universe
    bits = state.tree.node_bits()
    candidates = {Cluster(u, bits[v]) for v in state.tree.preorder()}
    return _phase_two(profile, state), candidates
