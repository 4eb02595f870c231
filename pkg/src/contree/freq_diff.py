"""Frequency difference consensus: cluster occurrence weights, the
quadratic and the centroid-decomposition cluster filters, and the main
consensus loop.

A cluster survives filtering against a reference tree when its occurrence
weight strictly exceeds the weight of every reference cluster incompatible
with it.  The fast filter decomposes the query tree along a centroid path,
recurses on side trees against weighted restrictions of the reference tree,
and sweeps the centroid path with saturating counters plus a max-multiset
of currently incompatible reference nodes.
"""

from __future__ import annotations

from bisect import bisect_left
from typing import Sequence

from .phylo_core import (
    LeafSetMismatchError,
    MissingWeightError,
    Profile,
    Tree,
    delete_nodes,
    insert_node,
)
from .tree_primitives import (
    MaxMultiset,
    RestrictedTree,
    _cluster_flags,
    _match_weights,
    _RefContext,
    centroid_decompose,
    merge_trees,
)


# ---------------------------------------------------------------------------
# Occurrence weights
# ---------------------------------------------------------------------------


class WeightMap:
    """Occurrence count per cluster of the profile, keyed by cluster bit
    vector.  Storage is a sorted key list with a parallel count array, so
    iteration order and lookups are deterministic and hash-free."""

    __slots__ = ("universe", "keys", "counts")

    def __init__(self, universe, keys: list[int], counts: list[int]):
        self.universe = universe
        self.keys = keys
        self.counts = counts

    def lookup(self, bits: int) -> int:
        i = bisect_left(self.keys, bits)
        if i == len(self.keys) or self.keys[i] != bits:
            raise MissingWeightError(f"no weight recorded for cluster bits {bits:#x}")
        return self.counts[i]

    def items(self):
        return zip(self.keys, self.counts)

    def __len__(self) -> int:
        return len(self.keys)

    def __eq__(self, other) -> bool:
        return (isinstance(other, WeightMap) and self.keys == other.keys
                and self.counts == other.counts)


def compute_weights_bitvec(profile: Profile) -> WeightMap:
    """Weights via one sorted pass over all cluster bit vectors of the
    profile (collect, sort, run-length count)."""
    allbits: list[int] = []
    for t in profile.trees:
        bits = t.node_bits()
        allbits.extend(bits[v] for v in t.preorder())
    allbits.sort()
    keys: list[int] = []
    counts: list[int] = []
    prev = None
    for b in allbits:
        if b == prev:
            counts[-1] += 1
        else:
            keys.append(b)
            counts.append(1)
            prev = b
    return WeightMap(profile.universe, keys, counts)


def compute_weights_day(profile: Profile) -> WeightMap:
    """Weights via pairwise cluster-table marking: every tree is marked
    against every other tree's table and per-node counters accumulate.
    Produces a map identical to :func:`compute_weights_bitvec`."""
    trees = profile.trees
    k = len(trees)
    per_tree_counts: list[list[int]] = []
    contexts = [_RefContext(t, light=True) for t in trees]
    for i, t in enumerate(trees):
        cnt = [1] * len(t.parent)
        for j in range(k):
            if j == i:
                continue
            occurs, _, _ = _cluster_flags(t, contexts[j], want_compat=False)
            for v in range(len(cnt)):
                if occurs[v]:
                    cnt[v] += 1
        per_tree_counts.append(cnt)
    pairs: dict[int, int] = {}
    for t, cnt in zip(trees, per_tree_counts):
        bits = t.node_bits()
        for v in t.preorder():
            b = bits[v]
            w = cnt[v]
            old = pairs.get(b)
            if old is None:
                pairs[b] = w
            elif old != w:
                raise AssertionError("occurrence counts disagree between trees")
    keys = sorted(pairs)
    return WeightMap(profile.universe, keys, [pairs[b] for b in keys])


def compute_weights(profile: Profile, method: str = "auto") -> WeightMap:
    if method == "auto":
        method = "bitvec" if profile.k >= profile.n else "day"
    if method == "bitvec":
        return compute_weights_bitvec(profile)
    if method == "day":
        return compute_weights_day(profile)
    raise ValueError(f"unknown weights method: {method}")


def _node_weights(t: Tree, w: WeightMap) -> list[int]:
    """Resolve per-node weights for a tree from the cluster weight map."""
    bits = t.node_bits()
    out = [0] * len(bits)
    for v in t.preorder():
        out[v] = w.lookup(bits[v])
    return out


# ---------------------------------------------------------------------------
# Quadratic filter
# ---------------------------------------------------------------------------


def _mark_crossing_max(B: RestrictedTree, leaf_ordinals: list[int],
                       mark: list[int], count: list[int], tag: int) -> int:
    """Max weight over nodes of ``B`` incompatible with the given cluster.

    Marks every ancestor of a cluster leaf strictly below the cluster's
    lowest common ancestor, then discounts marked nodes whose subtrees hold
    no leaf outside the cluster (their counters reach their subtree sizes).
    Nodes flagged ``outside`` stay incompatible regardless of saturation.
    The scratch arrays are caller-owned and tag-stamped so repeated calls
    need no clearing.
    """
    t = B.tree
    parent = t.parent
    leafnode = B.leafnode_of_label
    nodes = [leafnode[o] for o in leaf_ordinals]
    r = B.lca.lca_set(nodes)
    marked: list[int] = []
    for x in nodes:
        while x != r and mark[x] != tag:
            mark[x] = tag
            count[x] = 0
            marked.append(x)
            x = parent[x]
    for x in nodes:
        count[x] = 1
    marked.sort(key=B.depth.__getitem__, reverse=True)
    best = 0
    size = B.size
    outside = B.outside
    weight = B.weight
    for x in marked:
        p = parent[x]
        if p != r and mark[p] == tag:
            count[p] += count[x]
        if (outside[x] or count[x] < size[x]) and weight[x] > best:
            best = weight[x]
    return best


def filter_clusters_naive(t_a: Tree, t_b: Tree | RestrictedTree,
                          w: WeightMap | None = None,
                          weights_a: Sequence[int] | None = None,
                          weights_b: Sequence[int] | None = None) -> Tree:
    """Copy of ``t_a`` without the clusters that lose to ``t_b``: a cluster
    is dropped when some incompatible cluster of ``t_b`` has weight at least
    as large.  One linear mark-and-count pass of ``t_b`` per node of
    ``t_a``, hence quadratic overall."""
    if isinstance(t_b, RestrictedTree):
        B = t_b
    else:
        if t_a.universe is not t_b.universe or t_a.leaf_bits() != t_b.leaf_bits():
            raise LeafSetMismatchError("filter requires identical leaf sets")
        wb = list(weights_b) if weights_b is not None else _node_weights(t_b, w)
        B = RestrictedTree.from_tree(t_b, wb)
    wa = list(weights_a) if weights_a is not None else _node_weights(t_a, w)
    out = t_a.copy()
    cap = len(B.tree.parent)
    mark = [0] * cap
    count = [0] * cap
    tag = 0
    leaf_lists: dict[int, list[int]] = {}
    for v in t_a.postorder():
        if t_a.leaf[v] >= 0:
            leaf_lists[v] = [t_a.leaf[v]]
        else:
            acc: list[int] = []
            for c in t_a.children[v]:
                acc += leaf_lists[c]
            leaf_lists[v] = acc
    doomed = []
    for v in t_a.preorder():
        if t_a.leaf[v] >= 0 or t_a.parent[v] < 0:
            continue  # trivial clusters are incompatible with nothing
        tag += 1
        worst = _mark_crossing_max(B, leaf_lists[v], mark, count, tag)
        if wa[v] <= worst:
            doomed.append(v)
    delete_nodes(out, doomed)
    return out


# ---------------------------------------------------------------------------
# Centroid-decomposition filter
# ---------------------------------------------------------------------------


class FilterContext:
    """State of one centroid-path sweep: per-node intersection counters over
    the reference tree, the anchor (lca of the path cluster so far), the
    max-multiset of currently incompatible reference nodes, and the running
    maximum over outside-reaching nodes that saturated (those stay
    incompatible with every strictly larger path cluster)."""

    __slots__ = ("B", "counter", "in_bt", "sat", "bt", "beta", "pending", "anchor")

    def __init__(self, B: RestrictedTree, start_leaf_node: int):
        cap = len(B.tree.parent)
        self.B = B
        self.counter = [0] * cap
        self.in_bt = [False] * cap
        self.sat = [False] * cap
        self.bt = MaxMultiset()
        self.beta = 0
        self.pending: list[int] = []
        self.anchor = start_leaf_node

    def _insert(self, x: int) -> None:
        if not self.sat[x] and not self.in_bt[x]:
            self.bt.insert(x, self.B.weight[x])
            self.in_bt[x] = True

    def commit_pending(self) -> None:
        for wv in self.pending:
            if wv > self.beta:
                self.beta = wv
        self.pending.clear()

    def absorb(self, x: int, cluster_size: int) -> None:
        """Count one new cluster leaf below ``x`` and propagate saturation."""
        B = self.B
        counter = self.counter
        counter[x] += 1
        while counter[x] == B.size[x]:
            self.sat[x] = True
            if self.in_bt[x]:
                self.bt.remove(x)
                self.in_bt[x] = False
            if B.outside[x]:
                if B.size[x] < cluster_size:
                    if B.weight[x] > self.beta:
                        self.beta = B.weight[x]
                else:
                    # Saturated with exactly the current path cluster: still
                    # compatible now, incompatible with every later superset.
                    self.pending.append(B.weight[x])
            p = B.tree.parent[x]
            if p < 0:
                break
            counter[p] += B.size[x]
            x = p

    def advance(self, new_leaf_ordinals: list[int], cluster_size: int) -> int:
        """Grow the path cluster by ``new_leaf_ordinals`` and return the max
        weight over reference nodes incompatible with the grown cluster."""
        B = self.B
        parent = B.tree.parent
        leafnode = B.leafnode_of_label
        new_anchor = self.anchor
        for o in new_leaf_ordinals:
            new_anchor = B.lca.lca(new_anchor, leafnode[o])
        x = self.anchor
        while x != new_anchor:
            self._insert(x)
            x = parent[x]
        for o in new_leaf_ordinals:
            x = leafnode[o]
            self._insert(x)
            p = parent[x]
            while p != new_anchor and not self.in_bt[p] and not self.sat[p]:
                self._insert(p)
                p = parent[p]
        for o in new_leaf_ordinals:
            self.absorb(leafnode[o], cluster_size)
        self.anchor = new_anchor
        m = self.bt.max()
        worst = self.beta if m is None or m < self.beta else m
        self.commit_pending()
        return worst


def _extract_subtree(t: Tree, root: int, weights: Sequence[int]) -> tuple[Tree, list[int], list[int]]:
    """Copy the subtree at ``root`` into a fresh tree; returns (tree,
    node weights, leaf ordinals)."""
    out = Tree(t.universe)
    w_out: list[int] = []
    ordinals: list[int] = []
    stack = [(root, -1)]
    while stack:
        src, pnew = stack.pop()
        nid = out.add_node(pnew, t.leaf[src])
        w_out.append(weights[src])
        if t.leaf[src] >= 0:
            ordinals.append(t.leaf[src])
        for c in reversed(t.children[src]):
            stack.append((c, nid))
    return out, w_out, ordinals


def _graft(dst: Tree, dst_parent: int, src: Tree, src_root: int) -> None:
    """Copy the subtree of ``src`` at ``src_root`` under ``dst_parent``."""
    stack = [(src_root, dst_parent)]
    while stack:
        v, pnew = stack.pop()
        nid = dst.add_node(pnew, src.leaf[v])
        for c in reversed(src.children[v]):
            stack.append((c, nid))


def _filter_fast_rec(ta: Tree, wa: Sequence[int], B: RestrictedTree) -> tuple[Tree, bool]:
    """Recursive core of the fast filter.

    Returns the filtered tree over ``ta``'s leaf set plus a flag telling
    whether the root cluster itself survived; the caller splices the root
    away when it did not (the returned object must still be a tree, so the
    root's fate travels out of band).
    """
    if ta.leaf[ta.root] >= 0:
        single = Tree(ta.universe)
        single.add_node(-1, ta.leaf[ta.root])
        return single, True

    dec = centroid_decompose(ta)
    path = dec.path  # leaf-first
    alpha = len(path)

    # Side trees: recurse against the reference restricted to their leaves.
    # Singleton side trees are trivial and skip the restriction entirely.
    side_results: list[tuple[Tree, bool]] = []
    joined: list[list[int]] = [[] for _ in range(alpha)]  # D per path position
    for pos, sroot in dec.side_trees():
        if ta.leaf[sroot] >= 0:
            joined[pos].append(ta.leaf[sroot])
            single = Tree(ta.universe)
            single.add_node(-1, ta.leaf[sroot])
            side_results.append((single, True))
            continue
        sub, wsub, ords = _extract_subtree(ta, sroot, wa)
        joined[pos].extend(ords)
        Bsub = B.restrict(ords)
        side_results.append(_filter_fast_rec(sub, wsub, Bsub))

    rs = Tree(ta.universe)
    rs_root = rs.add_node(-1)
    rs.add_node(rs_root, ta.leaf[path[0]])
    for sub, root_ok in side_results:
        if root_ok:
            _graft(rs, rs_root, sub, sub.root)
        else:
            for c in sub.children[sub.root]:
                _graft(rs, rs_root, sub, c)

    # Centroid path sweep, nested clusters in increasing size order.
    fc = FilterContext(B, B.leafnode_of_label[ta.leaf[path[0]]])
    fc.absorb(fc.anchor, 1)
    fc.commit_pending()
    survivors: list[int] = []
    root_ok = True
    lc = 1
    for i in range(1, alpha):
        lc += len(joined[i])
        worst = fc.advance(joined[i], lc)
        keep = wa[path[i]] > worst
        if i == alpha - 1:
            root_ok = keep
        elif keep:
            survivors.append(i)

    if not survivors:
        return rs, root_ok  # nothing beyond what the side trees contribute

    # Surviving path clusters stack into a nested chain over the star.
    rc = Tree(ta.universe)
    rc_root = rc.add_node(-1)
    level_leaves: list[list[int]] = [[] for _ in range(alpha)]
    level_leaves[0].append(rc.add_node(rc_root, ta.leaf[path[0]]))
    for i in range(1, alpha):
        for o in joined[i]:
            level_leaves[i].append(rc.add_node(rc_root, o))
    chain = -1
    consumed = 0
    for s in survivors:
        group = [] if chain < 0 else [chain]
        for lv in range(consumed, s + 1):
            group.extend(level_leaves[lv])
        chain = insert_node(rc, rc_root, group)
        consumed = s + 1

    return merge_trees(rs, rc), root_ok


def filter_clusters_fast(t_a: Tree, t_b: Tree | RestrictedTree,
                         w: WeightMap | None = None,
                         weights_a: Sequence[int] | None = None,
                         weights_b: Sequence[int] | None = None) -> Tree:
    """Centroid-decomposition implementation of cluster filtering;
    extensionally identical to :func:`filter_clusters_naive`."""
    if isinstance(t_b, RestrictedTree):
        B = t_b
    else:
        if t_a.universe is not t_b.universe or t_a.leaf_bits() != t_b.leaf_bits():
            raise LeafSetMismatchError("filter requires identical leaf sets")
        wb = list(weights_b) if weights_b is not None else _node_weights(t_b, w)
        B = RestrictedTree.from_tree(t_b, wb)
    wa = list(weights_a) if weights_a is not None else _node_weights(t_a, w)
    out, root_ok = _filter_fast_rec(t_a, wa, B)
    # Only a reference with outside-reaching nodes can veto the root
    # cluster, and then the root still stays (the result is a tree over the
    # same leaves); the flag matters to recursive callers alone.
    assert root_ok or any(B.outside), "a plain reference cannot veto the full leaf set"
    return out


_FILTERS = {"naive": filter_clusters_naive, "fast": filter_clusters_fast}


# ---------------------------------------------------------------------------
# Consensus driver
# ---------------------------------------------------------------------------


def frequency_difference_consensus(profile: Profile, impl: str = "fast",
                                   weights_method: str = "auto") -> Tree:
    """The tree whose clusters occur strictly more often than everything
    incompatible with them.

    One forward pass keeps, after each step, a tree containing every
    cluster of the prefix that beats all incompatible prefix clusters; a
    final pass against each input tree removes the remaining losers.  The
    two merge inputs in the forward pass are provably compatible, so
    ``merge_trees`` raising there would be a bug, not an input error.
    """
    try:
        filt = _FILTERS[impl]
    except KeyError:
        raise ValueError(f"unknown filter implementation: {impl}") from None
    w = compute_weights(profile, weights_method)
    trees = profile.trees
    input_weights = [_node_weights(t, w) for t in trees]
    current = trees[0].copy()
    wc = list(input_weights[0])
    for j in range(1, len(trees)):
        a = filt(current, trees[j], w, weights_a=wc, weights_b=input_weights[j])
        b = filt(trees[j], current, w, weights_a=input_weights[j], weights_b=wc)
        merged = merge_trees(a, b)
        # every merged cluster came from the running tree or from trees[j],
        # so its weight transfers by interval identity (no bit-vector pass)
        wc = _match_weights(merged, [(current, wc), (trees[j], input_weights[j])])
        current = merged
    for t, wt in zip(trees, input_weights):
        out = filt(current, t, w, weights_a=wc, weights_b=wt)
        wc = _match_weights(out, [(current, wc)])
        current = out
    return current
