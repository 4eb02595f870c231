"""Shared tree machinery: Day-style cluster tables, constant-time LCA
indexes, one-way compatibility filtering, cluster-union tree merging,
centroid path decomposition, induced subtrees, weighted restrictions with
special nodes, path maxima, and an ordered max-multiset.

Everything here is an index or a subroutine; the consensus algorithms in
``majority_plus`` and ``freq_diff`` are composed from these pieces.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .phylo_core import (
    Cluster,
    IncompatibleTreesError,
    LeafSetMismatchError,
    Tree,
    delete_nodes,
)


# ---------------------------------------------------------------------------
# Day-style cluster table
# ---------------------------------------------------------------------------


class ClusterTable:
    """O(1)-query "does this cluster occur in the reference tree" structure.

    Leaves are numbered by first visit in a traversal of the reference tree,
    so every subtree occupies a consecutive index interval.  Each internal
    node's interval is stored in a slot private to that node (interval start
    if the node is the last child of its parent, interval end otherwise),
    which keeps lookups array-indexed and hash-free.
    """

    __slots__ = (
        "universe", "day_of_label", "label_at_day", "node_lo", "node_hi",
        "_hi_at_lo", "_lo_at_hi", "n",
    )

    def __init__(self, t_ref: Tree):
        self.universe = t_ref.universe
        n = len(self.universe)
        self.n = n
        self.day_of_label = [-1] * n
        self.label_at_day: list[int] = []
        order = t_ref.preorder()
        cap = len(t_ref.parent)
        self.node_lo = [0] * cap
        self.node_hi = [0] * cap
        for v in order:
            if t_ref.leaf[v] >= 0:
                idx = len(self.label_at_day)
                self.day_of_label[t_ref.leaf[v]] = idx
                self.label_at_day.append(t_ref.leaf[v])
        m = len(self.label_at_day)
        self._hi_at_lo = [-1] * m
        self._lo_at_hi = [-1] * m
        day = self.day_of_label
        lo, hi = self.node_lo, self.node_hi
        for v in reversed(order):
            if t_ref.leaf[v] >= 0:
                lo[v] = hi[v] = day[t_ref.leaf[v]]
            else:
                kids = t_ref.children[v]
                lo[v] = min(lo[c] for c in kids)
                hi[v] = max(hi[c] for c in kids)
        for v in order:
            if t_ref.leaf[v] >= 0:
                continue
            p = t_ref.parent[v]
            last = p < 0 or t_ref.children[p][-1] == v
            if last:
                self._hi_at_lo[lo[v]] = hi[v]
            else:
                self._lo_at_hi[hi[v]] = lo[v]

    def occurs_interval(self, mn: int, mx: int, size: int) -> bool:
        """Membership test for the cluster with the given day-index stats."""
        if mx - mn + 1 != size:
            return False
        if size == 1:
            return True
        return self._hi_at_lo[mn] == mx or self._lo_at_hi[mx] == mn

    def __contains__(self, cluster: Cluster) -> bool:
        if cluster.universe is not self.universe:
            raise ValueError("cluster universe differs from the table's")
        day = self.day_of_label
        idxs = [day[o] for o in cluster.ordinals()]
        return self.occurs_interval(min(idxs), max(idxs), len(idxs))


def build_cluster_table(t_ref: Tree) -> ClusterTable:
    """Day-style table for ``t_ref``; built in one pass over the tree."""
    return ClusterTable(t_ref)


def mark_common_clusters(t: Tree, table: ClusterTable) -> list[bool]:
    """Per-node flags (arena-indexed): does the node's cluster occur in the
    table's reference tree?  One bottom-up pass, O(1) per node."""
    if t.universe is not table.universe:
        raise ValueError("tree universe differs from the table's")
    cap = len(t.parent)
    mn = [0] * cap
    mx = [0] * cap
    sz = [0] * cap
    flags = [False] * cap
    day = table.day_of_label
    for v in t.postorder():
        if t.leaf[v] >= 0:
            mn[v] = mx[v] = day[t.leaf[v]]
            sz[v] = 1
            flags[v] = True
        else:
            kids = t.children[v]
            mn[v] = min(mn[c] for c in kids)
            mx[v] = max(mx[c] for c in kids)
            sz[v] = sum(sz[c] for c in kids)
            flags[v] = table.occurs_interval(mn[v], mx[v], sz[v])
    return flags


# ---------------------------------------------------------------------------
# LCA index (Euler tour + sparse table)
# ---------------------------------------------------------------------------


class LcaIndex:
    """Constant-time lowest common ancestor queries after O(n log n) setup.

    The sparse table is built with vectorized numpy passes and then frozen
    into plain lists, which are faster for scalar lookups.
    """

    __slots__ = ("tree", "depth", "euler", "first", "order", "_rows", "_log", "_edepth")

    def __init__(self, t: Tree):
        self.tree = t
        cap = len(t.parent)
        self.depth = [0] * cap
        self.first = [-1] * cap
        self.order: list[int] = []  # preorder, byproduct of the tour
        euler: list[int] = []
        stack: list[tuple[int, int]] = [(t.root, 0)]
        # Iterative Euler tour: push a node once per child boundary.
        depth = self.depth
        children = t.children
        while stack:
            v, ci = stack.pop()
            if ci == 0:
                self.first[v] = len(euler)
                self.order.append(v)
            euler.append(v)
            if ci < len(children[v]):
                stack.append((v, ci + 1))
                c = children[v][ci]
                depth[c] = depth[v] + 1
                stack.append((c, 0))
        self.euler = euler
        ed = np.fromiter((depth[v] for v in euler), dtype=np.int64, count=len(euler))
        m = len(euler)
        rows = [np.arange(m, dtype=np.int64)]
        span = 1
        while span * 2 <= m:
            prev = rows[-1]
            a = prev[: m - 2 * span + 1]
            b = prev[span: span + m - 2 * span + 1]
            rows.append(np.where(ed[a] <= ed[b], a, b))
            span *= 2
        self._rows = [r.tolist() for r in rows]
        self._edepth = ed.tolist()
        log = [0] * (m + 1)
        for i in range(2, m + 1):
            log[i] = log[i >> 1] + 1
        self._log = log

    def lca(self, u: int, v: int) -> int:
        i = self.first[u]
        j = self.first[v]
        if i > j:
            i, j = j, i
        k = self._log[j - i + 1]
        a = self._rows[k][i]
        b = self._rows[k][j - (1 << k) + 1]
        pos = a if self._edepth[a] <= self._edepth[b] else b
        return self.euler[pos]

    def lca_set(self, nodes: Iterable[int]) -> int:
        it = iter(nodes)
        try:
            acc = next(it)
        except StopIteration:
            raise ValueError("lca of an empty set") from None
        for v in it:
            acc = self.lca(acc, v)
        return acc


def lca_query(index: LcaIndex, xs: Iterable[int]) -> int:
    """Lowest common ancestor of a nonempty node set (pairwise fold)."""
    return index.lca_set(xs)


# ---------------------------------------------------------------------------
# Reference-side context: Day table + LCA + child interval lookup
# ---------------------------------------------------------------------------


class _RefContext:
    """Everything needed to answer, for clusters of another tree, the two
    per-node questions "occurs in the reference tree?" and "compatible with
    the reference tree?" plus the merge helpers.

    Functionally a cluster table extended with child-interval lookup; built
    in three light passes because consensus runs construct one context per
    input tree per pass.  ``light`` skips the child arrays for callers that
    only need occurrence tests (merging, weight counting).
    """

    __slots__ = (
        "tree", "n", "day_of_label", "label_at_day", "node_lo", "node_hi",
        "_hi_at_lo", "_lo_at_hi", "_node_at_lo", "_node_at_hi",
        "size", "kids_lo", "kids_size", "leafnode_at_day", "parent",
    )

    def __init__(self, t_ref: Tree, light: bool = False):
        self.tree = t_ref
        n = len(t_ref.universe)
        self.n = n
        cap = len(t_ref.parent)
        children = t_ref.children
        leaf = t_ref.leaf
        self.parent = t_ref.parent
        day_of_label = [-1] * n
        label_at_day: list[int] = []
        leafnode_at_day: list[int] = []
        order: list[int] = []
        stack = [t_ref.root]
        while stack:
            v = stack.pop()
            order.append(v)
            o = leaf[v]
            if o >= 0:
                day_of_label[o] = len(label_at_day)
                label_at_day.append(o)
                leafnode_at_day.append(v)
            else:
                stack.extend(reversed(children[v]))
        self.day_of_label = day_of_label
        self.label_at_day = label_at_day
        self.leafnode_at_day = leafnode_at_day
        m = len(label_at_day)
        node_lo = [0] * cap
        node_hi = [0] * cap
        size = [0] * cap
        for v in reversed(order):
            kids = children[v]
            if not kids:
                node_lo[v] = node_hi[v] = day_of_label[leaf[v]]
                size[v] = 1
            else:
                node_lo[v] = node_lo[kids[0]]
                node_hi[v] = node_hi[kids[-1]]
                size[v] = sum(size[c] for c in kids)
        self.node_lo = node_lo
        self.node_hi = node_hi
        self.size = size
        hi_at_lo = [-1] * m
        lo_at_hi = [-1] * m
        node_at_lo = [-1] * m
        node_at_hi = [-1] * m
        parent = t_ref.parent
        for v in order:
            if leaf[v] >= 0:
                continue
            p = parent[v]
            if p < 0 or children[p][-1] == v:
                hi_at_lo[node_lo[v]] = node_hi[v]
                node_at_lo[node_lo[v]] = v
            else:
                lo_at_hi[node_hi[v]] = node_lo[v]
                node_at_hi[node_hi[v]] = v
        self._hi_at_lo = hi_at_lo
        self._lo_at_hi = lo_at_hi
        self._node_at_lo = node_at_lo
        self._node_at_hi = node_at_hi
        if light:
            self.kids_lo = self.kids_size = None
            return
        kids_lo: list[list[int] | None] = [None] * cap
        kids_size: list[list[int] | None] = [None] * cap
        for v in order:
            kids = children[v]
            if kids:
                kids_lo[v] = [node_lo[c] for c in kids]
                kids_size[v] = [size[c] for c in kids]
        self.kids_lo = kids_lo
        self.kids_size = kids_size

    def occurs_interval(self, mn: int, mx: int, sz: int) -> bool:
        if mx - mn + 1 != sz:
            return False
        if sz == 1:
            return True
        return self._hi_at_lo[mn] == mx or self._lo_at_hi[mx] == mn

    def node_for_interval(self, mn: int, mx: int, sz: int) -> int:
        """The reference node holding exactly this cluster, or -1."""
        if mx - mn + 1 != sz:
            return -1
        if sz == 1:
            return self.leafnode_at_day[mn]
        if self._hi_at_lo[mn] == mx:
            return self._node_at_lo[mn]
        if self._lo_at_hi[mx] == mn:
            return self._node_at_hi[mx]
        return -1


def _cluster_flags(t: Tree, ctx: _RefContext, want_compat: bool = True,
                   collect_absent: bool = False, order: list[int] | None = None):
    """Per-node flags for the clusters of ``t`` against the context's
    reference tree: occurrence (Day-interval lookup) and compatibility.

    A cluster is compatible with the reference tree iff it is a union of
    complete child subtrees of its lowest common ancestor there.  The check
    runs as one sweep per heavy path of ``t``: along a path the clusters
    are nested, so the set of reference children they touch only grows and
    can be maintained incrementally (epoch-stamped, re-anchored whenever
    the ancestor climbs).  Light subtrees are re-enumerated by the paths
    above them, which costs one tree-height factor in the worst case but no sorted
    per-node leaf lists anywhere.

    ``order`` may carry a preexisting preorder snapshot of ``t``.  Returns
    (occurs, compat, absent) where ``absent`` (only when requested) lists
    ``(size, day_sorted_leaf_indices)`` for internal non-root clusters of
    ``t`` missing from the reference tree, as needed by merge_trees.
    """
    cap = len(t.parent)
    children = t.children
    tleaf = t.leaf
    day = ctx.day_of_label
    occurs_interval = ctx.occurs_interval
    if order is None:
        order = t.preorder()

    occurs = [False] * cap
    compat = [True] * cap
    absent: list[tuple[int, list[int]]] = []
    mn = [0] * cap
    mx = [0] * cap
    sz = [0] * cap

    if collect_absent:
        # Merge path: build day-sorted leaf lists so absent clusters come
        # out ready for insertion.
        lists: dict[int, list[int]] = {}
        for v in reversed(order):
            o = tleaf[v]
            if o >= 0:
                d = day[o]
                lists[v] = [d]
                mn[v] = mx[v] = d
                sz[v] = 1
                occurs[v] = True
                continue
            merged: list[int] = []
            for c in children[v]:
                merged += lists.pop(c)
            merged.sort()
            lists[v] = merged
            s = len(merged)
            a = merged[0]
            b = merged[-1]
            mn[v], mx[v], sz[v] = a, b, s
            occurs[v] = occurs_interval(a, b, s)
            if not occurs[v] and t.parent[v] >= 0:
                absent.append((s, merged))
    else:
        for v in reversed(order):
            o = tleaf[v]
            if o >= 0:
                mn[v] = mx[v] = day[o]
                sz[v] = 1
                occurs[v] = True
                continue
            kids = children[v]
            c0 = kids[0]
            a = mn[c0]
            b = mx[c0]
            s = sz[c0]
            for c in kids[1:]:
                if mn[c] < a:
                    a = mn[c]
                if mx[c] > b:
                    b = mx[c]
                s += sz[c]
            mn[v], mx[v], sz[v] = a, b, s
            occurs[v] = occurs_interval(a, b, s)

    if not want_compat:
        return occurs, compat, absent

    heavy = [-1] * cap
    for v in order:
        kids = children[v]
        if kids:
            hb = kids[0]
            for c in kids[1:]:
                if sz[c] > sz[hb]:
                    hb = c
            heavy[v] = hb

    ref_parent = ctx.parent
    node_lo = ctx.node_lo
    node_hi = ctx.node_hi
    kids_lo = ctx.kids_lo
    kids_size = ctx.kids_size
    leafnode_at_day = ctx.leafnode_at_day
    stamp = [0] * ctx.n  # keyed by the child interval's first day index
    epoch = 0
    tparent = t.parent

    for s_top in order:
        p = tparent[s_top]
        if p >= 0 and heavy[p] == s_top:
            continue  # interior node of some heavy path
        chain = [s_top]
        v = heavy[s_top]
        while v != -1:
            chain.append(v)
            v = heavy[v]
        d0 = day[tleaf[chain[-1]]]
        r = leafnode_at_day[d0]
        span = 1
        epoch += 1
        klo = ksz = None  # r is a leaf until the first climb
        for v in reversed(chain[:-1]):
            a = mn[v]
            b = mx[v]
            if node_lo[r] > a or node_hi[r] < b:
                while node_lo[r] > a or node_hi[r] < b:
                    prev = r
                    r = ref_parent[r]
                epoch += 1
                klo = kids_lo[r]
                ksz = kids_size[r]
                pos = bisect_right(klo, node_lo[prev]) - 1
                stamp[klo[pos]] = epoch
                span = ksz[pos]
            hv = heavy[v]
            for c in children[v]:
                if c == hv:
                    continue
                st2 = [c]
                while st2:
                    u = st2.pop()
                    o = tleaf[u]
                    if o >= 0:
                        pos = bisect_right(klo, day[o]) - 1
                        key = klo[pos]
                        if stamp[key] != epoch:
                            stamp[key] = epoch
                            span += ksz[pos]
                    else:
                        st2.extend(children[u])
            compat[v] = span == sz[v]
    return occurs, compat, absent


def _match_weights(t: Tree, sources: list[tuple[Tree, Sequence[int]]]) -> list[int]:
    """Per-node weights for ``t`` copied from source trees that jointly
    contain every cluster of ``t``.

    Matching is by day-interval identity against each source in turn, one
    linear pass per source; raises if some cluster is covered by no source.
    """
    cap = len(t.parent)
    out = [-1] * cap
    for src, wsrc in sources:
        ctx = _RefContext(src, light=True)
        day = ctx.day_of_label
        node_for = ctx.node_for_interval
        mn = [0] * cap
        mx = [0] * cap
        sz = [0] * cap
        for v in t.postorder():
            if t.leaf[v] >= 0:
                mn[v] = mx[v] = day[t.leaf[v]]
                sz[v] = 1
            else:
                kids = t.children[v]
                mn[v] = min(mn[c] for c in kids)
                mx[v] = max(mx[c] for c in kids)
                sz[v] = sum(sz[c] for c in kids)
            if out[v] < 0:
                hit = node_for(mn[v], mx[v], sz[v])
                if hit >= 0:
                    out[v] = wsrc[hit]
    if any(out[v] < 0 for v in t.preorder()):
        raise ValueError("a cluster of the tree occurs in no weight source")
    return out


def compatible_with_tree_flags(t: Tree, t_ref: Tree) -> list[bool]:
    """Per-node flags: is each cluster of ``t`` compatible with ``t_ref``?"""
    _, compat, _ = _cluster_flags(t, _RefContext(t_ref))
    return compat


def one_way_compatible(t_a: Tree, t_b: Tree) -> Tree:
    """Copy of ``t_a`` keeping exactly the clusters compatible with ``t_b``.

    Asymmetric: clusters of ``t_b`` play no part in the output beyond acting
    as the compatibility reference.
    """
    if t_a.universe is not t_b.universe or t_a.leaf_bits() != t_b.leaf_bits():
        raise LeafSetMismatchError("one_way_compatible requires identical leaf sets")
    _, compat, _ = _cluster_flags(t_a, _RefContext(t_b))
    out = t_a.copy()
    delete_nodes(out, [v for v in out.preorder()
                       if not compat[v] and out.parent[v] >= 0 and out.leaf[v] < 0])
    return out


# ---------------------------------------------------------------------------
# Merge: cluster-collection union of two compatible trees
# ---------------------------------------------------------------------------


def merge_trees(t_a: Tree, t_b: Tree) -> Tree:
    """Tree whose cluster collection is exactly C(t_a) union C(t_b).

    Clusters of ``t_b`` absent from ``t_a`` are found with a Day-table pass
    and inserted into a copy of ``t_a`` under their smallest strict
    superset, largest first.  Incompatible inputs raise
    ``IncompatibleTreesError`` naming an offending cluster.
    """
    if t_a.universe is not t_b.universe or t_a.leaf_bits() != t_b.leaf_bits():
        raise LeafSetMismatchError("merge_trees requires identical leaf sets")
    return _merge_into(t_a.copy(), _RefContext(t_a, light=True), t_b)


def _merge_into(out: Tree, ctx: _RefContext, t_b: Tree) -> Tree:
    """Merge core: mutates ``out`` (whose pre-mutation context is ``ctx``)."""
    _, _, absent = _cluster_flags(t_b, ctx, want_compat=False, collect_absent=True)
    if not absent:
        return out
    sizes = list(ctx.size)
    label_at_day = ctx.label_at_day
    leafnode = [-1] * ctx.n
    for d, v in enumerate(ctx.leafnode_at_day):
        leafnode[label_at_day[d]] = v
    cap = len(out.parent)
    stamp = [0] * cap
    resolved = [0] * cap
    hitstamp = [0] * cap
    tag = 0
    touched: set[int] = set()
    absent.sort(key=lambda e: (-e[0], e[1][0]))

    def describe(day_leaves: list[int]) -> str:
        labs = sorted(out.universe.label(label_at_day[d]) for d in day_leaves)
        return "{" + ",".join(labs) + "}"

    for m, day_leaves in absent:
        tag += 1
        l0 = leafnode[label_at_day[day_leaves[0]]]
        p = out.parent[l0]
        while p >= 0 and sizes[p] < m:
            p = out.parent[p]
        if p < 0 or sizes[p] == m:
            raise IncompatibleTreesError(f"cluster {describe(day_leaves)} crosses the other tree")
        hit: list[int] = []
        total = 0
        for d in day_leaves:
            x = leafnode[label_at_day[d]]
            path: list[int] = []
            while x != p and (x >= len(stamp) or stamp[x] != tag):
                path.append(x)
                x = out.parent[x]
                if x < 0:
                    raise IncompatibleTreesError(
                        f"cluster {describe(day_leaves)} crosses the other tree")
            child = path[-1] if x == p else resolved[x]
            for y in path:
                if y < len(stamp):
                    stamp[y] = tag
                    resolved[y] = child
            if child < len(hitstamp) and hitstamp[child] != tag:
                hitstamp[child] = tag
                hit.append(child)
                total += sizes[child]
        if total != m or len(hit) < 2:
            raise IncompatibleTreesError(f"cluster {describe(day_leaves)} crosses the other tree")
        # Deferred-splice insert: reparent the hit children under a new node
        # and leave their stale entries in p's child list for one cleanup
        # pass at the end (repeated in-place splices are quadratic in the
        # degree of p).  Only parent links matter to the climbs above.
        u = len(out.parent)
        out.parent.append(p)
        out.children.append(hit)
        out.leaf.append(-1)
        out.children[p].append(u)
        for c in hit:
            out.parent[c] = u
        touched.add(p)
        sizes.append(m)
        stamp.append(0)
        resolved.append(0)
        hitstamp.append(0)
    for p in touched:
        out.children[p] = [c for c in out.children[p] if out.parent[c] == p]
    return out


# ---------------------------------------------------------------------------
# Centroid path decomposition
# ---------------------------------------------------------------------------


@dataclass
class CentroidDecomposition:
    """A root-to-leaf path that always descends into a child with the most
    leaf descendants, plus the side trees hanging off it.

    ``path`` is leaf-first: ``path[0]`` is the path's leaf, ``path[-1]`` the
    root.  ``side_roots[i]`` holds the off-path children of ``path[i]``.
    """

    tree: Tree
    path: list[int]
    side_roots: list[list[int]]
    leafcounts: list[int] = field(repr=False)

    def side_trees(self) -> list[tuple[int, int]]:
        """(path position, side tree root) pairs, path-leaf end first."""
        out = []
        for i, roots in enumerate(self.side_roots):
            for r in roots:
                out.append((i, r))
        return out


def centroid_decompose(t: Tree) -> CentroidDecomposition:
    """Decompose ``t`` into a centroid path and its side trees.

    Ties between equally heavy children are broken leftmost for determinism.
    """
    cnt = t.leafcounts()
    path_rf: list[int] = []
    v = t.root
    while True:
        path_rf.append(v)
        if t.leaf[v] >= 0:
            break
        best = t.children[v][0]
        for c in t.children[v][1:]:
            if cnt[c] > cnt[best]:  # strict: leftmost child wins ties
                best = c
        v = best
    path = list(reversed(path_rf))
    on_path = set(path)
    side_roots: list[list[int]] = []
    for v in path:
        if t.leaf[v] >= 0:
            side_roots.append([])
        else:
            side_roots.append([c for c in t.children[v] if c not in on_path])
    return CentroidDecomposition(t, path, side_roots, cnt)


# ---------------------------------------------------------------------------
# Induced subtrees
# ---------------------------------------------------------------------------


def _virtual_tree(sorted_nodes: list[int], lca: LcaIndex):
    """Stack-based construction of the lca-closure of ``sorted_nodes`` (which
    must be in first-visit order).  Returns (vnodes, vparent) over source
    node ids; vnodes is in first-visit order, vparent maps into it."""
    depth = lca.depth
    stack = [sorted_nodes[0]]
    vparent: dict[int, int] = {}
    vnodes = [sorted_nodes[0]]
    for x in sorted_nodes[1:]:
        a = lca.lca(stack[-1], x)
        if a != stack[-1]:
            while len(stack) >= 2 and depth[stack[-2]] >= depth[a]:
                vparent[stack[-1]] = stack[-2]
                stack.pop()
            if depth[stack[-1]] > depth[a]:
                vparent[stack[-1]] = a
                stack.pop()
                if not stack or stack[-1] != a:
                    vnodes.append(a)
                    stack.append(a)
        stack.append(x)
        vnodes.append(x)
    while len(stack) >= 2:
        vparent[stack[-1]] = stack[-2]
        stack.pop()
    return vnodes, vparent


def induced_subtree(t: Tree, c: Cluster | Iterable[int],
                    index: LcaIndex | None = None) -> tuple[Tree, dict[int, int]]:
    """Subtree of ``t`` induced by the leaf set ``c``: leaves plus pairwise
    lowest common ancestors, ancestor relations preserved.

    Returns the induced tree and a mapping from induced node ids to source
    node ids.  Pass a prebuilt ``LcaIndex`` to amortize setup across calls.
    """
    ordinals = c.ordinals() if isinstance(c, Cluster) else list(c)
    if not ordinals:
        raise ValueError("cannot induce a subtree on an empty leaf set")
    if index is None:
        index = LcaIndex(t)
    leafnode = t.leaf_node_of()
    nodes = [leafnode[o] for o in ordinals]
    if any(v < 0 for v in nodes):
        raise ValueError("leaf set not contained in the tree")
    nodes.sort(key=index.first.__getitem__)
    out = Tree(t.universe)
    if len(nodes) == 1:
        src = nodes[0]
        out.add_node(-1, t.leaf[src])
        return out, {0: src}
    vnodes, vparent = _virtual_tree(nodes, index)
    vnodes_sorted = sorted(set(vnodes), key=index.first.__getitem__)
    new_id: dict[int, int] = {}
    mapping: dict[int, int] = {}
    for src in vnodes_sorted:
        parent_src = vparent.get(src, -1)
        pid = new_id[parent_src] if parent_src in new_id else -1
        nid = out.add_node(pid, t.leaf[src])
        new_id[src] = nid
        mapping[nid] = src
    return out, mapping


# ---------------------------------------------------------------------------
# Path maxima (ancestor-doubling with prefix maxima)
# ---------------------------------------------------------------------------


class PathMaxIndex:
    """Max node weight along ancestor-to-descendant paths.

    Doubling tables: ``up[k][v]`` is the 2^k-th ancestor, ``mx[k][v]`` the
    max weight over the 2^k nodes starting at ``v`` going up (excluding the
    landing node).  Build O(n log n), query O(log n).
    """

    __slots__ = ("depth", "up", "mx")

    def __init__(self, t: Tree, weights: Sequence[int], depth: Sequence[int] | None = None):
        cap = len(t.parent)
        if depth is None:
            depth = [0] * cap
            for v in t.preorder():
                p = t.parent[v]
                if p >= 0:
                    depth[v] = depth[p] + 1
        self.depth = list(depth)
        up0 = [p if p >= 0 else v for v, p in enumerate(t.parent)]
        mx0 = list(weights)
        self.up = [up0]
        self.mx = [mx0]
        maxd = max(self.depth)
        k = 1
        while (1 << k) <= maxd + 1:
            pu = self.up[-1]
            pm = self.mx[-1]
            self.up.append([pu[pu[v]] for v in range(cap)])
            self.mx.append([max(pm[v], pm[pu[v]]) for v in range(cap)])
            k += 1

    def _climb_max(self, v: int, steps: int) -> int:
        """Max over ``steps`` nodes starting at ``v`` going upward."""
        acc = None
        k = 0
        while steps:
            if steps & 1:
                m = self.mx[k][v]
                acc = m if acc is None or m > acc else acc
                v = self.up[k][v]
            steps >>= 1
            k += 1
        return acc

    def ancestor_at(self, v: int, target_depth: int) -> int:
        steps = self.depth[v] - target_depth
        k = 0
        while steps:
            if steps & 1:
                v = self.up[k][v]
            steps >>= 1
            k += 1
        return v

    def query(self, u: int, v: int) -> int:
        """Max weight on the inclusive path from ancestor ``u`` down to ``v``."""
        d = self.depth[v] - self.depth[u]
        if d < 0 or self.ancestor_at(v, self.depth[u]) != u:
            raise ValueError("second node is not a descendant of the first")
        return self._climb_max(v, d + 1)

    def max_strictly_between(self, u: int, v: int) -> int | None:
        """Max weight over the open path between ancestor ``u`` and ``v``;
        None when they are adjacent."""
        d = self.depth[v] - self.depth[u]
        if d <= 1:
            return None
        return self._climb_max(self.up[0][v], d - 1)


def path_max(index: PathMaxIndex, u: int, v: int) -> int:
    """Maximum weight on the inclusive path from ancestor ``u`` to ``v``."""
    return index.query(u, v)


# ---------------------------------------------------------------------------
# Ordered max-multiset
# ---------------------------------------------------------------------------


class MaxMultiset:
    """Multiset of (integer key, handle) pairs with max lookup.

    Keys are small non-negative ints (occurrence counts), so buckets plus a
    lazily descending max pointer give O(1) amortized operations.
    """

    __slots__ = ("_key_of", "_counts", "_hi", "_len")

    def __init__(self):
        self._key_of: dict[int, int] = {}
        self._counts: list[int] = []
        self._hi = -1
        self._len = 0

    def insert(self, handle: int, key: int) -> None:
        if handle in self._key_of:
            raise KeyError(f"handle {handle} already present")
        if key < 0:
            raise ValueError("keys must be non-negative")
        self._key_of[handle] = key
        if key >= len(self._counts):
            self._counts.extend([0] * (key + 1 - len(self._counts)))
        self._counts[key] += 1
        if key > self._hi:
            self._hi = key
        self._len += 1

    def remove(self, handle: int) -> None:
        key = self._key_of.pop(handle, None)
        if key is None:
            raise KeyError(f"handle {handle} not present")
        self._counts[key] -= 1
        self._len -= 1

    def __contains__(self, handle: int) -> bool:
        return handle in self._key_of

    def max(self) -> int | None:
        if self._len == 0:
            return None
        while self._counts[self._hi] == 0:
            self._hi -= 1
        return self._hi

    def __len__(self) -> int:
        return self._len

    def __bool__(self) -> bool:
        return self._len > 0


# ---------------------------------------------------------------------------
# Weighted restrictions with special nodes
# ---------------------------------------------------------------------------


class RestrictedTree:
    """A weighted tree used as the reference side of cluster filtering.

    Ordinary nodes mirror nodes of the source tree; a *special* node
    summarizes a contracted source path by its maximum weight and has
    exactly one child.  ``outside[v]`` records whether the node's source
    subtree reaches leaves outside this restriction's leaf set; such nodes
    stay incompatible with any strict superset of their restricted cluster,
    which is what preserves max-incompatible-weight queries under
    restriction.  Special nodes always have ``outside`` set.
    """

    __slots__ = (
        "tree", "weight", "special", "outside", "size", "source",
        "depth", "day_of_label", "leafnode_of_label", "leafnode_at_day",
        "lca", "_pmx", "n_leaves",
    )

    def __init__(self, tree: Tree, weight: list[int], special: list[bool],
                 outside: list[bool], source: list[int]):
        self.tree = tree
        self.weight = weight
        self.special = special
        self.outside = outside
        self.source = source
        cap = len(tree.parent)
        self.lca = LcaIndex(tree)
        self.depth = self.lca.depth
        order = self.lca.order
        self.size = [0] * cap
        size = self.size
        for v in reversed(order):
            size[v] = 1 if tree.leaf[v] >= 0 else sum(size[c] for c in tree.children[v])
        nuniv = len(tree.universe)
        self.day_of_label = [-1] * nuniv
        self.leafnode_of_label = [-1] * nuniv
        self.leafnode_at_day = []
        for v in order:
            o = tree.leaf[v]
            if o >= 0:
                self.day_of_label[o] = len(self.leafnode_at_day)
                self.leafnode_of_label[o] = v
                self.leafnode_at_day.append(v)
        self.n_leaves = len(self.leafnode_at_day)
        self._pmx: PathMaxIndex | None = None

    @classmethod
    def from_tree(cls, t: Tree, weights: Sequence[int]) -> "RestrictedTree":
        """Wrap a plain tree: no special nodes, nothing outside."""
        cap = len(t.parent)
        return cls(t.copy(), list(weights), [False] * cap, [False] * cap,
                   list(range(cap)))

    def pmx(self) -> PathMaxIndex:
        if self._pmx is None:
            self._pmx = PathMaxIndex(self.tree, self.weight, self.depth)
        return self._pmx

    def restrict(self, ordinals: Sequence[int]) -> "RestrictedTree":
        """The weighted restriction of this tree to the given leaf labels."""
        if not ordinals:
            raise ValueError("cannot restrict to an empty leaf set")
        t = self.tree
        nodes = sorted((self.leafnode_of_label[o] for o in ordinals),
                       key=self.lca.first.__getitem__)
        out = Tree(t.universe)
        weight: list[int] = []
        special: list[bool] = []
        outside: list[bool] = []
        source: list[int] = []

        def emit(parent_new: int, src: int, leaf_ord: int) -> int:
            nid = out.add_node(parent_new, leaf_ord)
            weight.append(self.weight[src])
            special.append(False)
            outside.append(False)  # finalized below
            source.append(src)
            return nid

        if len(nodes) == 1:
            src = nodes[0]
            emit(-1, src, t.leaf[src])
            rt = RestrictedTree(out, weight, special, outside, source)
            return rt
        vnodes, vparent = _virtual_tree(nodes, self.lca)
        vsorted = sorted(set(vnodes), key=self.lca.first.__getitem__)
        pmx = self.pmx()
        new_id: dict[int, int] = {}
        for src in vsorted:
            psrc = vparent.get(src, -1)
            if psrc < 0:
                new_id[src] = emit(-1, src, t.leaf[src])
                continue
            pnew = new_id[psrc]
            between = pmx.max_strictly_between(psrc, src)
            if between is not None:
                z = out.add_node(pnew, -1)
                weight.append(between)
                special.append(True)
                outside.append(True)
                source.append(-1)
                pnew = z
            new_id[src] = emit(pnew, src, t.leaf[src])
        rt = RestrictedTree(out, weight, special, outside, source)
        # A kept node reaches outside the restriction if its source did, or
        # if the source subtree holds leaves this restriction dropped.
        for v in out.preorder():
            if special[v]:
                continue
            src = source[v]
            rt.outside[v] = self.outside[src] or (self.size[src] != rt.size[v])
        return rt

    # -- reference-truth helpers (used by the naive filter and by tests) ----

    def node_crosses(self, v: int, xbits: int, node_bits: list[int]) -> bool:
        """Does node ``v`` count as incompatible with the cluster ``xbits``?

        Ordinary inside nodes use plain cluster compatibility.  Nodes marked
        ``outside`` (including special nodes) are incompatible unless the
        query is disjoint from, or contained in, their restricted cluster.
        """
        b = node_bits[v]
        inter = b & xbits
        if inter == 0 or inter == xbits:
            return False
        if inter == b:
            return self.outside[v]
        return True

    def max_crossing_weight(self, xbits: int, node_bits: list[int] | None = None) -> int:
        """Brute-force max weight over nodes incompatible with ``xbits``."""
        if node_bits is None:
            node_bits = self.tree.node_bits()
        best = 0
        for v in self.tree.preorder():
            if self.node_crosses(v, xbits, node_bits) and self.weight[v] > best:
                best = self.weight[v]
        return best


def weighted_restriction(t_b: Tree | RestrictedTree, c: Cluster | Iterable[int],
                         weights: Sequence[int] | None = None) -> RestrictedTree:
    """Weighted restriction of ``t_b`` to the leaf set ``c``.

    The induced subtree keeps original node weights; every induced edge that
    contracts a nonempty source path gains a special node carrying the
    maximum weight found on that path.
    """
    if isinstance(t_b, RestrictedTree):
        base = t_b
    else:
        if weights is None:
            raise ValueError("weights are required when restricting a plain tree")
        base = RestrictedTree.from_tree(t_b, weights)
    ordinals = c.ordinals() if isinstance(c, Cluster) else list(c)
    return base.restrict(ordinals)
