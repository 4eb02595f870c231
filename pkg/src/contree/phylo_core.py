"""Core tree model: interned leaf labels, clusters as bit vectors, rooted
multifurcating trees with delete/insert editing, Newick I/O, and tree
construction from laminar cluster families.

Conventions used throughout the package:

* Leaf labels are interned once per analysis into a ``LabelUniverse``; all
  set algebra is done on ordinals and fixed-width bit vectors (bit ``i`` set
  iff label ``i`` is present).  Plain Python ints serve as the bit vectors,
  so subset/disjointness tests are word-parallel and hash-free.
* Trees are node arenas: parallel lists ``parent`` / ``children`` / ``leaf``
  indexed by integer node ids.  Deleted slots are tombstoned and never
  reused; traversals start from the root and therefore skip them.
* Canonical Newick output orders the children of every node by the smallest
  leaf ordinal in their subtree, which makes output byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence


class ConsensusError(Exception):
    """Base class for all errors raised by this package."""


class NewickError(ConsensusError):
    """Malformed Newick input. ``position`` is a 0-based character offset
    within the expression; ``line`` is set when parsing multi-tree files."""

    def __init__(self, message: str, position: int | None = None, line: int | None = None):
        self.message = message
        self.position = position
        self.line = line
        super().__init__(message)

    def __str__(self) -> str:
        loc = ""
        if self.line is not None:
            loc += f" (line {self.line}"
            loc += f", column {self.position + 1})" if self.position is not None else ")"
        elif self.position is not None:
            loc += f" (column {self.position + 1})"
        return self.message + loc


class UnknownLabelError(NewickError):
    """A leaf label not present in the fixed universe was encountered."""


class LeafSetMismatchError(ConsensusError):
    """Trees that are required to share one leaf label set do not."""


class IncompatiblePairError(ConsensusError):
    """A crossing pair of clusters where a laminar family was required."""

    def __init__(self, first, second):
        self.pair = (first, second)
        super().__init__(f"incompatible cluster pair: {first} vs {second}")


class IncompatibleTreesError(ConsensusError):
    """Two trees that were required to be compatible are not."""


class MissingWeightError(ConsensusError):
    """A cluster without a recorded occurrence weight was encountered."""


_DEAD = -2  # parent marker for tombstoned arena slots


class LabelUniverse:
    """An ordered set of distinct leaf labels with dense, stable ordinals."""

    __slots__ = ("labels", "index")

    def __init__(self, labels: Iterable[str]):
        self.labels: list[str] = list(labels)
        self.index: dict[str, int] = {}
        for i, lab in enumerate(self.labels):
            if lab in self.index:
                raise ValueError(f"duplicate label in universe: {lab!r}")
            self.index[lab] = i

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def ordinal(self, label: str) -> int:
        return self.index[label]

    def label(self, ordinal: int) -> str:
        return self.labels[ordinal]

    @property
    def full_bits(self) -> int:
        return (1 << len(self.labels)) - 1

    def bits_of(self, labels: Iterable[str]) -> int:
        bits = 0
        for lab in labels:
            bits |= 1 << self.index[lab]
        return bits

    def __repr__(self) -> str:
        return f"LabelUniverse({self.labels!r})"


@dataclass(frozen=True)
class Cluster:
    """A nonempty subset of the leaf label set, stored as a bit vector."""

    universe: LabelUniverse
    bits: int

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("cluster must be a nonempty label subset")
        if self.bits >> len(self.universe):
            raise ValueError("cluster bits exceed universe width")

    @classmethod
    def from_labels(cls, universe: LabelUniverse, labels: Iterable[str]) -> "Cluster":
        return cls(universe, universe.bits_of(labels))

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    @property
    def is_trivial(self) -> bool:
        return self.size == 1 or self.size == len(self.universe)

    def labels(self) -> tuple[str, ...]:
        u = self.universe
        return tuple(u.labels[i] for i in _iter_bits(self.bits))

    def ordinals(self) -> list[int]:
        return list(_iter_bits(self.bits))

    def __repr__(self) -> str:
        return "{" + ",".join(self.labels()) + "}"


def _iter_bits(bits: int) -> Iterator[int]:
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low


def bits_compatible(b1: int, b2: int) -> bool:
    """Word-parallel test: nested either way or disjoint."""
    inter = b1 & b2
    return inter == 0 or inter == b1 or inter == b2


def clusters_compatible(c1: Cluster, c2: Cluster) -> bool:
    """True iff the two clusters are nested either way or disjoint."""
    if c1.universe is not c2.universe:
        raise ValueError("clusters from different universes")
    return bits_compatible(c1.bits, c2.bits)


class Tree:
    """Rooted, unordered, multifurcating leaf-labeled tree.

    Every internal node has at least two children (except transiently inside
    editing operations); leaves carry distinct label ordinals.  Node ids are
    indices into the parallel arena lists and remain valid across deletes of
    *other* nodes.
    """

    __slots__ = ("universe", "parent", "children", "leaf", "root")

    def __init__(self, universe: LabelUniverse):
        self.universe = universe
        self.parent: list[int] = []
        self.children: list[list[int]] = []
        self.leaf: list[int] = []  # label ordinal, or -1 for internal nodes
        self.root: int = -1

    # -- construction -------------------------------------------------------

    def add_node(self, parent: int, leaf_ordinal: int = -1) -> int:
        v = len(self.parent)
        self.parent.append(parent)
        self.children.append([])
        self.leaf.append(leaf_ordinal)
        if parent >= 0:
            self.children[parent].append(v)
        else:
            self.root = v
        return v

    def copy(self) -> "Tree":
        t = Tree(self.universe)
        t.parent = list(self.parent)
        t.children = [list(c) for c in self.children]
        t.leaf = list(self.leaf)
        t.root = self.root
        return t

    # -- traversal ----------------------------------------------------------

    def preorder(self) -> list[int]:
        """Node ids in left-to-right depth-first order, parents first.

        Index structures rely on this visiting children in child-list
        order, so sibling subtrees occupy ascending index intervals.
        """
        out: list[int] = []
        stack = [self.root]
        children = self.children
        while stack:
            v = stack.pop()
            out.append(v)
            kids = children[v]
            if kids:
                stack.extend(reversed(kids))
        return out

    def postorder(self) -> list[int]:
        """Node ids, every child before its parent."""
        out = self.preorder()
        out.reverse()
        return out

    def is_leaf(self, v: int) -> bool:
        return self.leaf[v] >= 0

    def leaf_nodes(self) -> list[int]:
        return [v for v in self.preorder() if self.leaf[v] >= 0]

    def leaf_node_of(self) -> list[int]:
        """Array mapping label ordinal to its leaf node id (-1 if absent)."""
        m = [-1] * len(self.universe)
        for v in self.leaf_nodes():
            m[self.leaf[v]] = v
        return m

    def leaf_bits(self) -> int:
        bits = 0
        for v in self.leaf_nodes():
            bits |= 1 << self.leaf[v]
        return bits

    def n_nodes(self) -> int:
        return len(self.preorder())

    def leafcounts(self) -> list[int]:
        """Per-node number of leaf descendants (arena-indexed)."""
        cnt = [0] * len(self.parent)
        for v in self.postorder():
            if self.leaf[v] >= 0:
                cnt[v] = 1
            else:
                cnt[v] = sum(cnt[c] for c in self.children[v])
        return cnt

    def node_bits(self) -> list[int]:
        """Per-node cluster bit vectors, computed bottom-up (arena-indexed)."""
        bits = [0] * len(self.parent)
        for v in self.postorder():
            if self.leaf[v] >= 0:
                bits[v] = 1 << self.leaf[v]
            else:
                b = 0
                for c in self.children[v]:
                    b |= bits[c]
                bits[v] = b
        return bits

    def subtree_leaf_ordinals(self, v: int) -> list[int]:
        out = []
        stack = [v]
        while stack:
            u = stack.pop()
            if self.leaf[u] >= 0:
                out.append(self.leaf[u])
            else:
                stack.extend(self.children[u])
        return out

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        """Assert the structural invariants; raises ConsensusError on breach."""
        seen_labels: set[int] = set()
        order = self.preorder()
        seen_nodes = set(order)
        if len(seen_nodes) != len(order):
            raise ConsensusError("cycle detected in tree")
        for v in order:
            for c in self.children[v]:
                if self.parent[c] != v:
                    raise ConsensusError("parent/child links inconsistent")
            if self.leaf[v] >= 0:
                if self.children[v]:
                    raise ConsensusError("leaf node with children")
                if self.leaf[v] in seen_labels:
                    raise ConsensusError("duplicate leaf label")
                seen_labels.add(self.leaf[v])
            elif len(self.children[v]) < 2:
                raise ConsensusError("internal node with fewer than 2 children")
        if self.parent[self.root] != -1:
            raise ConsensusError("root has a parent")

    def __repr__(self) -> str:
        return f"<Tree {write_newick(self)}>"


# ---------------------------------------------------------------------------
# Editing operations
# ---------------------------------------------------------------------------


def delete_node(t: Tree, v: int) -> None:
    """Splice out a non-root internal node: its children move to its parent.

    The cluster collection of the tree loses exactly the cluster of ``v``.
    Cost is proportional to the number of children of ``v``.
    """
    p = t.parent[v]
    if p < 0:
        raise ValueError("cannot delete the root")
    if t.leaf[v] >= 0:
        raise ValueError("cannot delete a leaf")
    sibs = t.children[p]
    pos = sibs.index(v)
    kids = t.children[v]
    sibs[pos:pos + 1] = kids
    for c in kids:
        t.parent[c] = p
    t.parent[v] = _DEAD
    t.children[v] = []


def delete_nodes(t: Tree, nodes: Iterable[int]) -> None:
    """Splice out many non-root internal nodes at once.

    Equivalent to repeated :func:`delete_node` but rebuilds each affected
    child list once, which matters when whole batches of high-degree nodes
    go in one pass.
    """
    dead = set(nodes)
    if not dead:
        return
    for v in dead:
        if t.parent[v] < 0:
            raise ValueError("cannot delete the root")
        if t.leaf[v] >= 0:
            raise ValueError("cannot delete a leaf")
    for v in t.preorder():
        if v in dead:
            continue
        kids = t.children[v]
        if not any(c in dead for c in kids):
            continue
        flat: list[int] = []
        stack = list(reversed(kids))
        while stack:
            c = stack.pop()
            if c in dead:
                stack.extend(reversed(t.children[c]))
            else:
                flat.append(c)
                t.parent[c] = v
        t.children[v] = flat
    for v in dead:
        t.parent[v] = _DEAD
        t.children[v] = []


def insert_node(t: Tree, v: int, x: Sequence[int]) -> int:
    """Insert a new internal node under ``v`` adopting the children ``x``.

    ``x`` must be a proper subset of ``v``'s children with at least two
    members.  Returns the new node id.
    """
    kids = t.children[v]
    xs = list(x)
    if len(xs) < 2:
        raise ValueError("insert requires at least two children")
    xset = set(xs)
    if len(xset) != len(xs) or not xset.issubset(kids) or len(xs) == len(kids):
        raise ValueError("insert requires a proper subset of the node's children")
    u = len(t.parent)
    t.parent.append(v)
    t.children.append(xs)
    t.leaf.append(-1)
    pos = kids.index(xs[0])
    t.children[v] = [c for c in kids if c not in xset]
    t.children[v].insert(min(pos, len(t.children[v])), u)
    for c in xs:
        t.parent[c] = u
    return u


# ---------------------------------------------------------------------------
# Newick I/O
# ---------------------------------------------------------------------------

_LABEL_STOP = set("(),:;")


def parse_newick(text: str, universe: LabelUniverse | None = None) -> Tree:
    """Parse one Newick expression terminated by ';' into a validated Tree.

    Branch lengths and internal node labels are accepted and discarded.
    When ``universe`` is given, all leaf labels must belong to it; otherwise
    a fresh universe is created from the labels in lexicographic order.
    """
    i, n = 0, len(text)

    def skip_ws(j: int) -> int:
        while j < n and text[j].isspace():
            j += 1
        return j

    def read_label(j: int) -> tuple[str, int]:
        start = j
        while j < n and text[j] not in _LABEL_STOP and not text[j].isspace():
            j += 1
        if j == start:
            raise NewickError("expected a label", start)
        return text[start:j], j

    def skip_length(j: int) -> int:
        if j < n and text[j] == ":":
            j += 1
            start = j
            while j < n and (text[j].isdigit() or text[j] in ".+-eE"):
                j += 1
            if j == start:
                raise NewickError("expected a branch length after ':'", j)
        return j

    # Iterative parse (deep caterpillar inputs must not hit the interpreter
    # recursion limit); builds the topology with string labels first.
    parents: list[int] = []
    kids: list[list[int]] = []
    labels: list[str | None] = []

    def new_node(parent: int) -> int:
        parents.append(parent)
        kids.append([])
        labels.append(None)
        if parent >= 0:
            kids[parent].append(len(parents) - 1)
        return len(parents) - 1

    open_nodes: list[int] = []
    expect_node = True
    done = False
    i = skip_ws(i)
    while not done:
        if i >= n:
            raise NewickError("unexpected end of input", i)
        ch = text[i]
        if expect_node:
            parent = open_nodes[-1] if open_nodes else -1
            if ch == "(":
                open_nodes.append(new_node(parent))
                i += 1
            else:
                lab, i = read_label(i)
                labels[new_node(parent)] = lab
                i = skip_length(i)
                expect_node = False
        elif ch == ",":
            if not open_nodes:
                raise NewickError("',' outside any group", i)
            expect_node = True
            i += 1
        elif ch == ")":
            if not open_nodes:
                raise NewickError("unmatched ')'", i)
            v = open_nodes.pop()
            if len(kids[v]) < 2:
                raise NewickError("internal node with fewer than 2 children", i)
            i = skip_ws(i + 1)
            if i < n and text[i] not in _LABEL_STOP and not text[i].isspace():
                _, i = read_label(i)  # internal label: discard
            i = skip_length(i)
        elif ch == ";":
            if open_nodes:
                raise NewickError("unbalanced parentheses", i)
            done = True
            i += 1
        else:
            raise NewickError("expected ',' or ')'", i)
        i = skip_ws(i)
    if i < n:
        raise NewickError("trailing characters after ';'", i)

    leaf_labels = [lab for lab in labels if lab is not None]
    if len(set(leaf_labels)) != len(leaf_labels):
        dup = next(lab for k, lab in enumerate(leaf_labels) if lab in leaf_labels[:k])
        raise NewickError(f"duplicate leaf label {dup!r}")
    if universe is None:
        universe = LabelUniverse(sorted(leaf_labels))
    else:
        for lab in leaf_labels:
            if lab not in universe:
                raise UnknownLabelError(f"label {lab!r} not in the fixed universe")

    t = Tree(universe)
    # Arena ids mirror parse order; root is node 0 of the parse.
    for v in range(len(parents)):
        ordinal = universe.ordinal(labels[v]) if labels[v] is not None else -1
        t.parent.append(parents[v])
        t.children.append(list(kids[v]))
        t.leaf.append(ordinal)
    t.root = 0
    t.validate()
    return t


def write_newick(t: Tree) -> str:
    """Canonical Newick: children ordered by smallest leaf ordinal."""
    minleaf: dict[int, int] = {}
    parts: dict[int, str] = {}
    for v in t.postorder():
        if t.leaf[v] >= 0:
            minleaf[v] = t.leaf[v]
            parts[v] = t.universe.label(t.leaf[v])
        else:
            cs = sorted(t.children[v], key=minleaf.__getitem__)
            minleaf[v] = minleaf[cs[0]]
            parts[v] = "(" + ",".join(parts[c] for c in cs) + ")"
    return parts[t.root] + ";"


def parse_profile(lines: Iterable[str], universe: LabelUniverse | None = None) -> "Profile":
    """Parse a multi-tree input (one Newick per line, '#' comments skipped).

    The universe defaults to the sorted labels of the first tree; every
    subsequent tree must have exactly the same leaf set.
    """
    trees: list[Tree] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            t = parse_newick(line, universe)
        except UnknownLabelError as e:
            raise LeafSetMismatchError(f"line {lineno}: {e}") from e
        except NewickError as e:
            e.line = lineno
            raise
        if universe is None:
            universe = t.universe
        if t.leaf_bits() != universe.full_bits:
            raise LeafSetMismatchError(f"line {lineno}: leaf set differs from the first tree")
        trees.append(t)
    if not trees:
        raise ConsensusError("no trees in input")
    return Profile(trees)


def load_profile(path: str) -> "Profile":
    with open(path, "r", encoding="utf-8") as fh:
        return parse_profile(fh)


# ---------------------------------------------------------------------------
# Cluster collections and tree building
# ---------------------------------------------------------------------------


def cluster_collection(t: Tree) -> set[Cluster]:
    """All clusters of the tree, one per node (trivial clusters included)."""
    u = t.universe
    bits = t.node_bits()
    return {Cluster(u, bits[v]) for v in t.preorder()}


def cluster_compatible_with_tree(c: Cluster, t: Tree) -> bool:
    """True iff ``c`` is compatible with every cluster of ``t``."""
    if c.universe is not t.universe:
        raise ValueError("cluster and tree universes differ")
    cb = c.bits
    bits = t.node_bits()
    for v in t.preorder():
        if not bits_compatible(cb, bits[v]):
            return False
    return True


def tree_from_clusters(family: Iterable[Cluster], universe: LabelUniverse) -> Tree:
    """Build the unique tree whose cluster collection is ``family`` plus the
    trivial clusters.  The family must be pairwise compatible; a crossing
    pair raises ``IncompatiblePairError`` naming the offenders.

    Clusters are attached by decreasing cardinality under their smallest
    strict superset; quadratic in the family size, which is fine at the
    scales this library targets.
    """
    n = len(universe)
    full = universe.full_bits
    uniq: dict[int, Cluster] = {}
    for c in family:
        if c.universe is not universe:
            raise ValueError("cluster universe differs from the target universe")
        if c.size != 1 and c.bits != full:
            uniq[c.bits] = c
    items = sorted(uniq, key=lambda b: (-b.bit_count(), b))
    for i, b1 in enumerate(items):
        for b2 in items[i + 1:]:
            if not bits_compatible(b1, b2):
                raise IncompatiblePairError(uniq[b1], uniq[b2])

    t = Tree(universe)
    root = t.add_node(-1)
    placed: list[tuple[int, int]] = [(full, root)]  # (bits, node), sizes non-increasing
    for b in items:
        parent_node = root
        parent_bits = full
        for pb, pn in placed:
            if pb != b and (b & pb) == b and pb.bit_count() < parent_bits.bit_count():
                parent_bits, parent_node = pb, pn
        placed.append((b, t.add_node(parent_node)))
    for ordinal in range(n):
        bit = 1 << ordinal
        parent_node, parent_size = root, n
        for pb, pn in placed:
            if pb & bit and pb.bit_count() < parent_size:
                parent_size, parent_node = pb.bit_count(), pn
        t.add_node(parent_node, ordinal)
    t.validate()
    return t


def trees_isomorphic(t1: Tree, t2: Tree) -> bool:
    """True iff the two trees have identical cluster collections."""
    if t1.universe is not t2.universe:
        raise ValueError("trees from different universes")
    bits1, bits2 = t1.node_bits(), t2.node_bits()
    return ({bits1[v] for v in t1.preorder()} ==
            {bits2[v] for v in t2.preorder()})


class Profile:
    """A nonempty list of trees over one shared universe, identical leaf sets."""

    __slots__ = ("trees", "universe")

    def __init__(self, trees: Sequence[Tree]):
        if not trees:
            raise ConsensusError("a profile needs at least one tree")
        universe = trees[0].universe
        full = universe.full_bits
        for idx, t in enumerate(trees):
            if t.universe is not universe:
                raise LeafSetMismatchError(f"tree {idx} uses a different universe")
            if t.leaf_bits() != full:
                raise LeafSetMismatchError(f"tree {idx} does not span the full leaf set")
        self.trees = list(trees)
        self.universe = universe

    @property
    def k(self) -> int:
        return len(self.trees)

    @property
    def n(self) -> int:
        return len(self.universe)

    def __iter__(self):
        return iter(self.trees)

    def __len__(self):
        return len(self.trees)
