import random

import pytest

from conftest import cl, tree_labelsets
from contree import (
    Cluster,
    IncompatibleTreesError,
    LcaIndex,
    MaxMultiset,
    PathMaxIndex,
    build_cluster_table,
    centroid_decompose,
    cluster_collection,
    induced_subtree,
    lca_query,
    mark_common_clusters,
    merge_trees,
    one_way_compatible,
    parse_newick,
    path_max,
    trees_isomorphic,
    weighted_restriction,
    write_newick,
)
from contree.gen import random_profile
from contree.phylo_core import bits_compatible
from contree.tree_primitives import RestrictedTree


def _alive_bits(t):
    bits = t.node_bits()
    return {bits[v] for v in t.preorder()}


class TestClusterTable:
    def test_star_only_trivial(self):
        star = parse_newick("(a,b,c,d,e);")
        table = build_cluster_table(star)
        assert cl(star.universe, "ab") not in table
        assert cl(star.universe, "a") in table
        assert cl(star.universe, "abcde") in table

    def test_self_containment(self):
        for seed in range(15):
            t = random_profile(1, 5 + seed, seed=seed).trees[0]
            table = build_cluster_table(t)
            for c in cluster_collection(t):
                assert c in table

    def test_absent_cluster(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        table = build_cluster_table(t)
        assert cl(t.universe, "abc") not in table
        assert cl(t.universe, "cd") in table


class TestMarkCommon:
    def test_self_marks_all(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        flags = mark_common_clusters(t, build_cluster_table(t))
        assert all(flags[v] for v in t.preorder())

    def test_cross_tree_marks(self):
        t = parse_newick("((((a,b),c),d),e);")
        ref = parse_newick("(((a,b),(c,d)),e);", t.universe)
        flags = mark_common_clusters(t, build_cluster_table(ref))
        bits = t.node_bits()
        marked = {bits[v] for v in t.preorder() if flags[v]}
        shared = _alive_bits(t) & _alive_bits(ref)
        assert marked == shared
        u = t.universe
        wanted = {u.bits_of("ab"), u.bits_of("abcd"), u.full_bits,
                  *(1 << i for i in range(5))}
        assert marked == wanted

    def test_star_vs_anything_all_marked(self):
        star = parse_newick("(a,b,c,d,e);")
        ref = parse_newick("((a,c),(b,d,e));", star.universe)
        assert all(mark_common_clusters(star, build_cluster_table(ref))[v]
                   for v in star.preorder())

    def test_agrees_with_set_intersection_random(self):
        for seed in range(25):
            prof = random_profile(2, 4 + seed % 12, seed=seed)
            t, ref = prof.trees
            flags = mark_common_clusters(t, build_cluster_table(ref))
            bits = t.node_bits()
            marked = {bits[v] for v in t.preorder() if flags[v]}
            assert marked == _alive_bits(t) & _alive_bits(ref)


class TestOneWayCompatible:
    def test_star_reference_keeps_everything(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        star = parse_newick("(a,b,c,d,e);", t.universe)
        assert trees_isomorphic(one_way_compatible(t, star), t)

    def test_star_input_stays_star(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        star = parse_newick("(a,b,c,d,e);", t.universe)
        assert trees_isomorphic(one_way_compatible(star, t), star)

    def test_all_crossing_collapses_to_star(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        ref = parse_newick("((a,c),(b,d,e));", t.universe)
        out = one_way_compatible(t, ref)
        star = parse_newick("(a,b,c,d,e);", t.universe)
        assert trees_isomorphic(out, star)

    def test_idempotent_on_self(self):
        for seed in range(10):
            t = random_profile(1, 10, seed=seed).trees[0]
            assert trees_isomorphic(one_way_compatible(t, t), t)

    def test_removed_iff_incompatible_brute(self):
        for seed in range(40):
            prof = random_profile(2, 4 + seed % 9, seed=seed)
            ta, tb = prof.trees
            out = one_way_compatible(ta, tb)
            tb_bits = _alive_bits(tb)
            expected = {b for b in _alive_bits(ta)
                        if all(bits_compatible(b, o) for o in tb_bits)}
            assert _alive_bits(out) == expected


class TestMergeTrees:
    def test_merge_self(self, s_star):
        t = s_star.trees[0]
        assert trees_isomorphic(merge_trees(t, t), t)

    def test_merge_with_star(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        star = parse_newick("(a,b,c,d,e);", t.universe)
        assert trees_isomorphic(merge_trees(star, t), t)
        assert trees_isomorphic(merge_trees(t, star), t)

    def test_union_example(self):
        a = parse_newick("((a,b),(c,d),e);")
        b = parse_newick("(((a,b),(c,d)),e);", a.universe)
        assert write_newick(merge_trees(a, b)) == "(((a,b),(c,d)),e);"

    def test_exact_union_and_symmetry_random(self):
        for seed in range(40):
            prof = random_profile(2, 4 + seed % 10, seed=seed)
            ta, tb = prof.trees
            ow = one_way_compatible(ta, tb)
            ow2 = one_way_compatible(tb, ow)
            merged = merge_trees(ow2, ow)
            assert _alive_bits(merged) == _alive_bits(ow) | _alive_bits(ow2)
            assert trees_isomorphic(merged, merge_trees(ow, ow2))

    def test_incompatible_inputs_reported(self):
        a = parse_newick("((a,b),c,d,e);")
        b = parse_newick("((b,c),a,d,e);", a.universe)
        with pytest.raises(IncompatibleTreesError):
            merge_trees(a, b)


class TestLca:
    def test_singleton(self):
        t = parse_newick("((a,b),c);")
        idx = LcaIndex(t)
        for v in t.preorder():
            assert idx.lca(v, v) == v
            assert lca_query(idx, [v]) == v

    def test_all_leaves_give_root(self):
        t = parse_newick("((((a,b),c),d),e);")
        idx = LcaIndex(t)
        leaves = [v for v in t.preorder() if t.leaf[v] >= 0]
        assert lca_query(idx, leaves) == t.root

    def test_caterpillar_example(self):
        t = parse_newick("((((a,b),c),d),e);")
        idx = LcaIndex(t)
        nodeof = t.leaf_node_of()
        u = t.universe
        got = idx.lca(nodeof[u.ordinal("a")], nodeof[u.ordinal("c")])
        bits = t.node_bits()
        assert bits[got] == u.bits_of("abc")

    def test_empty_set_rejected(self):
        t = parse_newick("(a,b);")
        with pytest.raises(ValueError):
            lca_query(LcaIndex(t), [])

    def test_matches_naive_two_pointer_walk(self):
        rng = random.Random(0)
        for seed in range(15):
            t = random_profile(1, 16, seed=seed).trees[0]
            idx = LcaIndex(t)
            nodes = [v for v in t.preorder()]

            def naive(u, v):
                au = set()
                while u != -1:
                    au.add(u)
                    u = t.parent[u]
                while v not in au:
                    v = t.parent[v]
                return v

            for _ in range(50):
                u, v = rng.choice(nodes), rng.choice(nodes)
                assert idx.lca(u, v) == naive(u, v)


class TestCentroidDecomposition:
    def test_caterpillar_path_and_side_trees(self):
        t = parse_newick("((((a,b),c),d),e);")
        dec = centroid_decompose(t)
        bits = t.node_bits()
        u = t.universe
        path_bits = [bits[v] for v in reversed(dec.path)]  # root first
        assert path_bits == [u.full_bits, u.bits_of("abcd"), u.bits_of("abc"),
                             u.bits_of("ab"), u.bits_of("a")]
        side_leafsets = sorted(
            "".join(sorted(u.label(o) for o in t.subtree_leaf_ordinals(r)))
            for _, r in dec.side_trees())
        assert side_leafsets == ["b", "c", "d", "e"]

    def test_star(self):
        t = parse_newick("(a,b,c,d,e);")
        dec = centroid_decompose(t)
        assert len(dec.path) == 2  # root plus one leaf
        assert t.leaf[dec.path[0]] >= 0
        assert len(dec.side_trees()) == 4

    def test_balanced_side_tree_bound(self):
        t = parse_newick("(((a,b),(c,d)),((e,f),(g,h)));")
        dec = centroid_decompose(t)
        sizes = [len(t.subtree_leaf_ordinals(r)) for _, r in dec.side_trees()]
        assert max(sizes) == 4  # exactly n/2

    def test_invariants_random(self):
        for seed in range(25):
            n = 4 + seed % 20
            t = random_profile(1, n, seed=seed).trees[0]
            dec = centroid_decompose(t)
            seen: list[int] = []
            for _, r in dec.side_trees():
                leaves = t.subtree_leaf_ordinals(r)
                assert len(leaves) <= n / 2
                seen.extend(leaves)
            path_leaf = t.leaf[dec.path[0]]
            assert sorted(seen + [path_leaf]) == list(range(n))


class TestInducedSubtree:
    def test_full_restriction_is_isomorphic(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        sub, mapping = induced_subtree(t, Cluster(t.universe, t.universe.full_bits))
        assert trees_isomorphic(sub, t)
        for new, src in mapping.items():
            assert t.leaf[src] == sub.leaf[new]

    def test_caterpillar_example(self):
        t = parse_newick("((((a,b),c),d),e);")
        u = t.universe
        sub, mapping = induced_subtree(t, cl(u, "acd"))
        assert write_newick(sub) == "((a,c),d);"
        src_bits = t.node_bits()
        mapped = {src_bits[mapping[v]] for v in sub.preorder() if sub.leaf[v] < 0}
        assert mapped == {u.bits_of("abc"), u.bits_of("abcd")}

    def test_singleton(self):
        t = parse_newick("((a,b),c);")
        sub, mapping = induced_subtree(t, cl(t.universe, "b"))
        assert sub.n_nodes() == 1 and sub.leaf[sub.root] == t.universe.ordinal("b")

    def test_empty_rejected(self):
        t = parse_newick("(a,b);")
        with pytest.raises(ValueError):
            induced_subtree(t, [])

    def test_lca_preservation_random(self):
        rng = random.Random(7)
        for seed in range(15):
            t = random_profile(1, 12, seed=seed).trees[0]
            ords = sorted(rng.sample(range(12), 5))
            sub, mapping = induced_subtree(t, ords)
            idx_t, idx_s = LcaIndex(t), LcaIndex(sub)
            nodeof_t, nodeof_s = t.leaf_node_of(), sub.leaf_node_of()
            for _ in range(10):
                x, y = rng.choice(ords), rng.choice(ords)
                src_lca = idx_t.lca(nodeof_t[x], nodeof_t[y])
                sub_lca = idx_s.lca(nodeof_s[x], nodeof_s[y])
                assert mapping[sub_lca] == src_lca


def _weights_by_labelset(t, table: dict[frozenset, int], default: int):
    u = t.universe
    out = []
    for v, b in enumerate(t.node_bits()):
        key = frozenset(u.labels[i] for i in range(len(u)) if b >> i & 1)
        out.append(table.get(key, default))
    return out


class TestWeightedRestriction:
    def test_full_leaf_set_no_specials(self):
        t = parse_newick("(((a,b),(c,d)),e);")
        w = [1] * len(t.parent)
        rt = weighted_restriction(t, Cluster(t.universe, t.universe.full_bits), w)
        assert not any(rt.special)

    def test_worked_example(self):
        t = parse_newick("((((a,b),c),d),e);")
        u = t.universe
        weights = _weights_by_labelset(
            t, {frozenset("ab"): 3, frozenset("abc"): 1, frozenset("abcd"): 2}, 4)
        rt = weighted_restriction(t, cl(u, "acd"), weights)
        rbits = rt.tree.node_bits()
        ordinary = {rbits[v] for v in rt.tree.preorder() if not rt.special[v]}
        assert ordinary == {u.bits_of("a"), u.bits_of("c"), u.bits_of("d"),
                            u.bits_of("ac"), u.bits_of("acd")}
        specials = [v for v in rt.tree.preorder() if rt.special[v]]
        assert len(specials) == 1
        z = specials[0]
        assert rt.weight[z] == 3
        child = rt.tree.children[z]
        assert len(child) == 1 and rt.tree.leaf[child[0]] == u.ordinal("a")

    def test_special_count_bounded_by_edges(self):
        rng = random.Random(3)
        for seed in range(20):
            t = random_profile(1, 10, seed=seed).trees[0]
            w = [1] * len(t.parent)
            ords = sorted(rng.sample(range(10), rng.randint(2, 9)))
            rt = weighted_restriction(t, ords, w)
            n_specials = sum(1 for v in rt.tree.preorder() if rt.special[v])
            n_edges_induced = sum(1 for v in rt.tree.preorder()
                                  if rt.tree.parent[v] >= 0 and not rt.special[v])
            assert n_specials <= n_edges_induced

    def test_max_crossing_weight_preserved(self):
        # The restriction must answer "heaviest reference cluster crossing X"
        # identically to the unrestricted tree, for every X inside the
        # restricted leaf set.
        import itertools
        rng = random.Random(11)
        for seed in range(25):
            n = rng.randint(5, 10)
            t = random_profile(1, n, seed=seed).trees[0]
            weights = [rng.randint(1, 8) for _ in range(len(t.parent))]
            B = RestrictedTree.from_tree(t, weights)
            m = rng.randint(2, n - 1)
            sub = sorted(rng.sample(range(n), m))
            R = B.restrict(sub)
            bn, rn = B.tree.node_bits(), R.tree.node_bits()
            for r_size in range(1, m + 1):
                for combo in itertools.combinations(sub, r_size):
                    x = sum(1 << o for o in combo)
                    assert B.max_crossing_weight(x, bn) == R.max_crossing_weight(x, rn)

    def test_nested_restriction_preserves_guarantee(self):
        import itertools
        rng = random.Random(13)
        for seed in range(15):
            n = rng.randint(8, 12)
            t = random_profile(1, n, seed=100 + seed).trees[0]
            weights = [rng.randint(1, 9) for _ in range(len(t.parent))]
            B = RestrictedTree.from_tree(t, weights)
            sub1 = sorted(rng.sample(range(n), rng.randint(5, n - 1)))
            R1 = B.restrict(sub1)
            sub2 = sorted(rng.sample(sub1, rng.randint(2, len(sub1) - 1)))
            R2 = R1.restrict(sub2)
            bn, rn = B.tree.node_bits(), R2.tree.node_bits()
            for r_size in range(1, len(sub2) + 1):
                for combo in itertools.combinations(sub2, r_size):
                    x = sum(1 << o for o in combo)
                    assert B.max_crossing_weight(x, bn) == R2.max_crossing_weight(x, rn)

    def test_empty_restriction_rejected(self):
        t = parse_newick("(a,b);")
        with pytest.raises(ValueError):
            weighted_restriction(t, [], [1] * len(t.parent))


class TestPathMax:
    def test_single_node_path(self):
        t = parse_newick("((a,b),c);")
        w = list(range(len(t.parent)))
        idx = PathMaxIndex(t, w)
        for v in t.preorder():
            assert path_max(idx, v, v) == w[v]

    def test_root_to_leaf_covers_global_max(self):
        t = parse_newick("((((a,b),c),d),e);")
        w = [0] * len(t.parent)
        deep = [v for v in t.preorder() if t.leaf[v] >= 0 and
                t.universe.label(t.leaf[v]) == "a"][0]
        w[t.parent[deep]] = 99
        idx = PathMaxIndex(t, w)
        assert path_max(idx, t.root, deep) == 99

    def test_non_descendant_rejected(self):
        t = parse_newick("((a,b),(c,d));")
        idx = PathMaxIndex(t, [1] * len(t.parent))
        nodeof = t.leaf_node_of()
        a = nodeof[t.universe.ordinal("a")]
        c = nodeof[t.universe.ordinal("c")]
        with pytest.raises(ValueError):
            path_max(idx, a, c)

    def test_matches_naive_walk_random(self):
        rng = random.Random(5)
        checked = 0
        for seed in range(30):
            t = random_profile(1, 20, seed=seed).trees[0]
            w = [rng.randint(0, 100) for _ in range(len(t.parent))]
            idx = PathMaxIndex(t, w)
            nodes = t.preorder()
            for _ in range(40):
                v = rng.choice(nodes)
                u = v
                best = w[v]
                while u != -1:
                    if rng.random() < 0.3 or t.parent[u] == -1:
                        break
                    u = t.parent[u]
                    best = max(best, w[u])
                assert path_max(idx, u, v) == best
                checked += 1
        assert checked >= 1000


class TestMaxMultiset:
    def test_insert_remove_max(self):
        ms = MaxMultiset()
        assert ms.max() is None and not ms
        ms.insert(10, 5)
        ms.insert(11, 2)
        ms.insert(12, 5)
        assert ms.max() == 5 and len(ms) == 3
        ms.remove(10)
        assert ms.max() == 5
        ms.remove(12)
        assert ms.max() == 2
        ms.remove(11)
        assert ms.max() is None

    def test_remove_absent_is_error(self):
        ms = MaxMultiset()
        with pytest.raises(KeyError):
            ms.remove(3)
        ms.insert(3, 1)
        ms.remove(3)
        with pytest.raises(KeyError):
            ms.remove(3)

    def test_duplicate_handle_rejected(self):
        ms = MaxMultiset()
        ms.insert(1, 4)
        with pytest.raises(KeyError):
            ms.insert(1, 7)

    def test_against_reference_multiset(self):
        rng = random.Random(2)
        ms = MaxMultiset()
        ref: dict[int, int] = {}
        for step in range(2000):
            if ref and rng.random() < 0.45:
                h = rng.choice(list(ref))
                ms.remove(h)
                del ref[h]
            else:
                h = step
                key = rng.randint(0, 30)
                ms.insert(h, key)
                ref[h] = key
            assert len(ms) == len(ref)
            assert ms.max() == (max(ref.values()) if ref else None)
