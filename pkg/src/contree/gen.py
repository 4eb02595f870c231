"""Random instance generation for benchmarks and randomized testing.

Each tree is grown by recursively splitting a uniformly shuffled leaf
sequence at a uniform random position (yielding a random binary topology),
after which every internal edge is contracted independently with a fixed
probability, producing a mix of resolved and multifurcating shapes.
Deterministic for a given seed.
"""

from __future__ import annotations

import random

from .phylo_core import LabelUniverse, Profile, Tree, delete_node

DEFAULT_CONTRACT_PROB = 0.25


def make_universe(n: int) -> LabelUniverse:
    """Labels t000..t—zero-padded so lexicographic and numeric order agree."""
    width = len(str(max(n - 1, 1)))
    return LabelUniverse([f"t{i:0{width}d}" for i in range(n)])


def random_tree(universe: LabelUniverse, rng: random.Random,
                contract_prob: float = DEFAULT_CONTRACT_PROB) -> Tree:
    """One random tree spanning the universe."""
    n = len(universe)
    if n < 2:
        raise ValueError("need at least 2 leaves")
    ordinals = list(range(n))
    rng.shuffle(ordinals)
    t = Tree(universe)
    root = t.add_node(-1)
    # Explicit stack of (segment, parent) jobs; a parent of -1 marks the
    # segment whose node is the already-created root.
    stack: list[tuple[int, int, int]] = [(0, n, -1)]
    while stack:
        lo, hi, parent = stack.pop()
        if hi - lo == 1:
            t.add_node(parent if parent >= 0 else root, ordinals[lo])
            continue
        v = root if parent < 0 else t.add_node(parent)
        cut = rng.randint(lo + 1, hi - 1)
        stack.append((cut, hi, v))
        stack.append((lo, cut, v))
    if contract_prob > 0:
        for v in t.preorder():
            if t.leaf[v] < 0 and t.parent[v] >= 0 and rng.random() < contract_prob:
                delete_node(t, v)
    t.validate()
    return t


def random_profile(k: int, n: int, seed: int,
                   contract_prob: float = DEFAULT_CONTRACT_PROB) -> Profile:
    """A profile of ``k`` random trees over ``n`` shared leaf labels."""
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    rng = random.Random(seed)
    universe = make_universe(n)
    return Profile([random_tree(universe, rng, contract_prob) for _ in range(k)])
