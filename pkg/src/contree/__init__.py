"""Consensus trees for collections of identically leaf-labeled trees:
majority rule (+) and frequency difference consensus, with brute-force
oracles for verification."""

from .phylo_core import (
    Cluster,
    ConsensusError,
    IncompatiblePairError,
    IncompatibleTreesError,
    LabelUniverse,
    LeafSetMismatchError,
    MissingWeightError,
    NewickError,
    Profile,
    Tree,
    cluster_collection,
    cluster_compatible_with_tree,
    clusters_compatible,
    delete_node,
    insert_node,
    load_profile,
    parse_newick,
    parse_profile,
    tree_from_clusters,
    trees_isomorphic,
    write_newick,
)
from .tree_primitives import (
    CentroidDecomposition,
    ClusterTable,
    LcaIndex,
    MaxMultiset,
    PathMaxIndex,
    RestrictedTree,
    build_cluster_table,
    centroid_decompose,
    induced_subtree,
    lca_query,
    mark_common_clusters,
    merge_trees,
    one_way_compatible,
    path_max,
    weighted_restriction,
)
from .majority_plus import majority_plus_consensus, majority_plus_with_candidates
from .freq_diff import (
    WeightMap,
    compute_weights,
    compute_weights_bitvec,
    compute_weights_day,
    filter_clusters_fast,
    filter_clusters_naive,
    frequency_difference_consensus,
)
from .oracle import (
    ClusterCensus,
    census,
    oracle_freq_diff,
    oracle_majority,
    oracle_majority_plus,
    oracle_strict,
    oracle_tree,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
