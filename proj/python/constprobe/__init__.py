"""Constituency probing over language model activations."""

from ._constprobe import (
    Container,
    DataError,
    Probe,
    Ranking,
    Tree,
    allocate_sample,
    canonicalize,
    check_alignment,
    chunk_dataset,
    chunk_labels,
    combine,
    decode,
    encode,
    fnv1a,
    is_canonical,
    lca_label,
    parse_treebank,
    pearson,
    rank_neurons,
    ranking_overlap,
    read_treebank,
    reconstruction_layers,
    sample_lca,
    score,
    select_subset,
    set_threads,
    smoothed_frequencies,
    synth_container,
    to_bracketed,
    train_matrix,
)

__version__ = "0.1.0"
