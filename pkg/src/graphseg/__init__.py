"""graphseg: trainable Chinese word segmentation over a heterogeneous
sentence graph (characters, candidate words, n-grams, dependency edges)
decoded with a linear-chain CRF."""

__version__ = "0.1.0"
