"""idlalab: lattice aggregation growth models and their diagnostics.

Internal DLA and its flashing-explorer variant on Z^d, with exact
trajectory coupling, harmonic (potential-theoretic) solvers, and
fluctuation statistics.  Hot loops run in a compiled extension with a
pure-python twin kept bit-identical for auditing.
"""

from . import coupling, fluct, growth, io, kernels, lattice, potential, \
    rng, shells, walks

__all__ = [
    "coupling",
    "fluct",
    "growth",
    "io",
    "kernels",
    "lattice",
    "potential",
    "rng",
    "shells",
    "walks",
]

__version__ = "0.1.0"
