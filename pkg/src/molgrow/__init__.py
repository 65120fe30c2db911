"""molgrow: fragment-wise molecular elaboration with factorized likelihoods.

A vocabulary of chemical motifs is carved out of a corpus, a frequency prior
ranks them, and two contrastively trained attention models refine that prior:
one from the 2-d bonding topology of the partial molecule, one from the 3-d
geometry of the binding-site environment. The three factors multiply into a
posterior over the next motif at a chosen growth atom.
"""

from ._kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["__version__", "kernel_backend"]
