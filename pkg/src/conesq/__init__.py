"""conesq: conical square functions on general closed sets, with receipts.

Constructions from a non-homogeneous Tb theory, desk scale: distance cones
over a closed set E, power-bounded measures, randomized David-Mattila style
lattices, Whitney ball covers, Calderon-Zygmund decompositions for atomic
complex measures, b-adapted martingale differences, and the suppressed
square function, together with the experiment harness that verifies each
one's contract numerically.
"""

from ._core import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
