"""Skew-product decompositions of SO(2)-equivariant diffusions, checked numerically.

Simulates planar Brownian motion, rotated planar Brownian motion and a
2x2 matrix diffusion, splits each into radial and angular parts (polar or QR),
and tests whether the angular part is a Brownian motion run on a clock
adapted to the radial part, and whether that Brownian motion is independent
of the radial part.
"""

__version__ = "0.1.0"
