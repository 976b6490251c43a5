"""screenlab: numerical experiments for boundary homogenization at desk scale.

Subpackages cover plate capacity (boundary elements), the cell Steklov
eigenvalue on a truncated cylinder, mixed alternating boundary conditions,
perforated-screen transmission problems, and Helmholtz resonance poles, all
on structured finite-difference grids with deterministic iterative kernels.
"""

__version__ = "0.1.0"
