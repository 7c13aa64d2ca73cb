"""Topology of plane sections of triply periodic level sets.

Subpackage map:

- ``fields``: trigonometric-polynomial fields on the torus, model registry
- ``mesh``: periodic isosurface extraction on T^3
- ``homology``: exact integer homology of the extracted surfaces
- ``foliation``: section foliations, open-orbit labels, energy intervals
- ``planar``: direct tracing of level curves in a plane section
- ``scan``: direction-space maps, stability zones, fractal dimension
- ``cli``: command line entry point
"""

__version__ = "0.1.0"
