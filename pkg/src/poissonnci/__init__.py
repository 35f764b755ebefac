"""Numerical workbench for non-commutative integrable systems on Poisson manifolds.

Coordinate-chart representations of Poisson structures, verification of the
structural axioms of regular NCI systems, flow-based detection of action
lattices on compact fibers, and validation of action-angle data for a catalog
of built-in systems.
"""

__version__ = "0.1.0"
