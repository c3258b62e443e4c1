"""Numerical laboratory for transmission Schrodinger Carleman machinery.

The package builds explicit piecewise weight functions adapted to a
discontinuous principal coefficient, certifies the interface and interior
conditions they must satisfy, solves the transmission Schrodinger equation
on a 2-D grid, measures both sides of the associated observability
inequality, and reproduces Lipschitz stability of the one-measurement
inverse potential problem at desk scale.
"""

__version__ = "0.1.0"
