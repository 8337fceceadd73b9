"""Hopf invariant of unit-vector fields on R^3 as a weighted sum of defect linking numbers.

Modules
-------
fieldlab
    Analytic fields, lattices, normalisation constants.
current
    omega, the topological current, the pulled-back area form, Coulomb-gauge solve.
defects
    Zero-set tracing, winding numbers, flux checks, framing pushoffs.
linking
    Generalised Gauss linking numbers with quadrature, Monte Carlo and exact oracles.
hopf
    Direct Whitehead integral, defect/linking decomposition, reconciliation.
cli
    Command-line front end (``hopflink``), with ``config`` and ``io`` for
    run configurations and file formats, and ``suite`` for the canonical cases.
"""
__version__ = "0.1.0"
