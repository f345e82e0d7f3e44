"""Numerical checks of differential Harnack inequalities under Ricci flow.

Modules:

``geometry``  flat tori and axisymmetric conformal spheres, stencils, quadrature
``flow``      Ricci flow plus the coupled scalar equations, and the conjugate solve
``harnack``   Harnack quantities, evolution-identity residuals, theorem checks
``pathopt``   space-time action minimisation and the integrated inequality
``cli``       ``harnacklab run | verify | sweep``
"""

__version__ = "0.1.0"
