"""Finite element study of eigenfunction decay along branches of planar domains.

Submodules: ``geometry`` (domains and cross-sections), ``meshing``,
``assembly``, ``eigensolver``, ``thresholds`` (cross-section eigenvalues),
``decay`` (certification of decay bounds), ``triangle_localization``
(analytic criterion for right triangles), ``pipeline`` and ``cli``.
"""

__version__ = "0.1.0"
