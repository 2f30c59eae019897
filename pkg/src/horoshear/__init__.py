"""Horocycle shearing laboratory on the compact quotient of SL(2, R) by a surface group.

Modules: :mod:`~horoshear.lie` (closed-form sl(2, R) algebra),
:mod:`~horoshear.lattice` (the Bolza group, reduction, Haar sampling),
:mod:`~horoshear.observables` (smooth zero-average test functions),
:mod:`~horoshear.arcs` (sheared arcs, shadow curves, line integrals) and
:mod:`~horoshear.experiments` (decay and mixing measurements).
"""

__version__ = "0.1.0"

from .lie import (U, V, X, AlgebraVector, SpectralProfile, adjoint, basis_matrix,  # noqa: E402
                  exp_algebra, renormalized_tangent, sheared_tangent, spectral_profile)
from .lattice import (FuchsianGroupModel, QuotientPoint, bolza_group, haar_sample,  # noqa: E402
                      hyp_dist, mobius, quotient_flow, reduce)

__all__ = [
    "AlgebraVector", "FuchsianGroupModel", "QuotientPoint", "SpectralProfile", "U", "V", "X",
    "adjoint", "basis_matrix", "bolza_group", "exp_algebra", "haar_sample", "hyp_dist", "mobius",
    "quotient_flow", "reduce", "renormalized_tangent", "sheared_tangent", "spectral_profile",
]
