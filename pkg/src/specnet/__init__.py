"""Spectral networks, scattering diagrams and WKB monodromy computations."""

from .novikov import NovikovSeries, NovikovMatrix, HbarPoly, matrix_deviation
from .algfun import (GaussianRational, Poly, RationalFunction, SpectralData,
                     SheetLabeling, sheets_at, continue_sheets,
                     check_weakly_gmn, check_wkb_regular)

__all__ = [
    "NovikovSeries", "NovikovMatrix", "HbarPoly", "matrix_deviation",
    "GaussianRational", "Poly", "RationalFunction", "SpectralData",
    "SheetLabeling", "sheets_at", "continue_sheets",
    "check_weakly_gmn", "check_wkb_regular",
]
