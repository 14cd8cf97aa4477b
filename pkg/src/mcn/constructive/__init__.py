from .approximants import (
    build_floor,
    build_polynomial,
    build_product,
    build_product2,
    build_sawtooth_square,
    build_trig,
)
from .certificate import CertifiedNet, SupError, Target, phi, phi_1d, sup_error
from .fourier import FourierIndexSet, build_basis, build_fourier_approx, fourier_coeffs, hyperbolic_cross
from .graph import Graph, Lin

__all__ = [
    "CertifiedNet",
    "FourierIndexSet",
    "Graph",
    "Lin",
    "SupError",
    "Target",
    "build_basis",
    "build_floor",
    "build_fourier_approx",
    "build_polynomial",
    "build_product",
    "build_product2",
    "build_sawtooth_square",
    "build_trig",
    "fourier_coeffs",
    "hyperbolic_cross",
    "phi",
    "phi_1d",
    "sup_error",
]
