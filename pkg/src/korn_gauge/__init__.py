"""Finite-element computation of Korn and Gaffney constants.

Submodules, bottom up: :mod:`tensorcalc` (pointwise matrix identities),
:mod:`meshkit` (simplicial meshes and boundary labels), :mod:`polyfield`
(exact polynomial integration and identity verifiers), :mod:`fem` (Lagrange
spaces, forms, constraints), :mod:`spectra` (extremal quotients),
:mod:`constants` (named constants and reports) and :mod:`cli`.
"""
from . import constants, fem, meshkit, polyfield, spectra, tensorcalc
from .errors import (
    GeometryMismatchError,
    InvalidDimension,
    InvalidInput,
    KornGaugeError,
    MeshError,
    MeshFormatError,
    NumericalFailure,
    PreconditionError,
    UnsupportedElementError,
)

__version__ = "0.1.0"

__all__ = [
    "GeometryMismatchError",
    "InvalidDimension",
    "InvalidInput",
    "KornGaugeError",
    "MeshError",
    "MeshFormatError",
    "NumericalFailure",
    "PreconditionError",
    "UnsupportedElementError",
    "constants",
    "fem",
    "meshkit",
    "polyfield",
    "spectra",
    "tensorcalc",
]
