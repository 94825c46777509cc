"""Lightweight harmonic-field containers shared across modules.

A field maps interior points of a planar domain to complex values.  Concrete
representations (layer potentials, closed forms, pull-backs under an
inversion) implement :meth:`HarmonicField.evaluate` and, when they can,
:meth:`HarmonicField.gradient`.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.shape[-1] != 2:
        raise ValueError(f"expected points with last axis 2, got shape {pts.shape}")
    return pts


class HarmonicField:
    """Base class: complex-valued function on a planar domain."""

    domain = None

    def evaluate(self, points) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, points) -> np.ndarray:
        """Complex gradient, shape ``(N, 2)``."""
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)

    @property
    def trace(self) -> np.ndarray:
        return self.evaluate(self.domain.points)

    def normal_derivative(self) -> np.ndarray:
        grad = self.gradient(self.domain.points)
        return np.einsum("ij,ij->i", grad, self.domain.normal)

    def __mul__(self, alpha):
        if not np.isscalar(alpha):
            return NotImplemented
        return CombinedField([(complex(alpha), self)])

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, HarmonicField):
            return NotImplemented
        return CombinedField([(1.0, self), (1.0, other)])

    def __neg__(self):
        return self * -1.0


class FunctionField(HarmonicField):
    """Field given by closed-form callables on ``(N, 2)`` point arrays."""

    def __init__(self, domain, func: Callable, grad: Optional[Callable] = None):
        self.domain = domain
        self._func = func
        self._grad = grad

    def evaluate(self, points):
        pts = as_points(points)
        return np.asarray(self._func(pts), dtype=complex).reshape(len(pts))

    def gradient(self, points):
        if self._grad is None:
            raise NotImplementedError("no gradient supplied for this field")
        pts = as_points(points)
        return np.asarray(self._grad(pts), dtype=complex).reshape(len(pts), 2)


class CombinedField(HarmonicField):
    """Finite linear combination of fields on a common domain."""

    def __init__(self, terms):
        self.terms = list(terms)
        self.domain = self.terms[0][1].domain

    def evaluate(self, points):
        pts = as_points(points)
        out = np.zeros(len(pts), dtype=complex)
        for coeff, fld in self.terms:
            out += coeff * fld.evaluate(pts)
        return out

    def gradient(self, points):
        pts = as_points(points)
        out = np.zeros((len(pts), 2), dtype=complex)
        for coeff, fld in self.terms:
            out += coeff * fld.gradient(pts)
        return out

    @property
    def trace(self):
        out = np.zeros(self.domain.M, dtype=complex)
        for coeff, fld in self.terms:
            out += coeff * fld.trace
        return out

    def normal_derivative(self):
        out = np.zeros(self.domain.M, dtype=complex)
        for coeff, fld in self.terms:
            out += coeff * fld.normal_derivative()
        return out


class ZeroField(HarmonicField):
    def __init__(self, domain):
        self.domain = domain

    def evaluate(self, points):
        return np.zeros(len(as_points(points)), dtype=complex)

    def gradient(self, points):
        return np.zeros((len(as_points(points)), 2), dtype=complex)
