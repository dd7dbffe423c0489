"""Exact 2x2 linear algebra: matrices, rotations, upper-triangular factors.

The scalar types (:class:`Mat2`, :class:`Rotation`, :class:`UpperTri2`) are
immutable value objects.  The ``*_array`` functions apply the same formulas
to stacks of matrices with shape ``(..., 2, 2)`` and are what the path-level
code uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumn, NonPositiveDeterminant


def _check_finite(**entries):
    for name, value in entries.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Mat2:
    """Row-major 2x2 real matrix ``[[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        _check_finite(a=self.a, b=self.b, c=self.c, d=self.d)

    @classmethod
    def from_array(cls, arr) -> "Mat2":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (2, 2):
            raise ValueError(f"expected shape (2, 2), got {arr.shape}")
        return cls(float(arr[0, 0]), float(arr[0, 1]), float(arr[1, 0]), float(arr[1, 1]))

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    def to_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def gram_trace(self) -> float:
        """tr(A'A), the squared Frobenius norm."""
        return self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )


@dataclass(frozen=True)
class Rotation:
    """Element of SO(2) stored by its angle in radians.

    Keeping the angle (rather than the matrix) lets angular paths be plain
    continuous real paths.
    """

    angle: float

    def __post_init__(self):
        _check_finite(angle=self.angle)

    def matrix(self) -> Mat2:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return Mat2(c, -s, s, c)

    def inverse(self) -> "Rotation":
        return Rotation(-self.angle)

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self.angle + other.angle)
        if isinstance(other, Mat2):
            return self.matrix() @ other
        return NotImplemented


@dataclass(frozen=True)
class UpperTri2:
    """Upper-triangular ``[[t11, t12], [0, t22]]`` with positive diagonal."""

    t11: float
    t12: float
    t22: float

    def __post_init__(self):
        _check_finite(t11=self.t11, t12=self.t12, t22=self.t22)
        if not (self.t11 > 0 and self.t22 > 0):
            raise ValueError(f"diagonal must be strictly positive, got t11={self.t11}, t22={self.t22}")

    def matrix(self) -> Mat2:
        return Mat2(self.t11, self.t12, 0.0, self.t22)


def rotation_matrix(t: float) -> Rotation:
    """Rotation through angle ``t``; ``.matrix()`` gives ``[[cos, -sin], [sin, cos]]``."""
    return Rotation(float(t))


def qr_decompose(A: Mat2) -> tuple[Rotation, UpperTri2]:
    """Closed-form QR factorization ``A = Q T`` with ``Q`` in SO(2).

    With first column norm ``r = sqrt(a^2 + c^2)``::

        Q = (1/r) [[a, -c], [c, a]]
        T = [[r, (ab + cd)/r], [0, det(A)/r]]

    Raises :class:`NonPositiveDeterminant` when ``det(A) <= 0`` (T would not
    have a positive diagonal) and :class:`DegenerateColumn` when ``a = c = 0``.
    """
    det = A.det()
    if not det > 0:
        raise NonPositiveDeterminant(f"det(A) = {det!r} is not positive")
    r = math.hypot(A.a, A.c)
    if r == 0:
        raise DegenerateColumn("first column of A is zero")
    angle = math.atan2(A.c, A.a)
    return Rotation(angle), UpperTri2(r, (A.a * A.b + A.c * A.d) / r, det / r)


def f_coeff(A: Mat2) -> float:
    """Diffusion coefficient ``det(A) / (tr(A'A) + 1)``; always in (-1/2, 1/2)."""
    return A.det() / (A.gram_trace() + 1.0)


# -- stacked versions -------------------------------------------------------

def det_array(x: np.ndarray) -> np.ndarray:
    return x[..., 0, 0] * x[..., 1, 1] - x[..., 0, 1] * x[..., 1, 0]


def gram_trace_array(x: np.ndarray) -> np.ndarray:
    a, b, c, d = x[..., 0, 0], x[..., 0, 1], x[..., 1, 0], x[..., 1, 1]
    return a * a + b * b + c * c + d * d


def f_coeff_array(x: np.ndarray) -> np.ndarray:
    # Only +, *, / here: results must not depend on how paths are batched.
    return det_array(x) / (gram_trace_array(x) + 1.0)


def qr_arrays(x: np.ndarray):
    """Vectorized :func:`qr_decompose` for ``x`` of shape ``(..., 2, 2)``.

    Returns ``(angle, t11, t12, t22)`` with the angle in ``(-pi, pi]``.  No
    validation: callers check ``det > 0`` and ``t11 > 0`` themselves so they
    can report the offending step.
    """
    a, b, c, d = x[..., 0, 0], x[..., 0, 1], x[..., 1, 0], x[..., 1, 1]
    r = np.hypot(a, c)
    with np.errstate(divide="ignore", invalid="ignore"):
        t12 = (a * b + c * d) / r
        t22 = (a * d - b * c) / r
    return np.arctan2(c, a), r, t12, t22


def rotation_arrays(angle) -> np.ndarray:
    """Stack of rotation matrices, shape ``angle.shape + (2, 2)``."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(angle.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out
