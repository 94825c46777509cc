"""Complex numbers stored as ``(log|z|, arg z)`` so that quantities like
``exp(+-1/h)`` keep their relative precision far outside double range."""

from __future__ import annotations

import numpy as np


def wrap_phase(phase):
    """Map angles into ``(-pi, pi]``."""
    phase = np.asarray(phase, dtype=float)
    return np.pi - np.mod(np.pi - phase, 2.0 * np.pi)


class LogComplex:
    """Array of complex numbers ``exp(log_mod + i phase)``.

    ``log_mod = -inf`` encodes an exact zero (phase is then 0).  Addition uses
    log-sum-exp with the largest modulus factored out.
    """

    __slots__ = ("log_mod", "phase")

    def __init__(self, log_mod, phase=0.0):
        lm = np.asarray(log_mod, dtype=float)
        ph = np.broadcast_to(np.asarray(phase, dtype=float), lm.shape)
        if np.any(np.isnan(lm)) or np.any(lm == np.inf):
            raise ValueError("log-modulus must be finite or -inf")
        ph = np.where(np.isneginf(lm), 0.0, wrap_phase(ph))
        self.log_mod = lm
        self.phase = ph

    # construction ---------------------------------------------------------
    @classmethod
    def from_complex(cls, values) -> "LogComplex":
        v = np.asarray(values, dtype=complex)
        mag = np.abs(v)
        with np.errstate(divide="ignore"):
            lm = np.log(mag)
        return cls(lm, np.angle(v))

    @classmethod
    def zeros(cls, shape=()) -> "LogComplex":
        return cls(np.full(shape, -np.inf), np.zeros(shape))

    @classmethod
    def from_exponent(cls, exponent, coeff=1.0) -> "LogComplex":
        """``coeff * exp(exponent)`` for complex ``exponent``."""
        e = np.asarray(exponent, dtype=complex)
        c = cls.from_complex(coeff)
        return cls(e.real + c.log_mod, e.imag + c.phase)

    # conversion -----------------------------------------------------------
    def to_complex(self) -> np.ndarray:
        """Plain complex values; raises instead of returning infinities."""
        if np.any(self.log_mod > 709.0):
            raise OverflowError(
                f"value e^{float(np.max(self.log_mod)):.1f} is not representable in double precision"
            )
        with np.errstate(under="ignore"):
            out = np.exp(self.log_mod) * np.exp(1j * self.phase)
        return out if out.ndim else complex(out)

    def __complex__(self):
        return complex(self.to_complex())

    @property
    def shape(self):
        return self.log_mod.shape

    @property
    def is_zero(self):
        return np.isneginf(self.log_mod)

    def __len__(self):
        return len(self.log_mod)

    def __getitem__(self, idx) -> "LogComplex":
        return LogComplex(self.log_mod[idx], self.phase[idx])

    def __repr__(self):
        return f"LogComplex(log_mod={self.log_mod!r}, phase={self.phase!r})"

    # arithmetic -----------------------------------------------------------
    def __mul__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        return LogComplex(self.log_mod + other.log_mod, self.phase + other.phase)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if np.any(other.is_zero):
            raise ZeroDivisionError("division by an exact zero")
        return LogComplex(self.log_mod - other.log_mod, self.phase - other.phase)

    def __neg__(self) -> "LogComplex":
        return LogComplex(self.log_mod, self.phase + np.pi)

    def conj(self) -> "LogComplex":
        return LogComplex(self.log_mod, -self.phase)

    def __add__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        a, b = np.broadcast_arrays(self.log_mod, other.log_mod)
        pa, pb = np.broadcast_arrays(self.phase, other.phase)
        stack = LogComplex(np.stack([a, b]), np.stack([pa, pb]))
        return stack.sum(axis=0)

    __radd__ = __add__

    def __sub__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        return self + (-other)

    def sum(self, axis=None) -> "LogComplex":
        """Log-sum-exp reduction with max extraction."""
        lm, ph = self.log_mod, self.phase
        if axis is None:
            lm, ph, axis = lm.reshape(-1), ph.reshape(-1), 0
        top = np.max(lm, axis=axis, keepdims=True)
        safe_top = np.where(np.isneginf(top), 0.0, top)
        with np.errstate(under="ignore"):
            terms = np.exp(lm - safe_top) * np.exp(1j * ph)
        s = np.sum(terms, axis=axis)
        top = np.squeeze(safe_top, axis=axis)
        mag = np.abs(s)
        with np.errstate(divide="ignore"):
            out_lm = np.where(mag > 0, top + np.log(np.where(mag > 0, mag, 1.0)), -np.inf)
        return LogComplex(out_lm, np.angle(s))

    def abs_log(self) -> np.ndarray:
        return self.log_mod


def logsum_weighted(log_terms, phase_terms, axis=-1) -> LogComplex:
    """``sum exp(log_terms + i phase_terms)`` along ``axis`` in log form."""
    return LogComplex(log_terms, phase_terms).sum(axis=axis)
