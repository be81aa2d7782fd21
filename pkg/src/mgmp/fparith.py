"""Simulated finite-precision arithmetic under the standard rounding model.

A :class:`PrecisionSpec` describes a binary floating-point format by its
significand length ``t`` and an optional exponent range.  Values are stored in
float64 arrays; every operation here rounds exactly once per scalar operation,
to nearest with ties to even.

>>> h = PrecisionSpec.from_label("h")
>>> round_scalar(3.141592653589793, h)
3.140625
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import _kernels as K


class PrecisionOverflow(OverflowError):
    """A rounded value exceeded the largest finite number of a clamped format."""


class Rounding(Enum):
    NEAREST_EVEN = "nearest-even"


_LOG2_10 = math.log2(10.0)


@dataclass(frozen=True)
class PrecisionSpec:
    """Binary floating-point format with ``significand_bits`` = t (implicit bit included).

    ``max_exponent``/``min_exponent`` follow IEEE conventions (binary16: 15 / -14).
    Leaving ``max_exponent`` unset gives an unbounded exponent range.
    """

    significand_bits: int
    max_exponent: int | None = None
    min_exponent: int | None = None
    rounding: Rounding = Rounding.NEAREST_EVEN
    label: str = ""

    def __post_init__(self):
        t = self.significand_bits
        if not isinstance(t, (int, np.integer)) or not 1 <= t <= 53:
            raise ValueError(f"significand_bits must be in 1..53, got {t!r}")
        if self.max_exponent is None and self.min_exponent is not None:
            raise ValueError("min_exponent given without max_exponent")
        if self.max_exponent is not None and self.min_exponent is None:
            object.__setattr__(self, "min_exponent", 1 - self.max_exponent)
        if not self.label:
            object.__setattr__(self, "label", f"t{t}")

    @property
    def t(self) -> int:
        return int(self.significand_bits)

    @property
    def clamped(self) -> bool:
        return self.max_exponent is not None

    def unit_roundoff(self) -> float:
        return math.ldexp(1.0, -self.t)

    @property
    def u(self) -> float:
        return self.unit_roundoff()

    def max_finite(self) -> float:
        if not self.clamped:
            return math.inf
        return (2.0 - math.ldexp(1.0, 1 - self.t)) * math.ldexp(1.0, self.max_exponent)

    def min_subnormal(self) -> float:
        if not self.clamped:
            return 0.0
        return math.ldexp(1.0, self.min_exponent - self.t + 1)

    def kernel_args(self) -> tuple[int, int, int, bool]:
        if self.clamped:
            return self.t, int(self.min_exponent), int(self.max_exponent), True
        return self.t, 0, 0, False

    def is_native_double(self) -> bool:
        return self.t == 53 and not self.clamped

    def refines(self, other: PrecisionSpec) -> bool:
        """True when every value representable in ``other`` is representable here."""
        if self.t < other.t:
            return False
        if not self.clamped:
            return True
        if not other.clamped:
            return False
        # subnormal quantum must be at least as fine, and the range at least as wide
        return (
            self.max_exponent >= other.max_exponent
            and self.min_exponent - self.t <= other.min_exponent - other.t
        )

    @classmethod
    def from_decimal_digits(cls, d: int) -> PrecisionSpec:
        """Binary format with unit roundoff of order 10**-d: t = ceil(d log2 10), capped at 53."""
        if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or not 1 <= d <= 16:
            raise ValueError(f"decimal digits must be an integer in 1..16, got {d!r}")
        t = min(53, math.ceil(d * _LOG2_10))
        return cls(t, label=f"digits-{int(d)}")

    @classmethod
    def from_label(cls, label: str) -> PrecisionSpec:
        """Parse ``d``, ``s``, ``h``, ``sh``, ``digits-N`` or ``tN``."""
        key = label.strip().lower()
        if key in _NAMED:
            return _NAMED[key]
        if key.startswith("digits-"):
            return cls.from_decimal_digits(_parse_int(key[7:], label))
        if key.startswith("t") and key[1:].isdigit():
            return cls(int(key[1:]), label=key)
        raise ValueError(f"unknown precision label {label!r}")

    def __str__(self) -> str:
        return self.label


def _parse_int(text: str, label: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"unknown precision label {label!r}") from None


DOUBLE = PrecisionSpec(53, label="d")
SINGLE = PrecisionSpec(24, max_exponent=127, min_exponent=-126, label="s")
HALF = PrecisionSpec(11, max_exponent=15, min_exponent=-14, label="h")

# "sh" is the GPU single-half mix; simulated as single-precision arithmetic
_NAMED = {"d": DOUBLE, "s": SINGLE, "h": HALF, "sh": PrecisionSpec(24, 127, -126, label="sh")}

from_decimal_digits = PrecisionSpec.from_decimal_digits


def _check(ovf: bool, spec: PrecisionSpec, what: str):
    if ovf:
        raise PrecisionOverflow(f"{what}: value exceeds {spec.max_finite():g} in format {spec.label}")


def _as_vec(v) -> np.ndarray:
    return np.ascontiguousarray(v, dtype=np.float64).reshape(-1)


def round_scalar(x: float, spec: PrecisionSpec) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot round non-finite value {x}")
    y, ovf = K.round_scalar(x, *spec.kernel_args())
    _check(ovf, spec, "round_scalar")
    return float(y)


def round_vector(v, spec: PrecisionSpec) -> np.ndarray:
    v = _as_vec(v)
    if spec.is_native_double():
        return v.copy()
    out, ovf = K.round_array(v, *spec.kernel_args())
    _check(ovf, spec, "round_vector")
    return out


def round_matrix(K_: sp.csr_matrix, spec: PrecisionSpec) -> sp.csr_matrix:
    """Entrywise rounding; the stored pattern is kept even where entries flush to zero."""
    out = K_.copy()
    out.data = round_vector(out.data, spec) if out.nnz else out.data
    return out


def rounded_add(v, w, spec: PrecisionSpec) -> np.ndarray:
    v, w = _as_vec(v), _as_vec(w)
    if v.shape != w.shape:
        raise ValueError(f"length mismatch: {v.size} vs {w.size}")
    out, ovf = K.add_arrays(v, w, *spec.kernel_args())
    _check(ovf, spec, "rounded_add")
    return out


def _csr_parts(Km: sp.csr_matrix):
    return (
        np.ascontiguousarray(Km.indptr, dtype=np.int64),
        np.ascontiguousarray(Km.indices, dtype=np.int64),
        np.ascontiguousarray(Km.data, dtype=np.float64),
    )


def _max_row(Km: sp.csr_matrix) -> int:
    return int(np.diff(Km.indptr).max()) if Km.shape[0] else 0


def rounded_spmv(Km: sp.csr_matrix, w, spec: PrecisionSpec, *, parts=None, m=None) -> np.ndarray:
    """``K w`` with per-operation rounding; ``K`` must already be rounded to ``spec``.

    ``parts``/``m`` let callers pass cached CSR arrays and the row count ``m_K``.
    """
    w = _as_vec(w)
    if Km.shape[1] != w.size:
        raise ValueError(f"dimension mismatch: matrix has {Km.shape[1]} columns, vector {w.size}")
    m = _max_row(Km) if m is None else m
    if (m + 1) * spec.u >= 1.0:
        raise ValueError(f"(m_K+1)*u = {(m + 1) * spec.u:g} >= 1 for format {spec.label}")
    out, ovf = K.spmv(*(parts or _csr_parts(Km)), w, *spec.kernel_args())
    _check(ovf, spec, "rounded_spmv")
    return out


def rounded_residual(v, Km: sp.csr_matrix, w, spec: PrecisionSpec, *, parts=None, m=None) -> np.ndarray:
    """``v - K w`` with per-operation rounding."""
    v, w = _as_vec(v), _as_vec(w)
    if Km.shape[1] != w.size or Km.shape[0] != v.size:
        raise ValueError(f"dimension mismatch: K is {Km.shape}, v {v.size}, w {w.size}")
    m = _max_row(Km) if m is None else m
    if (m + 2) * spec.u >= 1.0:
        raise ValueError(f"(m_K+2)*u = {(m + 2) * spec.u:g} >= 1 for format {spec.label}")
    out, ovf = K.residual(v, *(parts or _csr_parts(Km)), w, *spec.kernel_args())
    _check(ovf, spec, "rounded_residual")
    return out


def gamma(m: int, u: float) -> float:
    """``m u / (1 - m u)``, the accumulated relative error factor."""
    if m * u >= 1.0:
        raise ValueError(f"m*u = {m * u:g} >= 1")
    return m * u / (1.0 - m * u)


def nearest_power_of_two(x: float) -> float:
    """Nearest power of two to ``x > 0`` on a log scale (ties go up)."""
    if not x > 0.0:
        raise ValueError("expected a positive value")
    m, e = math.frexp(x)  # x = m 2^e, m in [0.5, 1)
    return math.ldexp(1.0, e if m >= math.sqrt(0.5) else e - 1)
