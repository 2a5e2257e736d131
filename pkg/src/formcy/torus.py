"""Periodic grids on the flat complex torus and FFT-based Wirtinger calculus.

The torus ``T^n = C^n / (2 pi Z)^{2n}`` carries real coordinates
``x_1, ..., x_{2n}`` with ``z_i = x_{2i-1} + sqrt(-1) x_{2i}``.  A field is
sampled only along a subset of *active* real axes and is constant along
the others, so a construction that depends on ``x_1`` alone needs a
one-dimensional grid even when ``n = 4``.

Axis and direction indices are 1-based throughout, matching the usual
mathematical labelling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

PERIOD = 2.0 * np.pi
VANISH_RTOL = 1e-10


class FieldError(ValueError):
    """Raised for malformed grids, fields, or incompatible data."""


class CompatibilityError(FieldError):
    """A right-hand side violates the solvability condition of an inverse."""


@dataclass(frozen=True)
class TorusGeometry:
    """Uniform periodic grid on ``T^n`` restricted to some active real axes.

    Parameters
    ----------
    n : int
        Complex dimension, at least 3.
    active_axes : sequence of int
        Strictly increasing real-axis labels in ``[1, 2n]``.
    grid_shape : sequence of int
        One even size ``>= 8`` per active axis.
    """

    n: int
    active_axes: tuple[int, ...]
    grid_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "active_axes", tuple(int(a) for a in self.active_axes))
        object.__setattr__(self, "grid_shape", tuple(int(s) for s in self.grid_shape))
        if int(self.n) != self.n or self.n < 3:
            raise FieldError(f"complex dimension must be an integer >= 3, got {self.n}")
        axes = self.active_axes
        if not axes:
            raise FieldError("active_axes must be non-empty")
        if any(b <= a for a, b in zip(axes, axes[1:])):
            raise FieldError(f"active_axes must be strictly increasing, got {axes}")
        if axes[0] < 1 or axes[-1] > 2 * self.n:
            raise FieldError(f"active_axes must lie in [1, {2 * self.n}], got {axes}")
        if len(self.grid_shape) != len(axes):
            raise FieldError("grid_shape needs one entry per active axis")
        for size in self.grid_shape:
            if size < 8 or size % 2:
                raise FieldError(f"grid sizes must be even and >= 8, got {self.grid_shape}")

    @classmethod
    def line(cls, n: int, size: int = 256, axis: int = 1) -> "TorusGeometry":
        """Geometry with a single active axis."""
        return cls(n, (axis,), (size,))

    @property
    def ndim(self) -> int:
        return len(self.active_axes)

    @property
    def npoints(self) -> int:
        return math.prod(self.grid_shape)

    @property
    def volume(self) -> float:
        """Euclidean volume ``(2 pi)^{2n}`` of the torus."""
        return PERIOD ** (2 * self.n)

    def position(self, axis: int) -> int | None:
        """Index of real axis ``axis`` in the grid, or None when inactive."""
        try:
            return self.active_axes.index(axis)
        except ValueError:
            return None

    def active_directions(self) -> tuple[int, ...]:
        """Complex directions with at least one active real axis."""
        return tuple(sorted({(a + 1) // 2 for a in self.active_axes}))

    def coordinate(self, axis: int) -> np.ndarray:
        """Sample positions of real axis ``axis``, broadcast to the grid."""
        pos = self.position(axis)
        if pos is None:
            raise FieldError(f"axis {axis} is not active")
        size = self.grid_shape[pos]
        shape = [1] * self.ndim
        shape[pos] = size
        return (PERIOD * np.arange(size) / size).reshape(shape)

    def coordinates(self) -> dict[int, np.ndarray]:
        return {a: self.coordinate(a) for a in self.active_axes}

    def _wavenumbers(self, pos: int, zero_nyquist: bool) -> np.ndarray:
        size = self.grid_shape[pos]
        k = np.fft.fftfreq(size, d=1.0 / size)
        if zero_nyquist:
            k[size // 2] = 0.0
        shape = [1] * self.ndim
        shape[pos] = size
        return k.reshape(shape)

    @cached_property
    def _kcache(self) -> dict:
        return {}

    def wavenumber(self, axis: int, zero_nyquist: bool = True) -> np.ndarray | None:
        pos = self.position(axis)
        if pos is None:
            return None
        key = (axis, zero_nyquist)
        if key not in self._kcache:
            self._kcache[key] = self._wavenumbers(pos, zero_nyquist)
        return self._kcache[key]

    def sample(self, func: Callable[..., np.ndarray]) -> "ScalarField":
        """Evaluate ``func(x)`` where ``x`` maps active axis labels to coordinates."""
        values = np.broadcast_to(np.asarray(func(self.coordinates()), dtype=complex), self.grid_shape)
        return ScalarField(self, values)

    def constant(self, value: complex) -> "ScalarField":
        return ScalarField(self, np.full(self.grid_shape, value, dtype=complex))

    def zeros(self) -> "ScalarField":
        return self.constant(0.0)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Complex samples of a periodic function on a :class:`TorusGeometry`."""

    geometry: TorusGeometry
    samples: np.ndarray
    real: bool = field(default=False)

    def __post_init__(self) -> None:
        data = np.array(self.samples, dtype=complex)
        if data.shape != self.geometry.grid_shape:
            if data.size != self.geometry.npoints:
                raise FieldError(
                    f"expected {self.geometry.npoints} samples, got {data.size}"
                )
            data = data.reshape(self.geometry.grid_shape)
        if self.real:
            check_real(data)
            data = data.real.astype(complex)
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    @property
    def values(self) -> np.ndarray:
        return self.samples

    def realpart(self) -> np.ndarray:
        return self.samples.real

    def as_real(self, rtol: float = 1e-12) -> "ScalarField":
        """Tag as real after checking the imaginary parts are negligible."""
        check_real(self.samples, rtol)
        return ScalarField(self.geometry, self.samples.real, real=True)

    def with_values(self, values: np.ndarray, real: bool = False) -> "ScalarField":
        return ScalarField(self.geometry, values, real=real)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def __add__(self, other):
        return self.with_values(self.samples + _values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.samples - _values(other))

    def __rsub__(self, other):
        return self.with_values(_values(other) - self.samples)

    def __mul__(self, other):
        return self.with_values(self.samples * _values(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.samples)

    def conj(self) -> "ScalarField":
        return self.with_values(np.conj(self.samples))


def _values(obj) -> np.ndarray | complex:
    if isinstance(obj, ScalarField):
        return obj.samples
    return obj


def check_real(values: np.ndarray, rtol: float = 1e-12) -> None:
    scale = max(float(np.max(np.abs(values))), 1.0) if np.size(values) else 1.0
    imag = float(np.max(np.abs(np.imag(values)))) if np.size(values) else 0.0
    if imag > rtol * scale:
        raise FieldError(f"field is not real: max |Im| = {imag:.3e}")


# -- spectral calculus -------------------------------------------------------

# Real fields hit by real even symbols (d^2/dz_i dzbar_i, the flat Laplacian)
# are transformed in extended precision where the platform has it (80-bit on
# x86-64).  Second derivatives amplify input rounding by ~N^2, and at N = 256
# the float64 FFT roundoff alone was several times the unavoidable floor set
# by float64 samples.  The general complex path stays float64: extended
# complex transforms cost ~8x more and the solver calls them in inner loops.
WORK_REAL = np.longdouble

def _direction_axes(geometry: TorusGeometry, i: int, bar: bool) -> dict[int, complex]:
    """Real-axis expansion of d/dz_i (or d/dzbar_i) as {axis: coefficient}."""
    if not 1 <= i <= geometry.n:
        raise FieldError(f"direction index {i} outside [1, {geometry.n}]")
    sign = 1.0 if bar else -1.0
    return {2 * i - 1: 0.5, 2 * i: 0.5j * sign}


def _first_multiplier(geometry: TorusGeometry, i: int, bar: bool) -> np.ndarray | float:
    total: np.ndarray | float = 0.0
    for axis, coeff in _direction_axes(geometry, i, bar).items():
        k = geometry.wavenumber(axis)
        if k is not None:
            total = total + coeff * 1j * k
    return total


def _second_multiplier(geometry: TorusGeometry, first: tuple[int, bool],
                       second: tuple[int, bool]) -> np.ndarray | float:
    # Same-axis pairs use -k^2 with the Nyquist mode kept; products across
    # different axes use Nyquist-zeroed factors so the operator stays symmetric.
    total: np.ndarray | float = 0.0
    for ax1, c1 in _direction_axes(geometry, *first).items():
        for ax2, c2 in _direction_axes(geometry, *second).items():
            if ax1 == ax2:
                k = geometry.wavenumber(ax1, zero_nyquist=False)
                if k is not None:
                    total = total - c1 * c2 * k**2
            else:
                k1, k2 = geometry.wavenumber(ax1), geometry.wavenumber(ax2)
                if k1 is not None and k2 is not None:
                    total = total - c1 * c2 * k1 * k2
    return total


def _real_even(mult) -> bool:
    """True when ``mult`` is a real symbol with ``mult(-k) = mult(k)``."""
    mult = np.asarray(mult)
    if np.any(np.imag(mult) != 0):
        return False
    flipped = mult
    for ax, size in enumerate(mult.shape):
        if size > 1:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return bool(np.array_equal(flipped, mult))


def _half(mult: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    mult = np.broadcast_to(np.real(mult), shape)
    return mult[..., : shape[-1] // 2 + 1]


def _apply_multiplier(values: np.ndarray, mult) -> np.ndarray:
    if np.isscalar(mult) and mult == 0:
        return np.zeros_like(values, dtype=complex)
    if not np.any(values.imag) and _real_even(mult):
        # Real input and a real even symbol keep the output real, so the
        # half-spectrum transform suffices.
        shape = values.shape
        coeffs = np.fft.rfftn(values.real.astype(WORK_REAL))
        out = np.fft.irfftn(coeffs * _half(mult, shape).astype(WORK_REAL), s=shape, axes=range(len(shape)))
        return out.astype(complex)
    return np.fft.ifftn(np.fft.fftn(values) * mult)


def hessian(f: ScalarField, directions: Sequence[int] | None = None) -> np.ndarray:
    """All ``d^2 f / dz_a dzbar_b`` for ``a, b`` in ``directions``, from one forward transform.

    Returns an array of shape ``grid_shape + (n, n)``; rows and columns for
    directions not listed (by default the inactive ones) are zero.
    """
    g = f.geometry
    n = g.n
    if directions is None:
        directions = g.active_directions()
    out = np.zeros(g.grid_shape + (n, n), dtype=complex)
    coeffs = np.fft.fftn(f.samples)
    for a in directions:
        for b in directions:
            mult = _second_multiplier(g, (a, False), (b, True))
            if not (np.isscalar(mult) and mult == 0):
                out[..., a - 1, b - 1] = np.fft.ifftn(coeffs * mult)
    return out


def wirtinger_d(f: ScalarField, i: int) -> ScalarField:
    """Spectral ``d f / d z_i``; zero along inactive axes."""
    mult = _first_multiplier(f.geometry, i, bar=False)
    return f.with_values(_apply_multiplier(f.samples, mult))


def wirtinger_dbar(f: ScalarField, i: int) -> ScalarField:
    """Spectral ``d f / d zbar_i``."""
    mult = _first_multiplier(f.geometry, i, bar=True)
    return f.with_values(_apply_multiplier(f.samples, mult))


def second_derivative(f: ScalarField, i: int, j: int,
                      bar_i: bool = False, bar_j: bool = True) -> ScalarField:
    """Mixed second Wirtinger derivative, by default ``d^2 f / dz_i dzbar_j``."""
    mult = _second_multiplier(f.geometry, (i, bar_i), (j, bar_j))
    return f.with_values(_apply_multiplier(f.samples, mult))


def ddbar(f: ScalarField, i: int, j: int) -> ScalarField:
    return second_derivative(f, i, j, False, True)


def ddbar_multiplier(geometry: TorusGeometry, i: int, j: int):
    return _second_multiplier(geometry, (i, False), (j, True))


def flat_laplacian_multiplier(geometry: TorusGeometry, directions: Sequence[int] | None = None):
    """Fourier symbol of ``sum_i d^2/dz_i dzbar_i`` over ``directions``."""
    if directions is None:
        directions = range(1, geometry.n + 1)
    total = np.zeros(geometry.grid_shape)
    for i in directions:
        total = total + np.real(_second_multiplier(geometry, (i, False), (i, True)))
    return total


def integrate(f: ScalarField) -> complex:
    """Integral over ``T^n`` against ``dx_1 ... dx_{2n}`` (periodic trapezoid)."""
    return complex(np.mean(f.samples)) * f.geometry.volume


def mean(f: ScalarField) -> complex:
    return complex(np.mean(f.samples))


def mean_zero_project(f: ScalarField) -> ScalarField:
    return f.with_values(f.samples - np.mean(f.samples), real=f.real)


def _check_mean_zero(rhs: ScalarField, rtol: float) -> None:
    avg = abs(np.mean(rhs.samples))
    scale = max(rhs.max_abs(), 1e-300)
    if avg > rtol * scale and avg > 1e-300:
        raise CompatibilityError(
            f"right-hand side has nonzero mean {avg:.3e} (relative {avg / scale:.3e})"
        )


def _invert_symbol(rhs: ScalarField, mult: np.ndarray, rtol: float) -> np.ndarray:
    shape = rhs.geometry.grid_shape
    if not np.any(rhs.samples.imag) and _real_even(mult):
        coeffs = np.fft.rfftn(rhs.samples.real.astype(WORK_REAL))
        mult = _half(mult, shape).astype(WORK_REAL)
        back = lambda c: np.fft.irfftn(c, s=shape, axes=range(len(shape))).astype(complex)  # noqa: E731
    else:
        coeffs = np.fft.fftn(rhs.samples)
        back = np.fft.ifftn
    singular = np.abs(mult) < 1e-14
    zero_mode = np.zeros(mult.shape, dtype=bool)
    zero_mode[(0,) * mult.ndim] = True
    stray = np.abs(coeffs[singular & ~zero_mode])
    if stray.size and stray.max() > rtol * max(np.abs(coeffs).max(), 1e-300):
        raise CompatibilityError(
            "right-hand side varies along axes the operator does not differentiate"
        )
    out = np.zeros_like(coeffs)
    out[~singular] = coeffs[~singular] / mult[~singular]
    return back(out)


def solve_dzdzbar(rhs: ScalarField, i: int, rtol: float = VANISH_RTOL) -> ScalarField:
    """Mean-zero solution ``u`` of ``d^2 u / dz_i dzbar_i = rhs``.

    Raises
    ------
    CompatibilityError
        If ``rhs`` has nonzero mean or varies along axes outside direction ``i``.
    """
    _check_mean_zero(rhs, rtol)
    mult = np.broadcast_to(np.real(ddbar_multiplier(rhs.geometry, i, i)), rhs.geometry.grid_shape)
    return rhs.with_values(_invert_symbol(rhs, mult, rtol), real=False)


def solve_flat_laplacian(rhs: ScalarField, rtol: float = VANISH_RTOL) -> ScalarField:
    """Mean-zero solution of ``sum_i d^2 u / dz_i dzbar_i = rhs``."""
    _check_mean_zero(rhs, rtol)
    mult = flat_laplacian_multiplier(rhs.geometry)
    return rhs.with_values(_invert_symbol(rhs, mult, rtol))


def random_trig_field(geometry: TorusGeometry, rng: np.random.Generator,
                      max_mode: int = 3, amplitude: float = 1.0,
                      real: bool = True) -> ScalarField:
    """Random band-limited field with wavenumbers ``|k| <= max_mode`` per axis."""
    coeffs = np.zeros(geometry.grid_shape, dtype=complex)
    index = tuple(
        np.r_[0:max_mode + 1, size - max_mode:size] for size in geometry.grid_shape
    )
    block = rng.standard_normal([len(ix) for ix in index]) + 1j * rng.standard_normal(
        [len(ix) for ix in index]
    )
    coeffs[np.ix_(*index)] = block
    values = np.fft.ifftn(coeffs) * geometry.npoints
    if real:
        values = values.real
    values = values * (amplitude / max(np.max(np.abs(values)), 1e-300))
    return ScalarField(geometry, values, real=real)
