"""
Numerical kernels shared by the estimators.

Adaptive quadrature wraps QUADPACK (``scipy.integrate.quad``): its 21-point
Gauss-Kronrod pair never samples the interval endpoints, so integrands with
removable or integrable endpoint singularities need no special casing, and
the bisection schedule is a pure function of the integrand.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import integrate, special

from .errors import ModelError, QuadratureError

FloatArray = npt.NDArray[np.float64]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ============================================================================
# Quadrature
# ============================================================================


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for every adaptive integral.

    Attributes:
        rel_tol: Relative tolerance.
        abs_tol: Absolute tolerance.
        max_subdivisions: Bisection budget per integral.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ModelError(f"quadrature tolerances must be positive, got {self.rel_tol}, {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise ModelError(f"max_subdivisions must be >= 1, got {self.max_subdivisions}")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    subdivisions: int
    converged: bool

    def require(self, context: str) -> float:
        """Return the value, raising if the integral did not converge."""
        if not self.converged or not math.isfinite(self.value):
            raise QuadratureError(
                f"{context}: no convergence (value={self.value:.6g}, error={self.error:.3g}, "
                f"subdivisions={self.subdivisions})"
            )
        return self.value


def adaptive_quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    config: QuadratureConfig | None = None,
) -> QuadratureResult:
    """Integrate ``f`` over ``(a, b)`` by adaptive Gauss-Kronrod bisection.

    ``b`` may be ``math.inf``. An unconverged integral is returned with
    ``converged=False``; the caller decides whether that is fatal.
    """
    cfg = config or QuadratureConfig()
    if not a < b:
        raise ModelError(f"adaptive_quadrature needs a < b, got a={a}, b={b}")

    out = integrate.quad(
        f,
        a,
        b,
        epsabs=cfg.abs_tol,
        epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions,
        full_output=1,
    )
    value, error, info = float(out[0]), float(out[1]), out[2]
    tolerance = max(cfg.rel_tol * abs(value), cfg.abs_tol)
    return QuadratureResult(
        value=value,
        error=error,
        subdivisions=int(info.get("last", 0)),
        converged=math.isfinite(value) and error <= tolerance,
    )


# ============================================================================
# Special functions
# ============================================================================


def bessel_i(nu: float, x: float) -> float:
    """Modified Bessel function of the first kind, real order ``nu >= 0``."""
    if nu < 0 or x < 0:
        raise ModelError(f"bessel_i needs nu >= 0 and x >= 0, got nu={nu}, x={x}")
    return float(special.iv(nu, x))


def bessel_ie(nu: float | FloatArray, x: float | FloatArray) -> FloatArray:
    """Exponentially scaled ``exp(-x) * I_nu(x)``; finite for any ``x >= 0``."""
    return np.asarray(special.ive(nu, x), dtype=np.float64)


def normal_cdf(x: float) -> float:
    return float(special.ndtr(x))


def log_normal_cdf(x: float) -> float:
    return float(special.log_ndtr(x))


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def normal_quantile(p: float) -> float:
    return float(special.ndtri(p))


# ============================================================================
# Random streams
# ============================================================================


def rng_stream(seed: int, stream_index: int) -> np.random.Generator:
    """Independent, reproducible generator keyed by ``(seed, stream_index)``.

    Philox is counter based, so the stream depends only on the key and is
    identical on every platform.
    """
    if seed < 0 or stream_index < 0:
        raise ModelError(f"seed and stream index must be non-negative, got {seed}, {stream_index}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_index])))
