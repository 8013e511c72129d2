"""Kato-inequality confidence functions and the Serfling deviation term.

The *direct* functions bound the sum of conditional expectations given an
observed sum; the *reverse* functions bound the realized sum given its
expectation. Every function takes an a-priori guess ``guess`` of its argument;
the bounds are valid for any fixed guess, only their tightness depends on it.

All logarithms are natural. Results are clamped to ``[0, N]``.
"""

from __future__ import annotations

import math

from fpqkd.errors import DomainError

__all__ = [
    "kato_direct_lower",
    "kato_direct_upper",
    "kato_reverse_lower",
    "kato_reverse_upper",
    "serfling_upsilon",
]


def _check(x: float, N: float, eps: float, guess: float) -> None:
    if N <= 0:
        raise DomainError(f"N must be positive, got {N}")
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    if not 0.0 <= x <= N:
        raise DomainError(f"x must lie in [0, N], got x={x}, N={N}")
    if not 0.0 <= guess <= N:
        raise DomainError(f"guess must lie in [0, N], got {guess}")


def _sqrt(value: float, what: str) -> float:
    if value < 0.0:
        # tiny negative radicands are round-off
        if value > -1e-9 * max(1.0, abs(value)):
            return 0.0
        raise DomainError(f"negative radicand in {what}: {value}")
    return math.sqrt(value)


def _clamp(value: float, N: float) -> float:
    return min(max(value, 0.0), float(N))


def _direct_coeffs(N: float, eps: float, guess: float, upper: bool) -> tuple[float, float]:
    le = math.log(eps)
    if le == 0.0:
        return 0.0, 0.0
    sN = math.sqrt(N)
    g = guess
    inner = 9.0 * g * (N - g) - 2.0 * N * le
    root = _sqrt(-le * inner, "direct Kato a")
    tail = 16.0 * N**1.5 * le**2 - 72.0 * g * sN * (N - g) * le
    if upper:
        tail = -tail
    a = 3.0 * (9.0 * math.sqrt(2.0) * N * (N - 2.0 * g) * root + tail) / (
        4.0 * (9.0 * N - 8.0 * le) * inner
    )
    lin = -24.0 * sN * a if not upper else 24.0 * sN * a
    b = _sqrt(18.0 * N * a**2 - (16.0 * a**2 + lin + 9.0 * N) * le, "direct Kato b") / (
        3.0 * math.sqrt(2.0 * N)
    )
    return a, b


def kato_direct_lower(x: float, N: float, eps: float, guess: float | None = None) -> float:
    """Lower bound on the sum of conditional expectations, given observed sum ``x``.

    ``guess`` defaults to ``x`` (perfect characterization of the setup).
    """
    guess = x if guess is None else guess
    _check(x, N, eps, guess)
    a, b = _direct_coeffs(N, eps, guess, upper=False)
    return _clamp(x - (b + a * (2.0 * x / N - 1.0)) * math.sqrt(N), N)


def kato_direct_upper(x: float, N: float, eps: float, guess: float | None = None) -> float:
    """Upper bound on the sum of conditional expectations, given observed sum ``x``."""
    guess = x if guess is None else guess
    _check(x, N, eps, guess)
    a, b = _direct_coeffs(N, eps, guess, upper=True)
    return _clamp(x + (b + a * (2.0 * x / N - 1.0)) * math.sqrt(N), N)


def _reverse_aprime(N: float, le: float, guess: float, upper: bool) -> float:
    sN = math.sqrt(N)
    g = guess
    quad = 8.0 * g**2 - 8.0 * N * g + 3.0 * N**2
    if upper:
        root = _sqrt(N * le * (N * le + 18.0 * g * (g - N)), "reverse Kato a'")
        num = 9.0 * (N - 2.0 * g) * root + 4.0 * N * le**2 + 9.0 * quad * le
    else:
        root = _sqrt(N * le * (N * le - 18.0 * g * (N - g)), "reverse Kato a'")
        num = 9.0 * (N - 2.0 * g) * root - 4.0 * N * le**2 - 9.0 * quad * le
    den = 4.0 * (
        4.0 * N * le**2 + 36.0 * (2.0 * g**2 - 2.0 * N * g + N**2) * le + 81.0 * N * g * (N - g)
    )
    if den == 0.0:
        # the clamp decides; pick the side that saturates it
        return -math.inf if not upper else math.inf
    return 3.0 * sN * num / den


def kato_reverse_lower(x: float, N: float, eps: float, guess: float | None = None) -> float:
    """Lower bound on the realized sum, given the sum of expectations ``x``."""
    guess = x if guess is None else guess
    _check(x, N, eps, guess)
    le = math.log(eps)
    if le == 0.0:
        return _clamp(x, N)
    sN = math.sqrt(N)
    a = max(_reverse_aprime(N, le, guess, upper=False), -sN / 2.0)
    b = _sqrt(9.0 * a**2 - (4.0 * a + 3.0 * sN) ** 2 * le / (2.0 * N), "reverse Kato b") / 3.0
    den = 2.0 * a + sN
    if den <= 0.0:
        return 0.0
    return _clamp((sN * x + N * (a - b)) / den, N)


def kato_reverse_upper(x: float, N: float, eps: float, guess: float | None = None) -> float:
    """Upper bound on the realized sum, given the sum of expectations ``x``."""
    guess = x if guess is None else guess
    _check(x, N, eps, guess)
    le = math.log(eps)
    if le == 0.0:
        return _clamp(x, N)
    sN = math.sqrt(N)
    a = min(_reverse_aprime(N, le, guess, upper=True), sN / 2.0)
    b = _sqrt(
        18.0 * N * a**2 - (16.0 * a**2 - 24.0 * sN * a + 9.0 * N) * le, "reverse Kato b"
    ) / (3.0 * math.sqrt(2.0 * N))
    den = sN - 2.0 * a
    if den <= 0.0:
        return float(N)
    return _clamp((sN * x - N * (a - b)) / den, N)


def serfling_upsilon(x: float, y: float, z: float) -> float:
    """Serfling sampling deviation ``sqrt((x + y) x (y + 1) ln(1/z) / (2 y^2))``."""
    if y <= 0.0:
        raise DomainError(f"y must be positive, got {y}")
    if not 0.0 < z <= 1.0:
        raise DomainError(f"z must lie in (0, 1], got {z}")
    if x < 0.0:
        raise DomainError(f"x must be non-negative, got {x}")
    return math.sqrt((x + y) * x * (y + 1.0) * math.log(1.0 / z) / (2.0 * y**2))
