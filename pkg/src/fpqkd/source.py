"""Passive transmitter model: output distribution, post-selection, region averages.

Each emitted signal is a phase-randomized two-time-bin coherent state with
total intensity ``mu``, polar angle ``theta`` and relative phase ``phi``. The
early and late intensities are independent, each distributed as
``mu_max * sin(u)^2`` with ``u`` uniform on ``[0, pi/2]``. Integrals weighted by
the transmitter density are therefore computed in ``(phi, u, v)`` coordinates
where the density is constant and the inverse-square-root edges of the
``(theta, mu)`` density disappear.

Regions are described by their basis (``"Z"``, ``"X"`` or ``None`` for the full
domain), bit (0, 1 or ``None`` for the union of both) and intensity interval
(``"alpha"``, ``"beta"``, ``"gamma"``). Intervals are nested:
``gamma`` ⊂ ``beta`` ⊂ ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from fpqkd.errors import (
    ConvergenceError,
    DegenerateRegionError,
    DomainError,
    InconsistencyError,
)

INTERVALS: tuple[str, ...] = ("alpha", "beta", "gamma")
BASES: tuple[str, ...] = ("Z", "X")

QUAD_RTOL = 1e-8
MEASUREMENT_RTOL = 1e-6

Integrand = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PulseState:
    """One emitted signal on the two-time-bin Bloch sphere."""

    phi: float
    theta: float
    mu: float
    phi_sign_known: bool = True

    def __post_init__(self):
        if not -math.pi < self.phi <= math.pi:
            raise DomainError(f"phi must lie in (-pi, pi], got {self.phi}")
        if not 0.0 <= self.theta <= math.pi:
            raise DomainError(f"theta must lie in [0, pi], got {self.theta}")
        if self.mu < 0.0:
            raise DomainError(f"mu must be non-negative, got {self.mu}")

    @property
    def mu_early(self) -> float:
        return self.mu * math.cos(self.theta / 2.0) ** 2

    @property
    def mu_late(self) -> float:
        return self.mu * math.sin(self.theta / 2.0) ** 2


@dataclass(frozen=True)
class PostSelectionConfig:
    """Acceptance thresholds of the local post-selection.

    Attributes
    ----------
    mu_max : float
        Maximum intensity of a single time-bin.
    d_theta_z, d_theta_x, d_phi_x : float
        Angular half-widths (radians) of the key- and test-basis bands.
    t1, t2 : float
        Interval fractions: ``I_beta = [0, t1 mu_max)``, ``I_gamma = [0, t2 mu_max)``.
    """

    mu_max: float = 0.359
    d_theta_z: float = 0.6135
    d_theta_x: float = 0.1002
    d_phi_x: float = 0.6435
    t1: float = 0.55
    t2: float = 0.15

    def __post_init__(self):
        if not self.mu_max > 0.0:
            raise DomainError(f"mu_max must be positive, got {self.mu_max}")
        if not 0.0 < self.d_theta_z < math.pi / 2:
            raise DomainError(f"d_theta_z must lie in (0, pi/2), got {self.d_theta_z}")
        if not 0.0 < self.d_theta_x < math.pi / 2:
            raise DomainError(f"d_theta_x must lie in (0, pi/2), got {self.d_theta_x}")
        if not self.d_theta_z < math.pi / 2 - self.d_theta_x:
            raise DomainError("Z and X theta bands overlap")
        if not 0.0 < self.d_phi_x <= math.pi / 2:
            raise DomainError(f"d_phi_x must lie in (0, pi/2], got {self.d_phi_x}")
        if not 0.0 < self.t2 < self.t1 < 2.0:
            raise DomainError(f"need 0 < t2 < t1 < 2, got t1={self.t1}, t2={self.t2}")

    def interval_fraction(self, interval: str) -> float:
        """Upper end of ``I_j`` in units of ``mu_max``."""
        try:
            return {"alpha": 2.0, "beta": self.t1, "gamma": self.t2}[interval]
        except KeyError:
            raise DomainError(f"unknown interval {interval!r}") from None

    def with_mu_max(self, mu_max: float) -> "PostSelectionConfig":
        return PostSelectionConfig(
            mu_max, self.d_theta_z, self.d_theta_x, self.d_phi_x, self.t1, self.t2
        )

    def thresholds(self) -> tuple[float, float, float, float, float]:
        """Everything except ``mu_max``; region geometry depends only on these."""
        return (self.d_theta_z, self.d_theta_x, self.d_phi_x, self.t1, self.t2)


EXPERIMENT_THRESHOLDS = PostSelectionConfig()


@dataclass(frozen=True)
class Region:
    """Post-selection acceptance set.

    ``basis=None`` denotes the whole emission domain (restricted to ``interval``);
    ``bit=None`` denotes the union of the bit-0 and bit-1 regions.
    """

    basis: str | None
    bit: int | None
    interval: str = "alpha"

    def __post_init__(self):
        if self.basis not in (None, "Z", "X"):
            raise DomainError(f"unknown basis {self.basis!r}")
        if self.bit not in (None, 0, 1):
            raise DomainError(f"bit must be 0, 1 or None, got {self.bit!r}")
        if self.basis is None and self.bit is not None:
            raise DomainError("the full domain has no bit value")
        if self.interval not in INTERVALS:
            raise DomainError(f"unknown interval {self.interval!r}")

    def parts(self) -> list["Region"]:
        """Split a union region into its disjoint single-bit components."""
        if self.basis is not None and self.bit is None:
            return [Region(self.basis, 0, self.interval), Region(self.basis, 1, self.interval)]
        return [self]

    def mirrored(self) -> "Region":
        """Image under ``theta -> pi - theta`` (swapping the time-bins)."""
        if self.basis == "Z" and self.bit is not None:
            return Region("Z", 1 - self.bit, self.interval)
        return self

    @property
    def label(self) -> str:
        if self.basis is None:
            return f"full_{self.interval}"
        bit = "" if self.bit is None else str(self.bit)
        return f"{self.basis}{bit}_{self.interval}"


def all_regions() -> list[Region]:
    """The twelve regions ``Omega^{Z,X}_{b,j}`` with definite bit."""
    return [Region(b, bit, j) for b in BASES for bit in (0, 1) for j in INTERVALS]


@dataclass(frozen=True)
class Label:
    """Outcome of post-selecting one state."""

    basis: str
    bit: int
    intervals: tuple[str, ...]


def mu_max_theta(theta: float, mu_max: float) -> float:
    """Largest total intensity reachable at polar angle ``theta``."""
    if not 0.0 <= theta <= math.pi:
        raise DomainError(f"theta must lie in [0, pi], got {theta}")
    c2 = math.cos(theta / 2.0) ** 2
    s2 = math.sin(theta / 2.0) ** 2
    return mu_max / max(c2, s2)


def pdf(state: PulseState, mu_max: float) -> float:
    """Transmitter density at ``state`` per rad^2 per unit intensity."""
    if state.mu >= mu_max_theta(state.theta, mu_max):
        raise DomainError("state lies outside the support of the transmitter")
    c2 = math.cos(state.theta / 2.0) ** 2
    s2 = math.sin(state.theta / 2.0) ** 2
    r = state.mu / mu_max
    f_theta_mu = 1.0 / (mu_max * math.pi**2 * math.sqrt(1.0 - r * c2) * math.sqrt(1.0 - r * s2))
    return f_theta_mu / (2.0 * math.pi)


def intensity_thresholds(cfg: PostSelectionConfig) -> tuple[float, float]:
    """Angles ``(Delta_Z, Delta_X)`` delimiting the bands in the ``(mu_e, mu_l)`` plane."""
    tz, tx = cfg.d_theta_z, cfg.d_theta_x
    delta_z = math.atan(math.sin(tz) ** 2 / (1.0 + math.cos(tz)) ** 2)
    delta_x = math.pi / 2 - 2.0 * math.atan(math.cos(tx) ** 2 / (1.0 + math.sin(tx)) ** 2)
    return delta_z, delta_x


def wrap_phase(phi):
    """Map angles to ``(-pi, pi]``."""
    w = np.mod(np.asarray(phi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def state_from_local_measurements(
    mu_e: float, mu_l: float, mu_c: float, mu_d: float, rtol: float = MEASUREMENT_RTOL
) -> PulseState:
    """Reconstruct ``(|phi|, theta, mu)`` from Alice's four intensity readings.

    The interference readings may be normalized either so that
    ``mu_c + mu_d = mu`` (a balanced interferometer) or so that
    ``mu_c, mu_d = mu +- 2 sqrt(mu_e mu_l) cos(phi)`` (sum ``2 mu``); the
    normalization is inferred from the readings.

    Only ``|phi|`` is observable; the returned state stores ``phi >= 0`` with
    ``phi_sign_known=False``. At the poles of the Bloch sphere ``phi`` is
    irrelevant and reported as 0.
    """
    for name, value in (("mu_e", mu_e), ("mu_l", mu_l), ("mu_c", mu_c), ("mu_d", mu_d)):
        if value < 0.0:
            raise DomainError(f"{name} must be non-negative, got {value}")
    mu = mu_e + mu_l
    if mu == 0.0:
        raise DegenerateRegionError("zero intensity: theta and phi are undefined")
    total = mu_c + mu_d
    for gain in (1.0, 2.0):
        if abs(gain * mu - total) <= rtol * max(gain * mu, total):
            break
    else:
        raise InconsistencyError(
            f"mu_c + mu_d = {total} matches neither mu = {mu} nor 2 mu"
        )
    theta = 2.0 * math.acos(min(1.0, math.sqrt(mu_e / mu)))
    cross = 2.0 * gain * math.sqrt(mu_e * mu_l)
    if cross == 0.0:
        return PulseState(0.0, theta, mu, phi_sign_known=False)
    arg = min(1.0, max(-1.0, (mu_c - mu_d) / cross))
    return PulseState(math.acos(arg), theta, mu, phi_sign_known=False)


def classify(state: PulseState, cfg: PostSelectionConfig) -> Label | None:
    """Basis, bit and interval set of ``state``; ``None`` means rejected."""
    out = classify_arrays(
        np.array([state.phi]), np.array([state.theta]), np.array([state.mu]), cfg
    )
    basis, bit, levels = out[0][0], out[1][0], out[2][0]
    if basis == 0:
        return None
    intervals = tuple(j for j, lvl in zip(("gamma", "beta", "alpha"), (3, 2, 1)) if levels >= lvl)
    return Label("Z" if basis == 1 else "X", int(bit), intervals)


def classify_arrays(phi, theta, mu, cfg: PostSelectionConfig):
    """Vectorized post-selection.

    Returns ``(basis, bit, level)`` integer arrays: basis 0 = reject, 1 = Z,
    2 = X; level counts the nested intervals containing ``mu`` (3 = all of
    gamma, beta, alpha; 0 = none).
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    aphi = np.abs(wrap_phase(phi))
    z0 = theta < cfg.d_theta_z
    z1 = theta > np.pi - cfg.d_theta_z
    xband = np.abs(theta - np.pi / 2) < cfg.d_theta_x
    x0 = xband & (aphi < cfg.d_phi_x)
    x1 = xband & (np.pi - aphi < cfg.d_phi_x)
    basis = np.zeros(theta.shape, dtype=np.int8)
    bit = np.zeros(theta.shape, dtype=np.int8)
    basis[z0 | z1] = 1
    bit[z1] = 1
    basis[x0 | x1] = 2
    bit[x1] = 1
    rel = mu / cfg.mu_max
    level = (
        (rel < 2.0).astype(np.int8) + (rel < cfg.t1).astype(np.int8) + (rel < cfg.t2).astype(np.int8)
    )
    return basis, bit, level


def region_mask(region: Region, cfg: PostSelectionConfig, basis, bit, level) -> np.ndarray:
    """Membership of classified samples in ``region``."""
    need = {"alpha": 1, "beta": 2, "gamma": 3}[region.interval]
    mask = level >= need
    if region.basis is None:
        return mask
    mask = mask & (basis == (1 if region.basis == "Z" else 2))
    if region.bit is not None:
        mask = mask & (bit == region.bit)
    return mask


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and weights such that ``<g>_Omega = sum(w * g(phi, theta, mu_max * rho2))``."""

    phi: np.ndarray
    theta: np.ndarray
    rho2: np.ndarray
    weight: np.ndarray

    def integrate(self, g: Integrand, mu_max: float):
        values = np.asarray(g(self.phi, self.theta, mu_max * self.rho2))
        values = np.broadcast_to(values, self.weight.shape)
        total = np.sum(self.weight * values)
        return complex(total) if np.iscomplexobj(total) else float(total)


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _band(region: Region, cfg: PostSelectionConfig) -> tuple[float, float]:
    """Admissible range of ``tan(theta/2) = sqrt(mu_l/mu_e)``."""
    if region.basis is None:
        return 0.0, math.inf
    if region.basis == "Z":
        k = math.tan(cfg.d_theta_z / 2.0)
        return (0.0, k) if region.bit == 0 else (1.0 / k, math.inf)
    k = math.tan(math.pi / 4 - cfg.d_theta_x / 2.0)
    return k, 1.0 / k


def _phi_nodes(region: Region, cfg: PostSelectionConfig, n_phi: int, n_phi_window: int):
    """Phase nodes and weights that already include the ``1/2pi`` density."""
    if region.basis in (None, "Z"):
        # periodic trapezoid: exact for trigonometric polynomials of degree < n_phi
        phi = -np.pi + 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
        return phi, np.full(n_phi, 1.0 / n_phi)
    x, w = _gauss(n_phi_window)
    d = cfg.d_phi_x
    centre = 0.0 if region.bit == 0 else np.pi
    phi = wrap_phase(centre - d + 2.0 * d * x)
    return np.atleast_1d(phi), w * 2.0 * d / (2.0 * np.pi)


def _radial_breakpoints(k_lo: float, k_hi: float, t: float) -> list[float]:
    """Values of ``a = sin(u)`` where the ``v``-limits change form."""
    pts = []
    for k in (k_lo, k_hi):
        if math.isfinite(k) and k > 1.0:
            pts.append(1.0 / k)
        if math.isfinite(k) and k > 0.0:
            pts.append(math.sqrt(t / (1.0 + k * k)))
    if t < 1.0:
        pts.append(math.sqrt(t))
    elif t < 2.0:
        pts.append(math.sqrt(t - 1.0))
    return sorted(p for p in pts if 0.0 < p < 1.0)


def _band_nodes(k_lo: float, k_hi: float, t: float, n_u: int, n_v: int):
    """``(theta, rho2, weight)`` nodes for ``k_lo a < b < k_hi a``, ``a^2 + b^2 < t``.

    Requires ``k_hi <= 1`` or a band straddling the diagonal with finite
    ``k_hi``; wedges above the diagonal are handled by mirroring.
    """
    us, uw = [], []
    edges = [0.0] + [math.asin(a) for a in _radial_breakpoints(k_lo, k_hi, t)] + [math.pi / 2]
    s, sw = _gauss(n_u)
    for lo, hi in zip(edges[:-1], edges[1:]):
        # cosine map clusters nodes at both panel ends, absorbing sqrt-type kinks
        us.append(lo + (hi - lo) * (1.0 - np.cos(np.pi * s)) / 2.0)
        uw.append(sw * (hi - lo) * np.pi / 2.0 * np.sin(np.pi * s))
    u = np.concatenate(us)
    wu = np.concatenate(uw)

    a = np.sin(u)
    b_lo = np.minimum(k_lo * a, 1.0)
    b_hi = np.minimum(np.minimum(k_hi * a, 1.0), np.sqrt(np.clip(t - a * a, 0.0, None)))
    v_lo = np.arcsin(b_lo)
    v_hi = np.arcsin(np.maximum(b_hi, b_lo))
    x, xw = _gauss(n_v)
    v = v_lo[:, None] + (v_hi - v_lo)[:, None] * x[None, :]
    wv = (v_hi - v_lo)[:, None] * xw[None, :]
    w_uv = (4.0 / np.pi**2) * wu[:, None] * wv

    keep = w_uv > 0.0
    a2 = np.broadcast_to(a[:, None], v.shape)[keep]
    b2 = np.sin(v)[keep]
    return 2.0 * np.arctan2(b2, a2), a2 * a2 + b2 * b2, w_uv[keep]


def _inverse(k: float) -> float:
    return math.inf if k == 0.0 else 1.0 / k


@lru_cache(maxsize=256)
def _grid_part(
    region: Region, thresholds: tuple, n_u: int, n_v: int, n_phi: int, n_phi_window: int
) -> QuadratureGrid:
    cfg = PostSelectionConfig(1.0, *thresholds)
    k_lo, k_hi = _band(region, cfg)
    t = cfg.interval_fraction(region.interval)

    # the density is symmetric under swapping the time-bins (theta -> pi - theta),
    # so every wedge is integrated with the wide coordinate on the outside
    parts = []
    if k_lo >= 1.0:
        theta, rho2, w = _band_nodes(_inverse(k_hi), _inverse(k_lo), t, n_u, n_v)
        parts.append((np.pi - theta, rho2, w))
    elif math.isinf(k_hi):
        parts.append(_band_nodes(k_lo, 1.0, t, n_u, n_v))
        theta, rho2, w = _band_nodes(0.0, 1.0, t, n_u, n_v)
        parts.append((np.pi - theta, rho2, w))
    else:
        parts.append(_band_nodes(k_lo, k_hi, t, n_u, n_v))
    theta_uv = np.concatenate([p[0] for p in parts])
    rho2_uv = np.concatenate([p[1] for p in parts])
    w_uv = np.concatenate([p[2] for p in parts])

    phi, wphi = _phi_nodes(region, cfg, n_phi, n_phi_window)
    return QuadratureGrid(
        phi=np.repeat(phi[None, :], theta_uv.size, axis=0).ravel(),
        theta=np.repeat(theta_uv, phi.size),
        rho2=np.repeat(rho2_uv, phi.size),
        weight=(w_uv[:, None] * wphi[None, :]).ravel(),
    )


def quadrature_grids(
    region: Region,
    cfg: PostSelectionConfig,
    n_u: int = 48,
    n_v: int = 32,
    n_phi: int = 24,
    n_phi_window: int = 16,
) -> list[QuadratureGrid]:
    """One grid per disjoint component of ``region``."""
    return [
        _grid_part(part, cfg.thresholds(), n_u, n_v, n_phi, n_phi_window)
        for part in region.parts()
    ]


# ---------------------------------------------------------------------------
# Monte Carlo


def sample_emissions(mu_max: float, n: int, rng: np.random.Generator):
    """Draw ``n`` emitted states as arrays ``(phi, theta, mu)``.

    Uses independent uniform interference phases ``delta_e, delta_l`` and an
    independent uniform relative phase.
    """
    delta_e = rng.uniform(-np.pi, np.pi, n)
    delta_l = rng.uniform(-np.pi, np.pi, n)
    phi = rng.uniform(-np.pi, np.pi, n)
    mu_e = mu_max * (1.0 + np.cos(delta_e)) / 2.0
    mu_l = mu_max * (1.0 + np.cos(delta_l)) / 2.0
    mu = mu_e + mu_l
    theta = 2.0 * np.arctan2(np.sqrt(mu_l), np.sqrt(mu_e))
    return phi, theta, mu


def monte_carlo_integrals(
    integrands: Mapping[str, Integrand],
    regions: Sequence[Region],
    cfg: PostSelectionConfig,
    n_samples: int,
    seed: int,
    chunk: int = 1 << 20,
) -> dict[tuple[str, Region], tuple[float, float]]:
    """Monte Carlo estimates ``(mean, standard error)`` of every ``<g>_Omega``.

    The sample stream is split into fixed-size chunks, each with its own child
    seed, so the result does not depend on how the work is partitioned.
    """
    keys = [(name, region) for name in integrands for region in regions]
    s1 = dict.fromkeys(keys, 0.0)
    s2 = dict.fromkeys(keys, 0.0)
    n_chunks = -(-n_samples // chunk)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    for i, ss in enumerate(seeds):
        n = min(chunk, n_samples - i * chunk)
        rng = np.random.default_rng(ss)
        phi, theta, mu = sample_emissions(cfg.mu_max, n, rng)
        basis, bit, level = classify_arrays(phi, theta, mu, cfg)
        masks = {r: region_mask(r, cfg, basis, bit, level) for r in regions}
        for name, g in integrands.items():
            values = np.broadcast_to(np.asarray(g(phi, theta, mu), dtype=float), phi.shape)
            for r in regions:
                x = np.where(masks[r], values, 0.0)
                s1[(name, r)] += float(x.sum())
                s2[(name, r)] += float((x * x).sum())
    out = {}
    for key in keys:
        mean = s1[key] / n_samples
        var = max(s2[key] / n_samples - mean * mean, 0.0)
        out[key] = (mean, math.sqrt(var / n_samples))
    return out


def region_integral(
    g: Integrand,
    region: Region,
    cfg: PostSelectionConfig,
    method: str = "quadrature",
    n_samples: int = 1_000_000,
    seed: int = 0,
):
    """Weighted average ``<g>_Omega`` of ``g(phi, theta, mu)`` over ``region``.

    ``g`` must accept numpy arrays. ``method`` is ``"quadrature"`` or
    ``"monte-carlo"``; the latter ignores complex parts.
    """
    if method == "quadrature":
        return sum(grid.integrate(g, cfg.mu_max) for grid in quadrature_grids(region, cfg))
    if method in ("monte-carlo", "mc"):
        return monte_carlo_integrals({"g": g}, [region], cfg, n_samples, seed)[("g", region)][0]
    raise ValueError(f"unknown integration method {method!r}")


def cross_check(
    g: Integrand,
    region: Region,
    cfg: PostSelectionConfig,
    n_samples: int = 1_000_000,
    seed: int = 0,
    n_sigma: float = 5.0,
) -> float:
    """Quadrature value of ``<g>_Omega``, verified against Monte Carlo."""
    quad = region_integral(g, region, cfg)
    mean, se = monte_carlo_integrals({"g": g}, [region], cfg, n_samples, seed)[("g", region)]
    if abs(quad - mean) > n_sigma * se + QUAD_RTOL * abs(quad):
        raise ConvergenceError(
            f"{region.label}: quadrature {quad:.10g} vs Monte Carlo {mean:.10g} +- {se:.3g}"
        )
    return quad


# ---------------------------------------------------------------------------
# photon statistics


def poisson_weight(n: int) -> Integrand:
    """Integrand ``e^{-mu} mu^n / n!``."""
    log_fact = float(gammaln(n + 1))

    def g(phi, theta, mu):
        mu = np.asarray(mu, dtype=float)
        if n == 0:
            return np.exp(-mu)
        with np.errstate(divide="ignore"):
            return np.exp(-mu + n * np.log(mu) - log_fact)

    return g


def one(phi, theta, mu):
    return np.ones_like(np.asarray(mu, dtype=float))


def region_measure(region: Region, cfg: PostSelectionConfig) -> float:
    """Probability ``<1>_Omega`` that an emitted state falls in ``region``."""
    return region_integral(one, region, cfg)


def photon_stats(region: Region, n: int | Iterable[int], cfg: PostSelectionConfig):
    """Conditional photon-number probabilities ``p_{n|j}`` within ``region``.

    Accepts a single ``n`` (returns a float) or an iterable (returns an array).
    """
    scalar = isinstance(n, (int, np.integer))
    ns = [int(n)] if scalar else [int(k) for k in n]
    if any(k < 0 for k in ns):
        raise DomainError("photon number must be non-negative")
    norm = region_measure(region, cfg)
    if norm <= 0.0:
        raise DegenerateRegionError(f"{region.label} has zero measure")
    p = np.array([region_integral(poisson_weight(k), region, cfg) / norm for k in ns])
    return float(p[0]) if scalar else p


def lambda_ideal(interval: str, cfg: PostSelectionConfig) -> float:
    """Expected fraction of ideal ``|+>`` single-photon states in ``Omega^X_{0,j}``."""
    region = Region("X", 0, interval)
    g1 = poisson_weight(1)
    den = region_integral(g1, region, cfg)
    if den <= 0.0:
        raise DegenerateRegionError(f"{region.label} has zero single-photon weight")
    num = region_integral(lambda p, t, m: g1(p, t, m) * np.sin(t) * np.cos(p), region, cfg)
    return num / den
