"""Decoy-state finite-key estimation: observed counts -> secret key length.

The chain is

1. Kato boxes on the key-basis gains and test-basis error gains;
2. a linear program bounding the single-photon key-basis yield (min and max);
3. reverse Kato bounds on the number of single-photon key-basis counts;
4. a second linear program bounding the error rate of ideal test-basis
   single-photon states, then the Serfling-corrected phase-error bound;
5. the privacy-amplification key length.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import linprog

from fpqkd.errors import DomainError, InfeasibleLPError
from fpqkd.fock import N_CUT, lookup, td_table
from fpqkd.kato import (
    kato_direct_lower,
    kato_direct_upper,
    kato_reverse_lower,
    kato_reverse_upper,
    serfling_upsilon,
)
from fpqkd.source import (
    INTERVALS,
    PostSelectionConfig,
    Region,
    lambda_ideal,
    photon_stats,
    poisson_weight,
    region_integral,
    region_measure,
)

EC_EFFICIENCY = 1.16

OBSERVABLE_KEYS = (
    "N",
    "M_Z_alpha",
    "M_Z_beta",
    "M_Z_gamma",
    "M_X_alpha",
    "M_X_beta",
    "M_X_gamma",
    "m_X_alpha",
    "m_X_beta",
    "m_X_gamma",
    "e_Z",
)


@dataclass(frozen=True)
class Observables:
    """Measured (or simulated) counts of one protocol run."""

    N: float
    M_Z: Mapping[str, float]
    M_X: Mapping[str, float]
    m_X: Mapping[str, float]
    e_Z: float

    def __post_init__(self):
        if self.N < 0:
            raise DomainError(f"N must be non-negative, got {self.N}")
        if not 0.0 <= self.e_Z <= 1.0:
            raise DomainError(f"e_Z must lie in [0, 1], got {self.e_Z}")
        for j in self.M_X:
            if self.m_X[j] > self.M_X[j] * (1 + 1e-12):
                raise DomainError(f"m_X[{j}] exceeds M_X[{j}]")
        for counts in (self.M_Z, self.M_X, self.m_X):
            if any(v < 0 for v in counts.values()):
                raise DomainError("counts must be non-negative")

    @property
    def sifted_len(self) -> float:
        return self.M_Z["alpha"]

    def as_dict(self) -> dict[str, float]:
        out = {"N": self.N}
        for name, counts in (("M_Z", self.M_Z), ("M_X", self.M_X), ("m_X", self.m_X)):
            for j in INTERVALS:
                out[f"{name}_{j}"] = counts[j]
        out["e_Z"] = self.e_Z
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "Observables":
        missing = [k for k in OBSERVABLE_KEYS if k not in data]
        if missing:
            raise DomainError(f"observables missing keys: {missing}")
        pick = lambda name: {j: float(data[f"{name}_{j}"]) for j in INTERVALS}  # noqa: E731
        return cls(float(data["N"]), pick("M_Z"), pick("M_X"), pick("m_X"), float(data["e_Z"]))

    @classmethod
    def load(cls, path: str | Path) -> "Observables":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class SecurityParams:
    eps: float
    eps_PE: float
    eps_PA: float
    delta: float
    eps_cor: float
    eps_sec: float


def security_accounting(eps: float) -> SecurityParams:
    """Derive every failure probability from the common ``eps``.

    Seventeen concentration-bound usages give ``eps_PE = 17 eps``.

    >>> round(security_accounting(1e-20).eps_sec * 1e10, 3)
    4.123
    """
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    return SecurityParams(
        eps=eps,
        eps_PE=17.0 * eps,
        eps_PA=eps,
        delta=eps,
        eps_cor=eps,
        eps_sec=math.sqrt(17.0 * eps) + 2.0 * eps,
    )


@dataclass(frozen=True)
class SourceStats:
    """Region averages of the transmitter consumed by the estimator.

    ``p_Z[j][n]`` and ``p_X[j][n]`` are photon-number probabilities conditioned
    on ``Omega^Z_j`` / ``Omega^X_j``; ``measure_*`` are the ``<1>`` normalizers;
    ``single_*_alpha`` are ``<e^{-mu} mu>`` over the widest interval.
    """

    p_Z: Mapping[str, np.ndarray]
    p_X: Mapping[str, np.ndarray]
    measure_Z: Mapping[str, float]
    measure_X: Mapping[str, float]
    single_Z_alpha: float
    single_X_alpha: float
    lambdas: Mapping[str, float]

    @property
    def intervals(self) -> list[str]:
        return list(self.p_Z)

    @property
    def n_cut(self) -> int:
        return len(next(iter(self.p_Z.values()))) - 1


def source_stats(cfg: PostSelectionConfig, n_cut: int = N_CUT) -> SourceStats:
    ns = range(n_cut + 1)
    regions_z = {j: Region("Z", None, j) for j in INTERVALS}
    regions_x = {j: Region("X", None, j) for j in INTERVALS}
    g1 = poisson_weight(1)
    return SourceStats(
        p_Z={j: photon_stats(r, ns, cfg) for j, r in regions_z.items()},
        p_X={j: photon_stats(r, ns, cfg) for j, r in regions_x.items()},
        measure_Z={j: region_measure(r, cfg) for j, r in regions_z.items()},
        measure_X={j: region_measure(r, cfg) for j, r in regions_x.items()},
        single_Z_alpha=region_integral(g1, regions_z["alpha"], cfg),
        single_X_alpha=region_integral(g1, regions_x["alpha"], cfg),
        lambdas={j: lambda_ideal(j, cfg) for j in INTERVALS},
    )


@dataclass
class KeyRateReport:
    y1_L: float = 0.0
    y1_U: float = 0.0
    M_Z1_L: float = 0.0
    M_Z1_U: float = 0.0
    e_X1_ideal_U: float = 0.0
    M_X1_ideal_L: float = 0.0
    m_X1_ideal_U: float = 0.0
    e_ph_U: float = 0.5
    lambda_EC: float = 0.0
    key_len: int = 0
    skr: float = 0.0
    status: str = "ok"
    observables: Observables | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("observables")
        return out


# ---------------------------------------------------------------------------
# linear programs

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _solve(c, A_ub, b_ub, A_eq, b_eq, bounds, what: str) -> float:
    res = linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs-ds",
        options=_HIGHS,
    )
    if res.status == 2:
        raise InfeasibleLPError(f"{what} is infeasible")
    if res.status != 0:
        raise InfeasibleLPError(f"{what}: solver failed ({res.message})")
    return float(res.fun)


def _decoy_rows(p: np.ndarray, lo: float, hi: float, offset: int, nvar: int):
    """``sum p y <= hi`` and ``sum p y + tail >= lo``, as ``A_ub x <= b_ub`` rows."""
    tail = 1.0 - float(np.sum(p))
    row = np.zeros(nvar)
    row[offset : offset + len(p)] = p
    return [row, -row], [hi, tail - lo]


def gain_box(count: float, guess: float, N: float, norm: float, eps: float) -> tuple[float, float]:
    """Kato confidence interval on a conditional gain with normalizer ``norm``."""
    lo = kato_direct_lower(count, N, eps, guess) / norm
    hi = kato_direct_upper(count, N, eps, guess) / norm
    return lo, hi


def solve_yield_lp(
    p: Mapping[str, np.ndarray],
    boxes: Mapping[str, tuple[float, float]],
    td: Mapping,
    direction: str,
    couple_vacuum: bool = True,
) -> float:
    """Optimize ``y_{j1,1}`` (``j1`` the first interval) over the decoy polytope.

    ``p[j][n]`` are photon-number probabilities for ``n = 0..n_cut`` and
    ``boxes[j]`` the confidence interval on the gain of interval ``j``. Yields
    of the same photon number in different intervals differ by at most the
    trace distance of the corresponding states; single-photon yields are
    equal across intervals, and so are vacuum yields unless ``couple_vacuum``
    is off (the vacuum state does not depend on the interval).
    """
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    js = list(p)
    n_cut = len(p[js[0]]) - 1
    width = n_cut + 1
    nvar = len(js) * width
    idx = lambda j, n: js.index(j) * width + n  # noqa: E731

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for j in js:
        rows, rhs = _decoy_rows(np.asarray(p[j]), *boxes[j], idx(j, 0), nvar)
        A_ub += rows
        b_ub += rhs
    for j, k in combinations(js, 2):
        for n in range(2, n_cut + 1):
            d = lookup(td, "Z", j, k, n)
            row = np.zeros(nvar)
            row[idx(j, n)], row[idx(k, n)] = 1.0, -1.0
            A_ub += [row, -row]
            b_ub += [d, d]
        for n in range(0 if couple_vacuum else 1, min(n_cut, 1) + 1):
            row = np.zeros(nvar)
            row[idx(j, n)], row[idx(k, n)] = 1.0, -1.0
            A_eq.append(row)
            b_eq.append(0.0)

    c = np.zeros(nvar)
    c[idx(js[0], 1)] = 1.0 if direction == "min" else -1.0
    value = _solve(c, A_ub, b_ub, A_eq, b_eq, [(0.0, 1.0)] * nvar, f"yield LP ({direction})")
    return min(max(value if direction == "min" else -value, 0.0), 1.0)


def solve_error_lp(
    p: Mapping[str, np.ndarray],
    boxes: Mapping[str, tuple[float, float]],
    td: Mapping,
    lambdas: Mapping[str, float],
    y1_L: float,
    couple_vacuum: bool = True,
) -> float:
    """Maximize the ideal single-photon error rate over the error-gain polytope.

    The last LP variable is ``e_ideal``; the rest are per-interval error
    yields ``e_{j,n}``, with vacuum entries equal across intervals when
    ``couple_vacuum`` is set.
    """
    js = list(p)
    n_cut = len(p[js[0]]) - 1
    width = n_cut + 1
    nvar = len(js) * width + 1
    ideal = nvar - 1
    idx = lambda j, n: js.index(j) * width + n  # noqa: E731

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for j in js:
        rows, rhs = _decoy_rows(np.asarray(p[j]), *boxes[j], idx(j, 0), nvar)
        A_ub += rows
        b_ub += rhs
    for j, k in combinations(js, 2):
        if couple_vacuum:
            row = np.zeros(nvar)
            row[idx(j, 0)], row[idx(k, 0)] = 1.0, -1.0
            A_eq.append(row)
            b_eq.append(0.0)
        for n in range(1, n_cut + 1):
            d = lookup(td, "X", j, k, n)
            row = np.zeros(nvar)
            row[idx(j, n)], row[idx(k, n)] = 1.0, -1.0
            A_ub += [row, -row]
            b_ub += [d, d]
    for j in js:
        lam = lambdas[j]
        row = np.zeros(nvar)
        row[ideal] = lam
        row[idx(j, 1)] = -1.0
        A_ub.append(row)
        b_ub.append(-(1.0 - lam) * y1_L / 2.0)

    c = np.zeros(nvar)
    c[ideal] = -1.0
    value = -_solve(c, A_ub, b_ub, A_eq, b_eq, [(0.0, 1.0)] * nvar, "error LP")
    return min(max(value, 0.0), 1.0)


def yield_boxes(
    obs: Observables, stats: SourceStats, sec: SecurityParams, q_x: float, guesses: Observables | None = None
) -> dict[str, tuple[float, float]]:
    guesses = guesses or obs
    return {
        j: gain_box(obs.M_Z[j], guesses.M_Z[j], obs.N, obs.N * (1.0 - q_x) * stats.measure_Z[j], sec.eps)
        for j in stats.intervals
    }


def error_boxes(
    obs: Observables, stats: SourceStats, sec: SecurityParams, q_x: float, guesses: Observables | None = None
) -> dict[str, tuple[float, float]]:
    guesses = guesses or obs
    return {
        j: gain_box(obs.m_X[j], guesses.m_X[j], obs.N, obs.N * q_x * stats.measure_X[j], sec.eps)
        for j in stats.intervals
    }


def yield_lp(
    obs: Observables,
    stats: SourceStats,
    td: Mapping,
    sec: SecurityParams,
    direction: str,
    q_x: float,
    guesses: Observables | None = None,
) -> float:
    """Bound on the single-photon key-basis yield ``y^Z_{alpha,1}``.

    ``direction`` is ``"min"`` (giving ``y1_L``) or ``"max"`` (``y1_U``).
    """
    return solve_yield_lp(stats.p_Z, yield_boxes(obs, stats, sec, q_x, guesses), td, direction)


def error_lp(
    obs: Observables,
    stats: SourceStats,
    td: Mapping,
    y1_L: float,
    sec: SecurityParams,
    q_x: float,
    guesses: Observables | None = None,
) -> float:
    """Upper bound on the error rate of ideal test-basis single-photon states."""
    boxes = error_boxes(obs, stats, sec, q_x, guesses)
    return solve_error_lp(stats.p_X, boxes, td, stats.lambdas, y1_L)


# ---------------------------------------------------------------------------
# bound chain


def m_z1_bounds(
    y1_L: float, y1_U: float, stats: SourceStats, N: float, q_x: float, sec: SecurityParams
) -> tuple[float, float]:
    """Reverse-Kato bounds on the number of single-photon key-basis counts."""
    scale = N * (1.0 - q_x) * stats.single_Z_alpha
    return (
        kato_reverse_lower(scale * y1_L, N, sec.eps),
        kato_reverse_upper(scale * y1_U, N, sec.eps),
    )


def phase_error_upper(
    M_Z1_L: float,
    M_Z1_U: float,
    y1_L: float,
    e_X1_ideal_U: float,
    stats: SourceStats,
    N: float,
    q_x: float,
    sec: SecurityParams,
) -> tuple[float, float, float]:
    """Single-photon phase-error rate bound.

    Returns ``(e_ph_U, M_X1_ideal_L, m_X1_ideal_U)``. Degenerate inputs (no
    certified single-photon counts) give ``e_ph_U = 1/2``.
    """
    scale = N * q_x * stats.single_X_alpha * stats.lambdas["alpha"]
    M_X1_ideal_L = kato_reverse_lower(scale * y1_L, N, sec.eps)
    m_X1_ideal_U = kato_reverse_upper(scale * e_X1_ideal_U, N, sec.eps)
    if M_X1_ideal_L <= 0.0 or M_Z1_L <= 0.0:
        return 0.5, M_X1_ideal_L, m_X1_ideal_U
    m_ph = M_Z1_U / M_X1_ideal_L * m_X1_ideal_U + serfling_upsilon(M_Z1_U, M_X1_ideal_L, sec.eps)
    return min(0.5, m_ph / M_Z1_L), M_X1_ideal_L, m_X1_ideal_U


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def ec_leakage(sifted_len: float, e_z: float, f_ec: float = EC_EFFICIENCY) -> float:
    return f_ec * sifted_len * binary_entropy(e_z)


def key_length(
    M_Z1_L: float,
    e_ph_U: float,
    obs: Observables,
    sec: SecurityParams,
    f_ec: float = EC_EFFICIENCY,
    ec_threshold: float | None = None,
) -> tuple[int, float]:
    """Extractable key length ``l`` and rate ``l / N``.

    The leakage uses the observed bit-error rate unless ``ec_threshold`` fixes
    a pre-agreed one.
    """
    e_ec = obs.e_Z if ec_threshold is None else ec_threshold
    leak = ec_leakage(obs.sifted_len, e_ec, f_ec)
    pa_cost = math.log2(1.0 / (2.0 * sec.eps_cor * sec.eps_PA**2 * sec.delta))
    raw = M_Z1_L * (1.0 - binary_entropy(e_ph_U)) - leak - pa_cost
    length = max(int(math.floor(raw)), 0)
    return length, (length / obs.N if obs.N > 0 else 0.0)


def estimate_key_rate(
    obs: Observables,
    cfg: PostSelectionConfig,
    q_x: float,
    eps: float,
    guesses: Observables | None = None,
    n_cut: int = N_CUT,
    stats: SourceStats | None = None,
    td: Mapping | None = None,
    f_ec: float = EC_EFFICIENCY,
    ec_threshold: float | None = None,
) -> KeyRateReport:
    """Full finite-key evaluation; infeasible LPs produce a zero-key report."""
    sec = security_accounting(eps)
    stats = stats or source_stats(cfg, n_cut)
    td = td if td is not None else td_table(cfg, n_cut)
    report = KeyRateReport(observables=obs)
    report.lambda_EC = ec_leakage(obs.sifted_len, obs.e_Z if ec_threshold is None else ec_threshold, f_ec)
    if obs.N <= 0:
        report.status = "no rounds"
        return report
    try:
        report.y1_L = yield_lp(obs, stats, td, sec, "min", q_x, guesses)
        report.y1_U = yield_lp(obs, stats, td, sec, "max", q_x, guesses)
        report.e_X1_ideal_U = error_lp(obs, stats, td, report.y1_L, sec, q_x, guesses)
    except InfeasibleLPError as exc:
        report.status = f"infeasible: {exc}"
        return report
    report.M_Z1_L, report.M_Z1_U = m_z1_bounds(report.y1_L, report.y1_U, stats, obs.N, q_x, sec)
    report.e_ph_U, report.M_X1_ideal_L, report.m_X1_ideal_U = phase_error_upper(
        report.M_Z1_L, report.M_Z1_U, report.y1_L, report.e_X1_ideal_U, stats, obs.N, q_x, sec
    )
    report.key_len, report.skr = key_length(
        report.M_Z1_L, report.e_ph_U, obs, sec, f_ec, ec_threshold
    )
    return report
