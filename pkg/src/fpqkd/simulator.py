"""Honest-channel simulator producing protocol observables.

Bob's receiver routes each pulse passively to the test basis with probability
``q_x`` and to the key basis otherwise. Every detector clicks with probability
``1 - (1 - p_dark) exp(-eta * intensity)``; double clicks resolve to a uniformly
random bit. ``eta = det_eff * 10^(-loss_db/10)`` already contains the
receiver's internal splitting.

Misalignment ``e_mis`` leaks a fraction of each time-bin into the other in the
key basis and reduces the interference visibility to ``1 - 2 e_mis`` in the
test basis.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.optimize import bisect

from fpqkd.errors import DomainError
from fpqkd.estimator import Observables
from fpqkd.source import (
    INTERVALS,
    PostSelectionConfig,
    PulseState,
    Region,
    classify_arrays,
    quadrature_grids,
    wrap_phase,
)

SHARD_SIZE = 1 << 20


@dataclass(frozen=True)
class ChannelModel:
    loss_db: float = 6.0
    det_eff: float = 0.125
    p_dark: float = 6e-7
    q_x: float = 0.25
    e_mis: float = 0.0

    def __post_init__(self):
        if self.loss_db < 0:
            raise DomainError(f"loss_db must be non-negative, got {self.loss_db}")
        for name in ("det_eff", "p_dark", "q_x"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.e_mis <= 0.5:
            raise DomainError(f"e_mis must lie in [0, 1/2], got {self.e_mis}")

    @property
    def eta(self) -> float:
        """Overall transmittance from Alice's output to a click."""
        return self.det_eff * 10.0 ** (-self.loss_db / 10.0)


@dataclass(frozen=True)
class DetectionOutcome:
    basis: str
    clicks: tuple[bool, bool]
    assigned_bit: int | None


def detector_intensities(phi, theta, mu, ch: ChannelModel, basis: str):
    """Mean photon numbers reaching the two detectors of the chosen arm."""
    phi, theta, mu = (np.asarray(x, dtype=float) for x in (phi, theta, mu))
    if basis == "Z":
        early = mu * np.cos(theta / 2.0) ** 2
        late = mu * np.sin(theta / 2.0) ** 2
        e = ch.e_mis
        return ch.eta * ((1 - e) * early + e * late), ch.eta * ((1 - e) * late + e * early)
    vis = (1.0 - 2.0 * ch.e_mis) * np.sin(theta) * np.cos(phi)
    return ch.eta * mu / 2.0 * (1.0 + vis), ch.eta * mu / 2.0 * (1.0 - vis)


def click_probabilities(phi, theta, mu, ch: ChannelModel, basis: str):
    n0, n1 = detector_intensities(phi, theta, mu, ch, basis)
    keep = 1.0 - ch.p_dark
    return 1.0 - keep * np.exp(-n0), 1.0 - keep * np.exp(-n1)


def outcome_probabilities(phi, theta, mu, ch: ChannelModel, basis: str):
    """Probabilities that Bob records bit 0 and bit 1 (after tie-breaking)."""
    p0, p1 = click_probabilities(phi, theta, mu, ch, basis)
    both = p0 * p1
    return p0 - both / 2.0, p1 - both / 2.0


# ---------------------------------------------------------------------------
# round-by-round simulation


def emit_from_phases(mu_max: float, phases: np.ndarray):
    """Time-bin state produced by four input pulses with phases ``phases[..., 0:4]``."""
    amp = np.exp(1j * np.asarray(phases, dtype=float))
    early = np.sqrt(mu_max) * (amp[..., 0] + amp[..., 1]) / 2.0
    late = np.sqrt(mu_max) * (amp[..., 2] + amp[..., 3]) / 2.0
    mu_e, mu_l = np.abs(early) ** 2, np.abs(late) ** 2
    mu = mu_e + mu_l
    theta = 2.0 * np.arctan2(np.sqrt(mu_l), np.sqrt(mu_e))
    phi = wrap_phase(np.angle(late) - np.angle(early))
    return phi, theta, mu


def sample_state(mu_max: float, rng: np.random.Generator) -> PulseState:
    """Draw one emitted state from four independent phase-randomized pulses."""
    phases = rng.uniform(-np.pi, np.pi, 4)
    phi, theta, mu = emit_from_phases(mu_max, phases)
    return PulseState(float(phi), float(min(max(theta, 0.0), np.pi)), float(mu))


def detect(state: PulseState, ch: ChannelModel, rng: np.random.Generator) -> DetectionOutcome:
    basis = "X" if rng.random() < ch.q_x else "Z"
    p0, p1 = click_probabilities(state.phi, state.theta, state.mu, ch, basis)
    c0, c1 = bool(rng.random() < p0), bool(rng.random() < p1)
    if c0 and c1:
        bit = int(rng.random() < 0.5)
    elif c0 or c1:
        bit = 0 if c0 else 1
    else:
        bit = None
    return DetectionOutcome(basis, (c0, c1), bit)


def _shard_counts(index: int, size: int, seed: int, cfg: PostSelectionConfig, ch: ChannelModel):
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    src, route, click = (np.random.default_rng(s) for s in ss.spawn(3))

    phi, theta, mu = emit_from_phases(cfg.mu_max, src.uniform(-np.pi, np.pi, (size, 4)))
    alice_basis, alice_bit, level = classify_arrays(phi, theta, mu, cfg)
    bob_x = route.random(size) < ch.q_x
    u = click.random((3, size))

    pz = click_probabilities(phi, theta, mu, ch, "Z")
    px = click_probabilities(phi, theta, mu, ch, "X")
    p0 = np.where(bob_x, px[0], pz[0])
    p1 = np.where(bob_x, px[1], pz[1])
    c0, c1 = u[0] < p0, u[1] < p1
    detected = c0 | c1
    bob_bit = np.where(c0 & c1, (u[2] < 0.5).astype(np.int8), c1.astype(np.int8))
    error = bob_bit != alice_bit

    counts = np.zeros((2, 2, 3), dtype=np.int64)
    for b, (alice_code, bob_basis) in enumerate(((1, ~bob_x), (2, bob_x))):
        sel = detected & (alice_basis == alice_code) & bob_basis
        for i, need in enumerate((1, 2, 3)):
            hit = sel & (level >= need)
            counts[b, 0, i] = np.count_nonzero(hit)
            counts[b, 1, i] = np.count_nonzero(hit & error)
    return counts


def _observables_from_counts(N: float, counts: np.ndarray) -> Observables:
    mz = {j: float(counts[0, 0, i]) for i, j in enumerate(INTERVALS)}
    mx = {j: float(counts[1, 0, i]) for i, j in enumerate(INTERVALS)}
    ex = {j: float(counts[1, 1, i]) for i, j in enumerate(INTERVALS)}
    e_z = counts[0, 1, 0] / counts[0, 0, 0] if counts[0, 0, 0] else 0.0
    return Observables(float(N), mz, mx, ex, float(e_z))


def sample_run(
    cfg: PostSelectionConfig,
    ch: ChannelModel,
    N: int,
    seed: int,
    workers: int = 1,
    shard_size: int = SHARD_SIZE,
) -> Observables:
    """Simulate ``N`` rounds one by one and tally the post-selected detections.

    Rounds are split into shards with their own seed substreams; the result is
    independent of ``workers``.
    """
    N = int(N)
    if N < 0:
        raise DomainError("N must be non-negative")
    sizes = [min(shard_size, N - start) for start in range(0, N, shard_size)]
    job = partial(_shard_counts, seed=seed, cfg=cfg, ch=ch)
    total = np.zeros((2, 2, 3), dtype=np.int64)
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(workers) as pool:
            for c in pool.map(job, range(len(sizes)), sizes):
                total += c
    else:
        for i, size in enumerate(sizes):
            total += job(i, size)
    return _observables_from_counts(N, total)


# ---------------------------------------------------------------------------
# expectations


def _region_outcomes(region: Region, cfg: PostSelectionConfig, ch: ChannelModel, basis: str):
    """``<P(bit 0)>`` and ``<P(bit 1)>`` over ``region`` for Bob measuring ``basis``."""
    r0 = r1 = 0.0
    for grid in quadrature_grids(region, cfg):
        q0, q1 = outcome_probabilities(grid.phi, grid.theta, cfg.mu_max * grid.rho2, ch, basis)
        r0 += float(np.sum(grid.weight * q0))
        r1 += float(np.sum(grid.weight * q1))
    return r0, r1


def cell_probabilities(cfg: PostSelectionConfig, ch: ChannelModel) -> dict:
    """Per-round probability of every ``(basis, alice_bit, interval, bob_bit)`` event.

    Intervals are cumulative (nested), as in the observables.
    """
    out = {}
    for basis, route in (("Z", 1.0 - ch.q_x), ("X", ch.q_x)):
        for bit in (0, 1):
            for j in INTERVALS:
                q0, q1 = _region_outcomes(Region(basis, bit, j), cfg, ch, basis)
                out[(basis, bit, j, 0)] = route * q0
                out[(basis, bit, j, 1)] = route * q1
    return out


def _observables_from_cells(N: float, cells: dict) -> Observables:
    def total(basis, j):
        return sum(cells[(basis, a, j, b)] for a in (0, 1) for b in (0, 1))

    def errors(basis, j):
        return cells[(basis, 0, j, 1)] + cells[(basis, 1, j, 0)]

    mz = {j: N * total("Z", j) for j in INTERVALS}
    mx = {j: N * total("X", j) for j in INTERVALS}
    ex = {j: N * errors("X", j) for j in INTERVALS}
    ez = errors("Z", "alpha") / total("Z", "alpha") if total("Z", "alpha") > 0 else 0.0
    return Observables(float(N), mz, mx, ex, float(ez))


def expected_observables(cfg: PostSelectionConfig, ch: ChannelModel, N: float) -> Observables:
    """Mean observables of ``N`` rounds (counts are real-valued expectations)."""
    return _observables_from_cells(N, cell_probabilities(cfg, ch))


def sample_observables(
    cfg: PostSelectionConfig, ch: ChannelModel, N: int, seed: int
) -> Observables:
    """Draw observables with the exact joint law of ``sample_run`` at any ``N``.

    Rounds are independent, so the counts of the disjoint events
    ``(basis, alice_bit, intensity shell, bob_bit)`` are jointly multinomial.
    """
    cells = cell_probabilities(cfg, ch)
    keys, probs = [], []
    for basis in ("Z", "X"):
        for a in (0, 1):
            for b in (0, 1):
                shells = [cells[(basis, a, j, b)] for j in INTERVALS]
                # alpha \ beta, beta \ gamma, gamma
                for i, j in enumerate(INTERVALS):
                    inner = shells[i + 1] if i + 1 < len(shells) else 0.0
                    keys.append((basis, a, j, b))
                    probs.append(max(shells[i] - inner, 0.0))
    probs = np.array(probs)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draw = rng.multinomial(int(N), np.append(probs, max(1.0 - probs.sum(), 0.0)))[:-1]

    shell = dict(zip(keys, draw))
    sampled = {}
    for basis, a, j, b in keys:
        i = INTERVALS.index(j)
        sampled[(basis, a, j, b)] = float(
            sum(shell[(basis, a, jj, b)] for jj in INTERVALS[i:])
        )
    # counts are integers already; reuse the expectation assembler with N=1 scaling
    obs = _observables_from_cells(1.0, sampled)
    return Observables(float(N), obs.M_Z, obs.M_X, obs.m_X, obs.e_Z)


def expected_error_rate_z(cfg: PostSelectionConfig, ch: ChannelModel) -> float:
    """Expected key-basis bit-error rate over ``Omega^Z_alpha``."""
    err = tot = 0.0
    for bit in (0, 1):
        q0, q1 = _region_outcomes(Region("Z", bit, "alpha"), cfg, ch, "Z")
        err += q1 if bit == 0 else q0
        tot += q0 + q1
    return err / tot


def calibrate_misalignment(
    cfg: PostSelectionConfig, ch: ChannelModel, target_e_z: float, tol: float = 1e-4
) -> float:
    """Misalignment that makes the expected key-basis error rate equal ``target_e_z``."""
    rate = lambda e: expected_error_rate_z(cfg, replace(ch, e_mis=e)) - target_e_z  # noqa: E731
    floor = rate(0.0)
    if abs(floor) <= tol:
        return 0.0
    if floor > 0.0:
        raise DomainError(
            f"target e_Z={target_e_z} is below the zero-misalignment floor {floor + target_e_z:.6f}"
        )
    if rate(0.5) < 0.0:
        raise DomainError(f"target e_Z={target_e_z} is unreachable for e_mis <= 1/2")
    return float(bisect(rate, 0.0, 0.5, xtol=1e-9))
