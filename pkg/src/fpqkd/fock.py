"""Interval-conditioned n-photon density matrices and their trace distances.

Matrices are expressed in the basis ``|n,0>, |n-1,1>, ..., |0,n>`` of ``n``
photons shared between the early and late modes. The state emitted with Bloch
angles ``(theta, phi)`` and exactly ``n`` photons has amplitudes

    c_k = sqrt(C(n, k)) cos(theta/2)^(n-k) sin(theta/2)^k exp(i k phi).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from fpqkd.errors import DegenerateRegionError, DomainError
from fpqkd.source import INTERVALS, PostSelectionConfig, Region, poisson_weight, quadrature_grids

N_CUT = 4


@dataclass(frozen=True)
class FockDensityMatrix:
    n: int
    entries: np.ndarray

    def __post_init__(self):
        if self.entries.shape != (self.n + 1, self.n + 1):
            raise DomainError(f"expected a {(self.n + 1,) * 2} matrix, got {self.entries.shape}")

    def check(self, herm_tol: float = 1e-12, trace_tol: float = 1e-10, psd_tol: float = 1e-10) -> None:
        """Raise ``AssertionError`` unless the matrix is a valid density matrix."""
        m = self.entries
        assert np.max(np.abs(m - m.conj().T)) <= herm_tol, "not Hermitian"
        assert abs(np.trace(m).real - 1.0) <= trace_tol, "trace differs from 1"
        assert np.min(np.linalg.eigvalsh(m)) >= -psd_tol, "negative eigenvalue"


def fock_matrix(region: Region, n: int, cfg: PostSelectionConfig) -> FockDensityMatrix:
    """Average of ``|n><n|_{theta,phi}`` over ``region`` weighted by ``e^{-mu} mu^n/n!``."""
    if n < 0:
        raise DomainError("photon number must be non-negative")
    weight = poisson_weight(n)
    k = np.arange(n + 1)
    binom = np.sqrt(np.array([math.comb(n, i) for i in k], dtype=float))
    m = np.zeros((n + 1, n + 1), dtype=complex)
    den = 0.0
    for grid in quadrature_grids(region, cfg):
        w = grid.weight * weight(grid.phi, grid.theta, cfg.mu_max * grid.rho2)
        den += float(w.sum())
        c = np.cos(grid.theta / 2.0)[:, None]
        s = np.sin(grid.theta / 2.0)[:, None]
        amp = binom * c ** (n - k) * s**k * np.exp(1j * k * grid.phi[:, None])
        m += np.einsum("p,pr,ps->rs", w, amp, amp.conj())
    if not den > 1e-300:
        raise DegenerateRegionError(f"{region.label}: vanishing {n}-photon weight")
    m /= den
    m = (m + m.conj().T) / 2.0
    return FockDensityMatrix(n, m)


def trace_distance(rho: FockDensityMatrix | np.ndarray, tau: FockDensityMatrix | np.ndarray) -> float:
    """Half the trace norm of ``rho - tau``."""
    a = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho)
    b = tau.entries if isinstance(tau, FockDensityMatrix) else np.asarray(tau)
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    diff = (diff + diff.conj().T) / 2.0
    d = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    return min(max(d, 0.0), 1.0)


def td_key(basis: str, j: str, k: str, n: int) -> tuple[str, str, str, int]:
    """Canonical (sorted) key so that lookups are symmetric in ``(j, k)``."""
    j, k = sorted((j, k), key=INTERVALS.index)
    return (basis, j, k, n)


def _config_hash(cfg: PostSelectionConfig, n_cut: int) -> str:
    payload = json.dumps({"cfg": list(cfg.thresholds()) + [cfg.mu_max], "n_cut": n_cut})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def td_table(
    cfg: PostSelectionConfig, n_cut: int = N_CUT, cache_dir: str | Path | None = None
) -> dict[tuple[str, str, str, int], float]:
    """All trace distances coupling the decoy-state LP variables.

    Keys are ``(basis, j, k, n)`` with ``j`` before ``k`` in
    ``(alpha, beta, gamma)`` order, plus the zero diagonal ``j == k``. Key-basis
    entries cover ``n = 2..n_cut`` (single-photon key-basis yields are taken
    equal); test-basis entries compare ``sigma^+`` states for ``n = 1..n_cut``.
    """
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"td_{_config_hash(cfg, n_cut)}.csv"
        if path.exists():
            return read_td_csv(path)

    table: dict[tuple[str, str, str, int], float] = {}
    for basis, bit, n_lo in (("Z", None, 2), ("X", 0, 1)):
        for n in range(n_lo, n_cut + 1):
            mats = {j: fock_matrix(Region(basis, bit, j), n, cfg) for j in INTERVALS}
            for j in INTERVALS:
                table[(basis, j, j, n)] = 0.0
            for j, k in combinations(INTERVALS, 2):
                table[td_key(basis, j, k, n)] = trace_distance(mats[j], mats[k])

    if path is not None:
        write_td_csv(table, path)
    return table


def lookup(table: dict, basis: str, j: str, k: str, n: int) -> float:
    return table[td_key(basis, j, k, n)]


def write_td_csv(table: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["basis", "j", "k", "n", "distance"])
        for (basis, j, k, n), d in sorted(table.items()):
            writer.writerow([basis, j, k, n, f"{d:.17g}"])


def read_td_csv(path: str | Path) -> dict:
    with Path(path).open(newline="") as fh:
        return {
            (row["basis"], row["j"], row["k"], int(row["n"])): float(row["distance"])
            for row in csv.DictReader(fh)
        }
