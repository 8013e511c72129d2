import math
from itertools import combinations

import numpy as np
import pytest

from fpqkd.errors import DomainError
from fpqkd.fock import FockDensityMatrix, fock_matrix, read_td_csv, td_table, trace_distance, write_td_csv
from fpqkd.source import INTERVALS, Region, all_regions, classify_arrays, poisson_weight, region_mask, sample_emissions


def _analytic_td_2x2(a, b):
    # traceless Hermitian difference [[d, c], [c*, -d]] has eigenvalues +-sqrt(d^2 + |c|^2)
    diff = a - b
    return math.sqrt(diff[0, 0].real ** 2 + abs(diff[0, 1]) ** 2)


def test_vacuum(cfg):
    for r in all_regions():
        m = fock_matrix(r, 0, cfg)
        assert m.entries.shape == (1, 1)
        assert m.entries[0, 0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_validity(cfg, n):
    for r in all_regions() + [Region("Z", None, j) for j in INTERVALS]:
        fock_matrix(r, n, cfg).check()


@pytest.mark.parametrize("n", [1, 2, 4])
def test_key_basis_diagonal(cfg, n):
    for j in INTERVALS:
        for bit in (0, 1, None):
            m = fock_matrix(Region("Z", bit, j), n, cfg).entries
            assert np.max(np.abs(m - np.diag(np.diag(m)))) <= 1e-10


def test_key_basis_single_photon_is_maximally_mixed(cfg):
    m = fock_matrix(Region("Z", None, "alpha"), 1, cfg).entries
    assert np.max(np.abs(m - np.eye(2) / 2)) <= 1e-9


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sigma_minus_from_sigma_plus(cfg, n):
    r_idx = np.arange(n + 1)
    sign = (-1.0) ** (r_idx[:, None] - r_idx[None, :])
    for j in INTERVALS:
        plus = fock_matrix(Region("X", 0, j), n, cfg).entries
        minus = fock_matrix(Region("X", 1, j), n, cfg).entries
        assert np.max(np.abs(minus - plus * sign)) <= 1e-9


def test_trace_distance_basics(cfg):
    a = fock_matrix(Region("X", 0, "alpha"), 2, cfg)
    assert trace_distance(a, a) == 0.0
    p, q = 0.3, 0.8
    assert trace_distance(np.diag([p, 1 - p]), np.diag([q, 1 - q])) == pytest.approx(abs(p - q), abs=1e-15)
    with pytest.raises(DomainError):
        trace_distance(np.eye(2) / 2, np.eye(3) / 3)
    with pytest.raises(DomainError):
        FockDensityMatrix(2, np.eye(2))


def test_single_photon_analytic(cfg):
    mats = {j: fock_matrix(Region("X", 0, j), 1, cfg).entries for j in INTERVALS}
    for j, k in combinations(INTERVALS, 2):
        assert trace_distance(mats[j], mats[k]) == pytest.approx(_analytic_td_2x2(mats[j], mats[k]), abs=1e-8)


def test_triangle_inequality(cfg):
    rng = np.random.default_rng(4)
    pool = [fock_matrix(r, 3, cfg) for r in all_regions()]
    for _ in range(60):
        a, b, c = (pool[i] for i in rng.choice(len(pool), 3, replace=False))
        assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-9


def test_table(cfg, td, tmp_path):
    for (basis, j, k, n), d in td.items():
        assert 0.0 <= d <= 1.0
        assert INTERVALS.index(j) <= INTERVALS.index(k)
        if j == k:
            assert d == 0.0
    assert {n for (b, _, _, n) in td if b == "Z"} == {2, 3, 4}
    assert {n for (b, _, _, n) in td if b == "X"} == {1, 2, 3, 4}
    # distances grow as the intensity intervals separate
    assert td[("Z", "alpha", "gamma", 2)] > td[("Z", "beta", "gamma", 2)] > 0
    path = tmp_path / "td.csv"
    write_td_csv(td, path)
    assert read_td_csv(path) == td
    cached = td_table(cfg, cache_dir=tmp_path)
    assert td_table(cfg, cache_dir=tmp_path) == cached == pytest.approx(td, abs=0)


def _mc_matrix(region, n, cfg, samples, seed):
    """Region-conditioned n-photon matrix and entrywise standard errors by sampling."""
    rng = np.random.default_rng(seed)
    phi, theta, mu = sample_emissions(cfg.mu_max, samples, rng)
    mask = region_mask(region, cfg, *classify_arrays(phi, theta, mu, cfg))
    w = np.where(mask, poisson_weight(n)(phi, theta, mu), 0.0)
    k = np.arange(n + 1)
    binom = np.sqrt([math.comb(n, i) for i in k])
    amp = binom * np.cos(theta / 2)[:, None] ** (n - k) * np.sin(theta / 2)[:, None] ** k
    amp = amp * np.exp(1j * k * phi[:, None])
    terms = w[:, None, None] * amp[:, :, None] * amp.conj()[:, None, :]
    # ratio estimator: linearize around the mean weight
    wm = w.mean()
    mat = terms.mean(0) / wm
    resid = (terms - mat[None] * w[:, None, None]) / wm
    se = np.sqrt((np.abs(resid) ** 2).mean(0) / samples)
    return mat, se


@pytest.mark.parametrize("pair", [("beta", "gamma"), ("alpha", "gamma")])
def test_monte_carlo_matrix_oracle(cfg, pair):
    n = 2
    quad = {j: fock_matrix(Region("Z", None, j), n, cfg).entries for j in pair}
    mc = {j: _mc_matrix(Region("Z", None, j), n, cfg, 4_000_000, seed) for seed, j in enumerate(pair)}
    for j in pair:
        mat, se = mc[j]
        assert np.all(np.abs(mat - quad[j]) <= 3 * se + 1e-15)
    # |D(a', b') - D(a, b)| <= ||a' - a||_1 + ||b' - b||_1 <= sqrt(n + 1) (||.||_F + ||.||_F)
    slack = sum(math.sqrt(n + 1) * np.linalg.norm(3 * mc[j][1]) for j in pair)
    exact = trace_distance(quad[pair[0]], quad[pair[1]])
    a, b = mc[pair[0]][0], mc[pair[1]][0]
    dense = 0.5 * np.abs(np.linalg.eigvalsh((a - b + (a - b).conj().T) / 2)).sum()
    assert abs(dense - exact) <= slack
