import math
from dataclasses import replace

import numpy as np
import pytest

from oracles import box_rows, vertex_optimum

from fpqkd.errors import InfeasibleLPError
from fpqkd.estimator import (
    Observables,
    binary_entropy,
    error_lp,
    estimate_key_rate,
    key_length,
    m_z1_bounds,
    phase_error_upper,
    security_accounting,
    solve_error_lp,
    solve_yield_lp,
    yield_lp,
)
from fpqkd.simulator import ChannelModel, expected_observables, sample_observables

TOY = ("alpha", "beta")


def _obs(N, M, e_z, mx=None, ex=None):
    mz = {"alpha": M, "beta": M * 0.2, "gamma": M * 0.01}
    mx = mx or {"alpha": M * 0.2, "beta": M * 0.04, "gamma": M * 0.002}
    ex = ex or {j: v * 0.03 for j, v in mx.items()}
    return Observables(N, mz, mx, ex, e_z)


# ---------------------------------------------------------------------------
# toy instances against vertex enumeration


def _toy_instance(rng):
    p = {}
    for j in TOY:
        p0 = rng.uniform(0.3, 0.9)
        p1 = rng.uniform(0.05, 1.0 - p0)
        p[j] = np.array([p0, p1])
    truth = rng.uniform(0.0, 0.2, 2)
    boxes = {}
    for j in TOY:
        tail = 1.0 - p[j].sum()
        q = p[j] @ truth + tail * rng.uniform(0, 1)
        w = rng.uniform(0.0, 0.02)
        # occasionally shift a box off the truth so that some toys are infeasible
        shift = rng.choice([0.0, 0.0, 0.0, rng.uniform(-0.3, 0.3)])
        boxes[j] = (max(q - w + shift, 0.0), q + w + shift)
    return p, boxes


def _yield_oracle(p, boxes, couple_vacuum, sense):
    # x = (y_a0, y_a1, y_b0, y_b1)
    G, h = [], []
    for i, j in enumerate(TOY):
        row = np.zeros(4)
        row[2 * i : 2 * i + 2] = p[j]
        tail = 1.0 - p[j].sum()
        G += [row, -row]
        h += [boxes[j][1], tail - boxes[j][0]]
    Gb, hb = box_rows(4)
    G, h = np.vstack([G, Gb]), np.concatenate([h, hb])
    E, f = [[0, 1, 0, -1]], [0.0]
    if couple_vacuum:
        E.append([1, 0, -1, 0])
        f.append(0.0)
    c = np.array([0, 1.0, 0, 0]) * (1 if sense == "min" else -1)
    v = vertex_optimum(c, G, h, np.array(E, float), np.array(f))
    return None if v is None else (v if sense == "min" else -v)


def _error_oracle(p, boxes, d, lambdas, y1_L, couple_vacuum):
    # x = (e_a0, e_a1, e_b0, e_b1, e_ideal)
    G, h = [], []
    for i, j in enumerate(TOY):
        row = np.zeros(5)
        row[2 * i : 2 * i + 2] = p[j]
        tail = 1.0 - p[j].sum()
        G += [row, -row]
        h += [boxes[j][1], tail - boxes[j][0]]
    G += [np.array([0, 1.0, 0, -1, 0]), np.array([0, -1.0, 0, 1, 0])]
    h += [d, d]
    for i, j in enumerate(TOY):
        row = np.zeros(5)
        row[4] = lambdas[j]
        row[2 * i + 1] = -1.0
        G.append(row)
        h.append(-(1 - lambdas[j]) * y1_L / 2)
    Gb, hb = box_rows(5)
    G, h = np.vstack([G, Gb]), np.concatenate([h, hb])
    E = np.array([[1.0, 0, -1, 0, 0]]) if couple_vacuum else None
    f = np.zeros(1) if couple_vacuum else None
    v = vertex_optimum(np.array([0, 0, 0, 0, -1.0]), G, h, E, f)
    return None if v is None else -v


@pytest.mark.parametrize("couple_vacuum", [True, False])
def test_yield_lp_matches_vertex_enumeration(couple_vacuum):
    rng = np.random.default_rng(20)
    feasible = 0
    for _ in range(40):
        p, boxes = _toy_instance(rng)
        for sense in ("min", "max"):
            ref = _yield_oracle(p, boxes, couple_vacuum, sense)
            if ref is None:
                with pytest.raises(InfeasibleLPError):
                    solve_yield_lp(p, boxes, {}, sense, couple_vacuum=couple_vacuum)
            else:
                feasible += 1
                got = solve_yield_lp(p, boxes, {}, sense, couple_vacuum=couple_vacuum)
                assert got == pytest.approx(ref, abs=1e-9)
    assert feasible > 40


@pytest.mark.parametrize("couple_vacuum", [True, False])
def test_error_lp_matches_vertex_enumeration(couple_vacuum):
    rng = np.random.default_rng(21)
    feasible = 0
    for _ in range(40):
        p, boxes = _toy_instance(rng)
        d = rng.uniform(0, 0.01)
        lambdas = {j: rng.uniform(0.85, 1.0) for j in TOY}
        y1_L = rng.uniform(0, 0.1)
        td = {("X", "alpha", "beta", 1): d}
        ref = _error_oracle(p, boxes, d, lambdas, y1_L, couple_vacuum)
        if ref is None:
            with pytest.raises(InfeasibleLPError):
                solve_error_lp(p, boxes, td, lambdas, y1_L, couple_vacuum=couple_vacuum)
        else:
            feasible += 1
            got = solve_error_lp(p, boxes, td, lambdas, y1_L, couple_vacuum=couple_vacuum)
            assert got == pytest.approx(ref, abs=1e-9)
    assert feasible > 15


def test_yield_lp_contains_generating_truth():
    # zero tail, zero-width boxes: the generating yields are feasible
    p = {j: np.array(v) for j, v in zip(("alpha", "beta", "gamma"), ([0.6, 0.3, 0.1], [0.8, 0.18, 0.02], [0.95, 0.05, 0.0]))}
    y = np.array([0.001, 0.04, 0.08])
    boxes = {j: (p[j] @ y, p[j] @ y) for j in p}
    td = {("Z", j, k, 2): 0.01 for j in p for k in p}
    lo = solve_yield_lp(p, boxes, td, "min")
    hi = solve_yield_lp(p, boxes, td, "max")
    assert lo - 1e-9 <= y[1] <= hi + 1e-9


def test_error_lp_zero_errors():
    p = {j: np.array(v) for j, v in zip(("alpha", "beta", "gamma"), ([0.6, 0.4], [0.8, 0.2], [0.9, 0.1]))}
    boxes = {j: (0.0, 0.0) for j in p}
    td = {("X", j, k, 1): 0.01 for j in p for k in p}
    assert solve_error_lp(p, boxes, td, {j: 0.93 for j in p}, 0.0) == 0.0


# ---------------------------------------------------------------------------
# properties on the physical model


@pytest.fixture(scope="module")
def channel():
    return ChannelModel(loss_db=6.0, e_mis=0.0013)


@pytest.fixture(scope="module")
def expected(cfg, channel):
    return expected_observables(cfg, channel, 1e9)


def test_widening_boxes_is_monotone(expected, stats, td):
    lows, highs = [], []
    for eps in (1.0, 1e-3, 1e-6, 1e-10, 1e-20):
        sec = security_accounting(eps)
        lows.append(yield_lp(expected, stats, td, sec, "min", 0.25))
        highs.append(yield_lp(expected, stats, td, sec, "max", 0.25))
    assert all(a >= b - 1e-12 for a, b in zip(lows, lows[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(highs, highs[1:]))
    assert all(lo <= hi for lo, hi in zip(lows, highs))


def test_error_lp_monotone_in_errors(expected, stats, td):
    sec = security_accounting(1e-10)
    y1_L = yield_lp(expected, stats, td, sec, "min", 0.25)
    values = []
    for scale in (1.0, 1.1, 1.3, 1.6):
        obs = replace(expected, m_X={j: v * scale for j, v in expected.m_X.items()})
        values.append(error_lp(obs, stats, td, y1_L, sec, 0.25, guesses=expected))
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_soundness_on_synthetic_truth(cfg, channel, expected, stats, td):
    eps = 1e-2
    sec = security_accounting(eps)
    y1_true = 1.0 - (1.0 - channel.p_dark) ** 2 * (1.0 - channel.eta)
    hits = 0
    for seed in range(200):
        obs = sample_observables(cfg, channel, 10**9, seed)
        lo = yield_lp(obs, stats, td, sec, "min", channel.q_x, guesses=expected)
        hi = yield_lp(obs, stats, td, sec, "max", channel.q_x, guesses=expected)
        hits += lo <= y1_true <= hi
    assert hits / 200 >= 1 - sec.eps_PE


def test_m_z1_bounds(stats):
    sec = security_accounting(1e-20)
    assert m_z1_bounds(0.0, 0.03, stats, 1e10, 0.25, sec)[0] == 0.0
    one = security_accounting(1.0)
    lo, hi = m_z1_bounds(0.028, 0.033, stats, 1e10, 0.25, one)
    assert lo == pytest.approx(1e10 * 0.75 * stats.single_Z_alpha * 0.028, rel=1e-14)
    assert hi == pytest.approx(1e10 * 0.75 * stats.single_Z_alpha * 0.033, rel=1e-14)


def test_phase_error_limits(stats):
    one = security_accounting(1.0)
    e, _, m = phase_error_upper(1e7, 1.2e7, 0.03, 0.0, stats, 1e10, 0.25, one)
    assert m == 0.0 and e == 0.0
    sec = security_accounting(1e-20)
    for e_ideal in (0.0, 0.01, 0.3, 1.0):
        e, _, _ = phase_error_upper(1e3, 1e5, 1e-4, e_ideal, stats, 1e6, 0.25, sec)
        assert 0.0 <= e <= 0.5
    # no certified single-photon test counts
    assert phase_error_upper(1e7, 1.2e7, 0.0, 0.0, stats, 1e10, 0.25, sec)[0] == 0.5


def test_security_accounting():
    sec = security_accounting(1e-20)
    assert sec.eps_cor == 1e-20
    assert sec.eps_PE == 17 * 1e-20
    assert sec.eps_sec == pytest.approx(4e-10, rel=0.05)


def test_binary_entropy():
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-3)


@pytest.mark.parametrize(
    "M_Z1_L, e_ph, M, N, K",
    [(1.0e7, 0.062, 1.4e7, 1e10, 3.3e-4), (3.2e6, 0.071, 4.0e6, 1e10, 9.9e-5), (7.7e5, 0.076, 1.0e6, 1e9, 2.1e-4)],
)
def test_key_length_reproduces_table(M_Z1_L, e_ph, M, N, K):
    _, skr = key_length(M_Z1_L, e_ph, _obs(N, M, 0.034), security_accounting(1e-20))
    assert skr == pytest.approx(K, rel=0.10)


def test_key_length_clamps():
    obs = _obs(1e10, 1.4e7, 0.034)
    assert key_length(1e7, 0.5, obs, security_accounting(1e-20)) == (0, 0.0)
    assert key_length(10.0, 0.0, obs, security_accounting(1e-20))[0] == 0
    # a pre-agreed threshold replaces the observed error rate in the leakage
    free = key_length(1e7, 0.062, obs, security_accounting(1e-20))[0]
    strict = key_length(1e7, 0.062, obs, security_accounting(1e-20), ec_threshold=0.04)[0]
    assert strict < free


# ---------------------------------------------------------------------------
# end to end


@pytest.fixture(scope="module")
def operating_point(cfg):
    from fpqkd.simulator import calibrate_misalignment

    ch = ChannelModel(loss_db=6.0)
    ch = replace(ch, e_mis=calibrate_misalignment(cfg, ch, 0.034))
    return ch, expected_observables(cfg, ch, 1e10)


def test_single_photon_counts_at_operating_point(cfg, stats, td, operating_point):
    ch, obs = operating_point
    rep = estimate_key_rate(obs, cfg, ch.q_x, 1e-20, stats=stats, td=td)
    assert rep.M_Z1_L == pytest.approx(1.0e7, rel=0.15)


def test_phase_error_at_operating_point(cfg, stats, td, operating_point):
    ch, obs = operating_point
    rep = estimate_key_rate(obs, cfg, ch.q_x, 1e-20, stats=stats, td=td)
    assert abs(rep.e_ph_U - 0.062) <= 0.015


def test_report_invariants_and_determinism(cfg, stats, td, operating_point):
    ch, obs = operating_point
    a = estimate_key_rate(obs, cfg, ch.q_x, 1e-20, stats=stats, td=td)
    b = estimate_key_rate(obs, cfg, ch.q_x, 1e-20, stats=stats, td=td)
    assert a.as_dict() == b.as_dict()
    assert 0 <= a.y1_L <= a.y1_U <= 1
    assert a.M_Z1_L <= a.M_Z1_U
    assert 0 <= a.e_ph_U <= 0.5
    assert a.key_len > 0 and a.status == "ok"
    loose = estimate_key_rate(obs, cfg, ch.q_x, 1.0, stats=stats, td=td)
    assert loose.skr >= a.skr


def test_infeasible_observables_give_zero_key(cfg, stats, td, operating_point):
    ch, obs = operating_point
    bad = replace(obs, M_Z={"alpha": obs.M_Z["alpha"], "beta": obs.M_Z["alpha"], "gamma": obs.M_Z["alpha"]})
    rep = estimate_key_rate(bad, cfg, ch.q_x, 1.0, stats=stats, td=td)
    assert rep.key_len == 0 and rep.status.startswith("infeasible")


def test_observables_json_roundtrip(tmp_path, operating_point):
    _, obs = operating_point
    path = tmp_path / "obs.json"
    obs.dump(path)
    back = Observables.load(path)
    assert back.as_dict() == obs.as_dict()
    assert set(back.as_dict()) == {
        "N", "M_Z_alpha", "M_Z_beta", "M_Z_gamma", "M_X_alpha", "M_X_beta", "M_X_gamma",
        "m_X_alpha", "m_X_beta", "m_X_gamma", "e_Z",
    }
    assert not math.isnan(back.sifted_len)
