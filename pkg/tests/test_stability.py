import math

import numpy as np
import numpy.testing as npt
import pytest

import ergdelay as ed
from ergdelay.model import steady_state
from ergdelay.sim import HistorySegment
from ergdelay.stability import (
    certificate_from_dict,
    eval_functional,
    find_slack,
    functional_trajectory,
    gamma_threshold,
    lmi_feasible,
    lmi_margin,
    lmi_matrix,
    optimize_p_volume,
    positivity_violation,
    synthesize,
)

A_FLOW = -0.82
B_FLOW = 0.7279


def _two_state():
    sys = ed.DelaySystem(
        A=[[-2.0, 0.3], [0.1, -1.5]],
        B=[[1.0], [0.5]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        tau=0.5,
    )
    gain = ed.PrimaryGain(K=[[-0.3, -0.2]])
    return sys, gain


# ---------------------------------------------------------------------------
# Test-matrix assembly


def test_pointwise_matrix_entries(flow_sys, flow_gain, flow_certs):
    M = lmi_matrix(flow_certs["razumikhin"], flow_sys, flow_gain)
    expected = [[2 * A_FLOW + 0.82, -B_FLOW], [-B_FLOW, -0.82]]
    npt.assert_allclose(M, expected, rtol=0, atol=1e-15)


def test_pointwise_margin_closed_form(flow_sys, flow_gain, flow_certs):
    # symmetric 2x2 [[2a+q, bk], [bk, -q]] has max eigenvalue
    # a + sqrt((a+q)^2 + (bk)^2); with q = -a this collapses to a + |bk|
    margin = lmi_margin(flow_certs["razumikhin"], flow_sys, flow_gain)
    assert math.isclose(margin, -A_FLOW - B_FLOW, rel_tol=1e-12)


def test_integral_margin_closed_form(flow_sys, flow_gain, flow_certs):
    margin = lmi_margin(flow_certs["krasovskii_q"], flow_sys, flow_gain)
    expected = -(A_FLOW + math.sqrt((A_FLOW + 0.86) ** 2 + B_FLOW**2))
    assert math.isclose(margin, expected, rel_tol=1e-12)


def test_derivative_matrix_against_hand_built(flow_sys, flow_gain, flow_certs):
    # scalar case written out entry by entry from the documented form
    a, bk, tau = A_FLOW, -B_FLOW, 0.8
    acl, p, r, psi = a + bk, 1.0, 0.95, 0.5
    hand = np.array(
        [
            [2 * acl * psi, p - psi + acl * psi, -tau * psi * bk],
            [p - psi + acl * psi, -2 * psi + tau * r, -tau * psi * bk],
            [-tau * psi * bk, -tau * psi * bk, -tau * r],
        ]
    )
    M = lmi_matrix(flow_certs["krasovskii_r"], flow_sys, flow_gain)
    npt.assert_allclose(M, hand, rtol=0, atol=1e-15)
    margin = lmi_margin(flow_certs["krasovskii_r"], flow_sys, flow_gain)
    assert math.isclose(margin, -np.linalg.eigvalsh(hand)[-1], rel_tol=1e-12)
    assert margin == pytest.approx(0.0961, abs=5e-4)


def test_feasibility_margin_argument(flow_sys, flow_gain, flow_certs):
    cert = flow_certs["razumikhin"]
    true_margin = -A_FLOW - B_FLOW
    assert lmi_feasible(cert, flow_sys, flow_gain)
    assert lmi_feasible(cert, flow_sys, flow_gain, margin=true_margin - 1e-6)
    assert not lmi_feasible(cert, flow_sys, flow_gain, margin=true_margin + 1e-6)


def test_feasibility_rejects_indefinite_certificates(flow_sys, flow_gain):
    bad = ed.RazumikhinCertificate(P=[[-1.0]], q=0.5)
    assert positivity_violation(bad) is not None
    with pytest.warns(RuntimeWarning, match="positive definite"):
        assert not lmi_feasible(bad, flow_sys, flow_gain)
    zero_q = ed.RazumikhinCertificate(P=[[1.0]], q=0.0)
    assert positivity_violation(zero_q) is not None


def test_certificates_reject_asymmetric_matrices():
    with pytest.raises(ValueError):
        ed.KrasovskiiQCertificate(P=[[1.0, 0.3], [0.0, 1.0]], Q=np.eye(2))


def test_certificate_dict_round_trip(flow_certs):
    for cert in flow_certs.values():
        clone = certificate_from_dict(cert.to_dict())
        assert clone.variant == cert.variant
        npt.assert_allclose(clone.P, cert.P, atol=0)


# ---------------------------------------------------------------------------
# Functionals


def _const_segment(e, dt, span, dim=1):
    steps = int(round(span / dt))
    times = dt * np.arange(-steps, 1)
    values = np.tile(np.atleast_1d(float(e)), (steps + 1, 1))[:, :dim]
    return HistorySegment(times=times, values=values)


def test_pointwise_functional_constant_history(flow_sys, flow_gain, flow_certs):
    seg = _const_segment(2.0, 0.001, 1.6)
    v = eval_functional(flow_certs["razumikhin"], flow_sys, flow_gain, seg)
    assert math.isclose(v, 4.0, rel_tol=1e-12)


def test_integral_functional_constant_history(flow_sys, flow_gain, flow_certs):
    # e' P e + Q * tau * e^2 for constant error (trapezoid is exact here)
    seg = _const_segment(1.0, 0.001, 1.6)
    v = eval_functional(flow_certs["krasovskii_q"], flow_sys, flow_gain, seg)
    assert math.isclose(v, 1.0 + 0.86 * 0.8, rel_tol=1e-12)


def test_derivative_functional_constant_history(flow_sys, flow_gain, flow_certs):
    # constant error keeps edot = (a + bk) e; the ramp weight integrates
    # to tau^2 / 2, and the trapezoid rule is exact for linear integrands
    seg = _const_segment(1.0, 0.001, 1.6)
    v = eval_functional(flow_certs["krasovskii_r"], flow_sys, flow_gain, seg)
    expected = 1.0 + 0.95 * (0.8**2 / 2.0) * (A_FLOW - B_FLOW) ** 2
    assert math.isclose(v, expected, rel_tol=1e-12)


def test_pointwise_functional_takes_window_max(flow_sys, flow_gain, flow_certs):
    dt = 0.001
    steps = int(round(1.6 / dt))
    times = dt * np.arange(-steps, 1)
    values = (1.0 - 3.0 * times)[:, None]  # decreasing toward the newest sample
    seg = HistorySegment(times=times, values=values)
    v = eval_functional(flow_certs["razumikhin"], flow_sys, flow_gain, seg)
    # window is the last 0.8 s only: max |e| there is at theta = -0.8
    assert math.isclose(v, (1.0 + 3.0 * 0.8) ** 2, rel_tol=1e-12)


def test_functional_requires_enough_history(flow_sys, flow_gain, flow_certs):
    short = _const_segment(1.0, 0.001, 0.4)
    with pytest.raises(ed.InsufficientSpanError):
        eval_functional(flow_certs["razumikhin"], flow_sys, flow_gain, short)
    seg_one_tau = _const_segment(1.0, 0.001, 1.0)
    with pytest.raises(ed.InsufficientSpanError):
        eval_functional(flow_certs["krasovskii_r"], flow_sys, flow_gain, seg_one_tau)


def test_trajectory_evaluator_matches_pointwise_eval(flow_sys, flow_gain, flow_certs):
    rng = np.random.default_rng(11)
    dt = 0.004
    times = dt * np.arange(0, 1001)  # 4 s
    # smooth random path: DC plus a few sinusoids
    e = rng.normal(0.0, 1.0)
    path = np.full_like(times, e)
    for _ in range(3):
        amp, freq, ph = rng.normal(0, 1), rng.uniform(0.2, 2.0), rng.uniform(0, 6)
        path = path + amp * np.sin(2 * np.pi * freq * times + ph)
    errors = path[:, None]
    for cert in flow_certs.values():
        t_valid, V = functional_trajectory(cert, flow_sys, flow_gain, times, errors)
        for idx in (0, len(t_valid) // 2, len(t_valid) - 1):
            t_end = t_valid[idx]
            i_end = int(round(t_end / dt))
            seg = HistorySegment(times=times[: i_end + 1], values=errors[: i_end + 1])
            direct = eval_functional(cert, flow_sys, flow_gain, seg)
            assert math.isclose(V[idx], direct, rel_tol=1e-9, abs_tol=1e-9)


# ---------------------------------------------------------------------------
# Level thresholds


def test_threshold_flow_value(flow_sys, flow_gain, flow_cs, flow_certs):
    eq = steady_state(flow_sys, [26.0])
    gamma = gamma_threshold(flow_cs, flow_certs["razumikhin"], flow_gain, eq)
    assert math.isclose(gamma, 0.36, rel_tol=1e-12)  # (26.6 - 26)^2 / 1


def test_threshold_scales_with_p(flow_sys, flow_gain, flow_cs):
    eq = steady_state(flow_sys, [26.0])
    big = ed.RazumikhinCertificate(P=[[2.0]], q=0.82)
    gamma = gamma_threshold(flow_cs, big, flow_gain, eq)
    assert math.isclose(gamma, 0.72, rel_tol=1e-12)


def test_threshold_rejects_boundary_reference(flow_sys, flow_gain, flow_cs, flow_certs):
    eq = steady_state(flow_sys, [26.6])
    with pytest.raises(ed.ReferenceNotStrictlyAdmissibleError):
        gamma_threshold(flow_cs, flow_certs["razumikhin"], flow_gain, eq)


def test_threshold_excludes_invisible_rows(flow_sys, flow_gain, flow_certs):
    # second row has h_x + K' h_u = 1 - 1 = 0: no restriction on the error
    cs = ed.ConstraintSet(
        rows=(
            ed.ConstraintRow(h_x=[-1.0], h_u=[0.0], g=26.6),
            ed.ConstraintRow(h_x=[1.0], h_u=[1.0], g=0.0),
        )
    )
    eq = steady_state(flow_sys, [26.0])
    with pytest.warns(RuntimeWarning, match="invisible"):
        gamma = gamma_threshold(cs, flow_certs["razumikhin"], flow_gain, eq)
    assert math.isclose(gamma, 0.36, rel_tol=1e-12)
    only_invisible = ed.ConstraintSet(
        rows=(ed.ConstraintRow(h_x=[1.0], h_u=[1.0], g=0.0),)
    )
    with pytest.raises(ed.DegenerateConstraintError):
        gamma_threshold(only_invisible, flow_certs["razumikhin"], flow_gain, eq)


# ---------------------------------------------------------------------------
# Certificate search


def test_search_matches_scalar_closed_form(flow_sys):
    # scalar pointwise test: feasible iff |b k| < |a|, best margin -a - |bk|
    for k in (-0.5, -1.0):
        gain = ed.PrimaryGain(K=[[k]])
        cert = synthesize("razumikhin", flow_sys, gain, seed=0, restarts=20,
                          max_iter=300)
        found = lmi_margin(cert, flow_sys, gain)
        best = -A_FLOW - abs(B_FLOW * k)
        assert found <= best + 1e-9
        assert found >= 0.99 * best


def test_search_reports_infeasible_budget(flow_sys):
    gain = ed.PrimaryGain(K=[[-1.5]])  # |bk| = 1.09 > 0.82: no certificate exists
    with pytest.raises(ed.InfeasibleError, match="does not prove"):
        synthesize("razumikhin", flow_sys, gain, seed=0, restarts=15, max_iter=200)


def test_search_is_deterministic(flow_sys, flow_gain):
    a = synthesize("krasovskii_q", flow_sys, flow_gain, seed=3, restarts=10)
    b = synthesize("krasovskii_q", flow_sys, flow_gain, seed=3, restarts=10)
    assert np.array_equal(a.P, b.P)
    assert np.array_equal(a.Q, b.Q)


def test_search_two_state_system():
    sys, gain = _two_state()
    for variant in ("razumikhin", "krasovskii_q"):
        cert = synthesize(variant, sys, gain, seed=1, restarts=40, max_iter=400)
        assert positivity_violation(cert) is None
        assert lmi_feasible(cert, sys, gain, margin=1e-6)


def test_slack_search_flow(flow_sys, flow_gain):
    Psi2, Psi3 = find_slack(flow_sys, flow_gain, P=[[1.0]], R=[[0.95]], seed=0)
    cert = ed.KrasovskiiRCertificate(P=[[1.0]], R=[[0.95]], Psi2=Psi2, Psi3=Psi3)
    assert lmi_feasible(cert, flow_sys, flow_gain, margin=1e-6)


def test_volume_search_scalar_optimum(flow_sys, flow_gain, flow_cs):
    # smallest logdet P subject to P >= h h' (h = -1) is exactly P = 1
    cert = optimize_p_volume(flow_cs, flow_sys, flow_gain, "razumikhin",
                             seed=0, restarts=20, max_iter=300)
    assert cert.P[0, 0] == pytest.approx(1.0, abs=5e-3)
    assert lmi_feasible(cert, flow_sys, flow_gain)
    h = flow_cs.closed_loop_rows(flow_gain)[0]
    assert h @ np.linalg.solve(cert.P, h) <= 1.0 + 1e-6


def test_volume_search_two_state_properties():
    sys, gain = _two_state()
    cs = ed.ConstraintSet(
        rows=(
            ed.ConstraintRow(h_x=[1.0, 0.0], h_u=[0.0], g=1.0),
            ed.ConstraintRow(h_x=[0.0, 1.0], h_u=[0.2], g=1.5),
        )
    )
    cert = optimize_p_volume(cs, sys, gain, "razumikhin", seed=2,
                             restarts=12, max_iter=300)
    assert lmi_feasible(cert, sys, gain)
    for h in cs.closed_loop_rows(gain):
        assert h @ np.linalg.solve(cert.P, h) <= 1.0 + 1e-6
