"""Acceptance gate: one test per headline claim, with explicit tolerances.

Each criterion below is implemented as its own test function so the verbose
pytest report carries one pass/fail line per criterion; every test also
prints an ``[acceptance] criterion N`` line (visible with ``-s`` and on
failure).

 1. Scalar gain scan: the pointwise certificate family is findable up to
    the boundary |k| = 1.13 +/- 0.01 (both signs), in under 10 s.
 2. Reference certificates check out: the integral certificate (P=1,
    Q=0.86) at k=-1, the derivative certificate (P=1, R=0.95) at k=-1 and
    (P=1, R=0.64) at k=-1.68 are all feasible (slacks found by search);
    the pointwise search at k=-1.68 exhausts its budget; all in under 60 s.
 3. Ungoverned presets overshoot: max x exceeds the 26.6 bound.
 4. Governed presets are safe and track: min residual >= -1e-6 and
    |x(60) - 26| <= 0.5 for all six governed presets.
 5. Settling-time orderings between the preset variants hold (2% band).
 6. Terminal-set invariance: 200 seeded random states whose predicted
    terminal functional is below the reference threshold keep every
    post-horizon residual >= -1e-6 over a 20-tau frozen continuation.
 7. Prediction consistency: predictions equal held-reference simulation
    to 1e-12 over 100 seeded random delayed systems (n <= 3).
 8. Certified decrease: all three functionals are non-increasing along
    frozen-reference trajectories within 1e-6 * V(0) per step.
 9. Threshold identity: sqrt(Gamma * h' P^-1 h) equals the binding
    steady-state residual to 1e-9 over randomized problems (n <= 4).
10. Integrator accuracy: on a delay-free scalar benchmark the end-point
    error against the exact exponential shrinks at least 12x when the
    step halves.
"""

import math
import re
import time

import numpy as np

import ergdelay as ed
from ergdelay.cli import main
from ergdelay.erg import ErgConfig
from ergdelay.model import Equilibrium, residuals, residuals_path, steady_state
from ergdelay.sim import HistorySegment, SimState, predict, step_closed_loop
from ergdelay.stability import (
    eval_functional,
    find_slack,
    functional_trajectory,
    gamma_threshold,
    lmi_feasible,
    synthesize,
)

VARIANTS = ("razumikhin", "krasovskii_q", "krasovskii_r")


def _report(num, name, ok, detail=""):
    line = f"[acceptance] criterion {num} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


def _smooth_rows(rng, times, dim, scale):
    rows = np.tile(rng.normal(0.0, scale, dim), (len(times), 1))
    for j in range(dim):
        for _ in range(3):
            amp = rng.normal(0.0, scale)
            freq = rng.uniform(0.2, 1.5)
            rows[:, j] += amp * np.sin(2 * np.pi * freq * times + rng.uniform(0, 6))
    return rows


def test_criterion_01_gain_feasibility_boundary(capsys):
    t0 = time.monotonic()
    rc = main(["lmi", "norg", "--variant", "razumikhin", "--quiet"])
    elapsed = time.monotonic() - t0
    out = capsys.readouterr().out
    with capsys.disabled():
        bounds = [float(tok) for tok in
                  re.findall(r"boundary: k = ([+-]\d+\.\d+)", out)]
        ok = (
            rc == 0
            and len(bounds) == 2
            and all(abs(abs(b) - 1.13) <= 0.01 for b in bounds)
            and elapsed < 10.0
        )
        _report(1, "gain boundary |k| = 1.13 +/- 0.01, < 10 s", ok,
                f"boundaries={bounds}, wall={elapsed:.2f}s")


def test_criterion_02_reference_certificates(flow_sys):
    t0 = time.monotonic()
    k1 = ed.PrimaryGain(K=[[-1.0]])
    k2 = ed.PrimaryGain(K=[[-1.68]])
    checks = {}

    kq = ed.KrasovskiiQCertificate(P=[[1.0]], Q=[[0.86]])
    checks["integral@k=-1"] = lmi_feasible(kq, flow_sys, k1, margin=1e-6)

    p2, p3 = find_slack(flow_sys, k1, P=[[1.0]], R=[[0.95]], seed=0)
    kr1 = ed.KrasovskiiRCertificate(P=[[1.0]], R=[[0.95]], Psi2=p2, Psi3=p3)
    checks["derivative@k=-1"] = lmi_feasible(kr1, flow_sys, k1, margin=1e-6)

    p2, p3 = find_slack(flow_sys, k2, P=[[1.0]], R=[[0.64]], seed=0)
    kr2 = ed.KrasovskiiRCertificate(P=[[1.0]], R=[[0.64]], Psi2=p2, Psi3=p3)
    checks["derivative@k=-1.68"] = lmi_feasible(kr2, flow_sys, k2, margin=1e-6)

    try:
        synthesize("razumikhin", flow_sys, k2, seed=0)  # full default budget
        checks["pointwise-search@k=-1.68"] = False
    except ed.InfeasibleError:
        checks["pointwise-search@k=-1.68"] = True

    elapsed = time.monotonic() - t0
    ok = all(checks.values()) and elapsed < 60.0
    _report(2, "reference certificates + search budget, < 60 s", ok,
            f"{checks}, wall={elapsed:.2f}s")


def test_criterion_03_ungoverned_overshoot(preset_traces):
    peaks = {name: preset_traces[name].x[:, 0].max()
             for name in ("norg", "aggressive-norg")}
    ok = all(peak > 26.6 for peak in peaks.values())
    _report(3, "ungoverned runs exceed the 26.6 bound", ok,
            ", ".join(f"{k}: max_x={v:.4f}" for k, v in peaks.items()))


GOVERNED = ("erg1", "erg2", "erg3", "erg4", "aggressive-erg1", "aggressive-erg4")


def test_criterion_04_governed_safety_and_tracking(preset_traces):
    details = []
    ok = True
    for name in GOVERNED:
        trace = preset_traces[name]
        min_res = float(trace.residuals.min())
        final_err = abs(float(trace.x[-1, 0]) - 26.0)
        good = min_res >= -1e-6 and final_err <= 0.5
        ok = ok and good
        details.append(f"{name}: min_res={min_res:.3g}, |x(60)-26|={final_err:.3g}")
    _report(4, "governed runs: residual >= -1e-6, |x(60)-26| <= 0.5", ok,
            "; ".join(details))


def test_criterion_05_settling_orderings(preset_traces):
    settle = {name: preset_traces[name].summary()["settling_time"]
              for name in GOVERNED}
    orderings = [
        ("erg1", "erg2"),
        ("erg3", "erg2"),
        ("erg4", "erg2"),
        ("aggressive-erg4", "aggressive-erg1"),
    ]
    ok = all(math.isfinite(v) for v in settle.values()) and all(
        settle[fast] <= settle[slow] for fast, slow in orderings
    )
    _report(5, "settling-time orderings between variants", ok,
            ", ".join(f"{k}={v:.2f}s" for k, v in settle.items()))


def test_criterion_06_terminal_set_invariance(flow_sys, flow_gain, flow_cs,
                                              flow_certs):
    rng = np.random.default_rng(2024)
    dt, T, horizon = 0.002, 0.7, 20.0 * flow_sys.tau
    n_steps = int(round(horizon / dt))
    i_T = int(round(T / dt))
    worst = math.inf
    cases = 0
    for case in range(200):
        cert = flow_certs[VARIANTS[case % 3]]
        v = float(rng.uniform(0.0, 26.5))
        eq = steady_state(flow_sys, [v])
        gamma = gamma_threshold(flow_cs, cert, flow_gain, eq)
        times = dt * np.arange(-800, 1)  # 2 tau of history
        noise = _smooth_rows(rng, times, 1, scale=5.0)

        def build(err_rows):
            return SimState.from_samples(
                flow_sys, times, eq.x_bar + err_rows,
                np.full((len(times), 1), v),
            )

        w = int(round(cert.window(flow_sys.tau) / dt))

        def terminal_functional(pred):
            j = pred.i_zero + i_T
            seg = HistorySegment(
                times=pred.theta[j - w : j + 1],
                values=pred.x[j - w : j + 1] - pred.x_bar,
            )
            return eval_functional(cert, flow_sys, flow_gain, seg)

        pred = predict(flow_sys, flow_gain, build(noise), horizon)
        v_fun = terminal_functional(pred)
        if v_fun > 0.98 * gamma:
            # the error dynamics are linear: scaling the history scales the
            # functional quadratically, landing just inside the threshold
            noise = noise * (0.99 * math.sqrt(gamma / v_fun))
            pred = predict(flow_sys, flow_gain, build(noise), horizon)
            v_fun = terminal_functional(pred)
        assert v_fun <= gamma + 1e-9, "case construction failed"
        res = residuals_path(flow_cs, pred.forward_x()[i_T:], pred.u[i_T:])
        worst = min(worst, float(res.min()))
        cases += 1
    ok = cases == 200 and worst >= -1e-6
    _report(6, "200 admissible states: post-horizon residuals >= -1e-6", ok,
            f"cases={cases}, worst post-horizon residual={worst:.3e}")


def test_criterion_07_prediction_equals_simulation():
    rng = np.random.default_rng(77)
    worst = 0.0
    for case in range(100):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, min(n, 2) + 1))  # p = m <= n keeps the
        # steady-state block generically invertible
        G = rng.normal(size=(n, n))
        shift = max(np.linalg.eigvals(G).real.max(), 0.0) + 1.0
        sys = ed.DelaySystem(
            A=G - shift * np.eye(n),
            B=rng.normal(size=(n, m)),
            C=rng.normal(size=(m, n)),
            D=np.zeros((m, m)),
            tau=float(rng.uniform(0.4, 1.2)),
        )
        gain = ed.PrimaryGain(K=rng.normal(0.0, 0.3 / n, size=(m, n)))
        J = int(rng.integers(20, 61))
        if case % 2 == 0:
            dt = sys.tau / J  # delay sits on the grid
        else:
            dt = sys.tau / (J + float(rng.uniform(0.2, 0.8)))
        span = float(rng.uniform(1.2, 2.6)) * sys.tau
        hist = int(np.ceil(span / dt))
        times = dt * np.arange(-hist, 1)
        x_rows = _smooth_rows(rng, times, n, scale=1.0)
        v_rows = _smooth_rows(rng, times, m, scale=1.0)
        steps = int(rng.integers(30, 151))

        pred = predict(
            sys, gain,
            SimState.from_samples(sys, times, x_rows, v_rows),
            T=steps * dt,
        )
        state = SimState.from_samples(sys, times, x_rows, v_rows,
                                      extra_capacity=steps)
        v_frozen = state.v.copy()
        for _ in range(steps):
            step_closed_loop(sys, gain, state, v_frozen, dt)
        tail = state.x_hist.values()[-(steps + 1) :]
        worst = max(worst, float(np.abs(pred.forward_x() - tail).max()))
    ok = worst <= 1e-12
    _report(7, "prediction == held-reference simulation to 1e-12", ok,
            f"100 systems, worst |diff|={worst:.3e}")


def test_criterion_08_functional_decrease(flow_sys, flow_gain, flow_certs):
    dt = 0.008  # tau / dt = 100: the trajectory evaluator needs a grid delay
    state = SimState.from_constant_history(flow_sys, [20.0], [10.0], dt=dt)
    pred = predict(flow_sys, flow_gain, state, T=14.0)
    errors = pred.x - pred.x_bar
    details = []
    ok = True
    for name in VARIANTS:
        cert = flow_certs[name]
        t_valid, V = functional_trajectory(cert, flow_sys, flow_gain,
                                           pred.theta, errors)
        i0 = int(np.searchsorted(t_valid, 0.0))
        v0 = float(V[i0])
        max_rise = float(np.diff(V[i0:]).max())
        good = max_rise <= 1e-6 * v0
        ok = ok and good
        details.append(f"{name}: V(0)={v0:.4g}, max step rise={max_rise:.2e}")
    _report(8, "functionals non-increasing within 1e-6 V(0) per step", ok,
            "; ".join(details))


def test_criterion_09_threshold_identity():
    rng = np.random.default_rng(4242)
    worst = 0.0
    for _ in range(40):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        nc = int(rng.integers(1, 5))
        L = np.tril(rng.normal(size=(n, n)))
        np.fill_diagonal(L, np.abs(L.diagonal()) + 0.3)
        P = L @ L.T + 0.1 * np.eye(n)
        cert = ed.RazumikhinCertificate(P=P, q=0.5)
        gain = ed.PrimaryGain(K=rng.normal(size=(m, n)))
        x_bar = rng.normal(0.0, 2.0, n)
        u_bar = rng.normal(0.0, 2.0, m)
        rows = []
        for _ in range(nc):
            h_x = rng.normal(size=n)
            h_u = rng.normal(size=m)
            slack = float(rng.uniform(0.1, 2.0))
            g = slack - float(h_x @ x_bar + h_u @ u_bar)
            rows.append(ed.ConstraintRow(h_x=h_x, h_u=h_u, g=g))
        cs = ed.ConstraintSet(rows=tuple(rows))
        eq = Equilibrium(x_bar=x_bar, u_bar=u_bar, v=np.zeros(1))
        gamma = gamma_threshold(cs, cert, gain, eq)
        res = residuals(cs, x_bar, u_bar)
        Hcl = cs.closed_loop_rows(gain)
        Pinv = np.linalg.inv(P)  # independent route to the denominators
        per_row = res**2 / np.einsum("ij,jk,ik->i", Hcl, Pinv, Hcl)
        binding = int(np.argmin(per_row))
        d = float(Hcl[binding] @ Pinv @ Hcl[binding])
        worst = max(
            worst,
            abs(math.sqrt(gamma * d) - float(res[binding])),
            abs(gamma - float(per_row.min())),
        )
    ok = worst <= 1e-9
    _report(9, "sqrt(Gamma h'P^-1h) = binding residual to 1e-9", ok,
            f"40 randomized problems, worst |diff|={worst:.3e}")


def test_criterion_10_integrator_convergence(flow_sys):
    # delay-free benchmark: K = 0 and v = 0 leave x' = a x exactly
    gain = ed.PrimaryGain(K=[[0.0]])
    T = 4.8
    exact = math.exp(-0.82 * T)
    errs = {}
    for dt in (0.08, 0.04):
        state = SimState.from_constant_history(flow_sys, [1.0], [0.0], dt=dt)
        pred = predict(flow_sys, gain, state, T=T)
        errs[dt] = abs(float(pred.forward_x()[-1, 0]) - exact)
    ratio = errs[0.08] / errs[0.04]
    ok = ratio >= 12.0
    _report(10, "end-point error shrinks >= 12x when dt halves", ok,
            f"err(0.08)={errs[0.08]:.3e}, err(0.04)={errs[0.04]:.3e}, "
            f"ratio={ratio:.2f}")
