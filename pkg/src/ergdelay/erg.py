"""Explicit reference governor for the delayed closed loop.

The governor steers an auxiliary reference v toward the desired reference r
with the dynamics

    v' = delta(x_history, v) * rho(v, r)

where ``delta`` is a nonnegative safety margin computed from a delay-aware
prediction (how much maneuvering room the loop provably has) and ``rho`` is
a bounded navigation field pointing from v toward r, bent away from the
constraint boundary inside a repulsion band.  Updates happen on a fixed
period with explicit Euler, followed by a projection that keeps the new
reference strictly admissible.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InitialMarginViolatedError
from .model import reference_feedthrough, residuals, residuals_path, steady_state
from .sim import _advance_state, predict
from .stability import eval_functional, gamma_threshold
from .trace import Trace

VARIANT_TAGS = ("terminal", "infinite_horizon")


@dataclass(frozen=True)
class ErgConfig:
    """Governor tuning.

    Attributes
    ----------
    T : float
        Prediction horizon in seconds.
    kappa1, kappa2 : float
        Gains on the horizon margin and the terminal margin.
    eta : float
        Saturation radius of the attraction term (the field has unit norm
        beyond ``eta`` distance from the target, shrinks linearly inside).
    zeta, delta : float
        Repulsion band width and strict-admissibility margin on the
        steady-state residuals, ``zeta > delta > 0``.
    variant : str
        ``"terminal"`` (both margins, needs a certificate) or
        ``"infinite_horizon"`` (horizon margin only).
    update_period : float
        Governor update period, a multiple of the simulation step.
    certificate : certificate or None
        Required for the terminal variant.
    """

    T: float
    kappa1: float
    kappa2: float
    eta: float
    zeta: float
    delta: float
    variant: str = "terminal"
    update_period: float = 0.01
    certificate: object = None

    def __post_init__(self):
        if self.variant not in VARIANT_TAGS:
            raise ValueError(
                f"variant must be one of {VARIANT_TAGS}, got {self.variant!r}"
            )
        for name in ("T", "kappa1", "kappa2", "eta", "update_period"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if not (self.zeta > self.delta > 0.0):
            raise ValueError("need zeta > delta > 0")
        if self.variant == "terminal" and self.certificate is None:
            raise ValueError("terminal variant needs a certificate")

    def validate_grid(self, sys, dt):
        """Check grid-dependent requirements; warns when T < tau."""
        ratio = self.update_period / dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"update_period {self.update_period:g} must be a positive "
                f"multiple of dt {dt:g}"
            )
        steps = self.T / dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError(
                f"T {self.T:g} must be a positive multiple of dt {dt:g}"
            )
        if self.variant == "terminal" and self.T < sys.tau:
            warnings.warn(
                f"prediction horizon T={self.T:g} is shorter than the delay "
                f"tau={sys.tau:g}; the terminal margin then leans on recorded "
                "history rather than a fully predicted window",
                RuntimeWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class DsmBreakdown:
    """Margin components of one governor evaluation.

    ``delta`` is the applied margin: ``min(kappa1 * delta_T,
    kappa2 * delta_inf)`` for the terminal variant, ``kappa1 * delta_T``
    otherwise.  ``delta_inf``, ``gamma`` and ``v_functional_at_T`` are None
    for the infinite-horizon variant.
    """

    delta_T: float
    delta_inf: float | None
    delta: float
    gamma: float | None
    v_functional_at_T: float | None


def dsm(cfg, sys, gain, cs, state):
    """Dynamic safety margin at the current state under the frozen reference.

    Predicts ``cfg.T`` ahead with the reference held, takes the worst
    constraint residual along the prediction (horizon margin), and for the
    terminal variant additionally compares the certificate functional of the
    predicted terminal window against the reference's level threshold
    (terminal margin).
    """
    pred = predict(sys, gain, state, cfg.T)
    res = residuals_path(cs, pred.forward_x(), pred.u)
    delta_T = float(res.min())
    if cfg.variant == "infinite_horizon":
        return DsmBreakdown(
            delta_T=delta_T,
            delta_inf=None,
            delta=cfg.kappa1 * delta_T,
            gamma=None,
            v_functional_at_T=None,
        )
    eq = steady_state(sys, pred.v)
    gamma = gamma_threshold(cs, cfg.certificate, gain, eq)
    seg = pred.error_segment(cfg.certificate.window(sys.tau))
    v_fun = eval_functional(cfg.certificate, sys, gain, seg)
    delta_inf = gamma - v_fun
    return DsmBreakdown(
        delta_T=delta_T,
        delta_inf=delta_inf,
        delta=min(cfg.kappa1 * delta_T, cfg.kappa2 * delta_inf),
        gamma=gamma,
        v_functional_at_T=v_fun,
    )


def attraction_field(cfg, cs, gain, sys, v, r):
    """Bounded navigation field at reference ``v`` targeting ``r``.

    The attraction term is ``(r - v) / max(||r - v||, eta)``.  Each
    constraint row whose steady-state residual at v falls below ``zeta``
    adds a repulsion term along the row's closed-loop normal, ramping
    linearly from zero at ``zeta`` to full strength at ``delta``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    diff = r - v
    rho = diff / max(float(np.linalg.norm(diff)), cfg.eta)
    eq = steady_state(sys, v)
    res = residuals(cs, eq.x_bar, eq.u_bar)
    weights = np.maximum((cfg.zeta - res) / (cfg.zeta - cfg.delta), 0.0)
    if np.any(weights > 0.0):
        Hcl = cs.closed_loop_rows(gain)
        if Hcl.shape[1] != v.shape[0]:
            raise ValueError(
                "repulsion terms need the state and reference dimensions to "
                f"match, got n={Hcl.shape[1]} and p={v.shape[0]}"
            )
        for i in np.flatnonzero(weights):
            norm = float(np.linalg.norm(Hcl[i]))
            if norm == 0.0:
                continue  # row invisible to the loop; the projection holds it
            rho = rho + weights[i] * Hcl[i] / norm
    return rho


def _min_residual(sys, cs, v):
    eq = steady_state(sys, v)
    return float(residuals(cs, eq.x_bar, eq.u_bar).min())


def _project_admissible(sys, cs, v_old, v_new, delta):
    """Largest step along (v_new - v_old) keeping residuals >= delta.

    Bisection on the step fraction, 40 iterations; assumes v_old itself
    satisfies the margin.
    """
    if _min_residual(sys, cs, v_new) >= delta:
        return v_new
    lo, hi = 0.0, 1.0
    dv = v_new - v_old
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _min_residual(sys, cs, v_old + mid * dv) >= delta:
            lo = mid
        else:
            hi = mid
    return v_old + lo * dv


def governor_step(cfg, sys, gain, cs, state, v, r):
    """One governor update: explicit Euler on v, then the admissibility projection."""
    v_new, _ = _governor_step(cfg, sys, gain, cs, state, v, r)
    return v_new


def _governor_step(cfg, sys, gain, cs, state, v, r):
    breakdown = dsm(cfg, sys, gain, cs, state)
    rho = attraction_field(cfg, cs, gain, sys, v, r)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    v_new = v + cfg.update_period * max(breakdown.delta, 0.0) * rho
    v_new = _project_admissible(sys, cs, v, v_new, cfg.delta)
    return v_new, breakdown


def _reference_at(schedule, t):
    value = schedule[0][1]
    for t_k, r_k in schedule:
        if t_k <= t + 1e-12:
            value = r_k
        else:
            break
    return value


def run_scenario(scenario):
    """Simulate a scenario end to end and return its trace.

    Ungoverned scenarios feed the reference schedule straight into the loop.
    Governed scenarios hold v piecewise constant, updating it every
    ``update_period`` from the margin and field; the run records one row per
    grid step with the diagnostics of the most recent governor evaluation.

    Raises
    ------
    InitialMarginViolatedError
        If a governed run starts with a negative margin.
    """
    sys = scenario.system
    gain = scenario.gain
    cs = scenario.constraints
    run = scenario.run
    dt = run.dt
    total_steps = int(round(run.duration / dt))
    schedule = [(float(t), np.atleast_1d(np.asarray(r, dtype=float)))
                for t, r in run.reference]

    state = scenario.initial_state(extra_capacity=total_steps + 1)
    n_hist = state.x_hist.filled  # rows before t=0, inclusive of t=0

    nan = float("nan")
    delta_T = np.full(total_steps + 1, nan)
    delta_inf = np.full(total_steps + 1, nan)
    delta_app = np.full(total_steps + 1, nan)
    v_fun = np.full(total_steps + 1, nan)

    if scenario.erg is None:
        # Reference follows the schedule directly (zero-order hold on the grid).
        done = 0
        while done < total_steps:
            t_now = done * dt
            r_now = _reference_at(schedule, t_now)
            # advance until the next schedule breakpoint (or the end)
            next_steps = total_steps - done
            for t_k, _ in schedule:
                k_steps = int(round((t_k - t_now) / dt))
                if 0 < k_steps < next_steps:
                    next_steps = k_steps
            _advance_state(sys, gain, state, r_now, next_steps)
            done += next_steps
    else:
        cfg = scenario.erg
        cfg.validate_grid(sys, dt)
        spu = int(round(cfg.update_period / dt))
        v = np.array(state.v, dtype=float)
        done = 0
        first = True
        while done < total_steps:
            r_now = _reference_at(schedule, done * dt)
            v_next, breakdown = _governor_step(cfg, sys, gain, cs, state, v, r_now)
            if first and breakdown.delta < 0.0:
                raise InitialMarginViolatedError(
                    f"initial margin is negative ({breakdown.delta:.6g}); "
                    "the starting state is not provably safe for v0"
                )
            first = False
            lo = done
            hi = min(done + spu, total_steps)
            delta_T[lo:hi] = breakdown.delta_T
            delta_app[lo:hi] = breakdown.delta
            if breakdown.delta_inf is not None:
                delta_inf[lo:hi] = breakdown.delta_inf
                v_fun[lo:hi] = breakdown.v_functional_at_T
            _advance_state(sys, gain, state, v_next, hi - lo)
            v = v_next
            done = hi
        # hold the last diagnostics on the final row
        delta_T[total_steps] = delta_T[total_steps - 1]
        delta_app[total_steps] = delta_app[total_steps - 1]
        delta_inf[total_steps] = delta_inf[total_steps - 1]
        v_fun[total_steps] = v_fun[total_steps - 1]

    t = dt * np.arange(total_steps + 1)
    X = state.x_hist.values()[n_hist - 1 :].copy()
    V = state.v_hist.values()[n_hist - 1 :].copy()
    N = reference_feedthrough(sys, gain)
    U = X @ gain.K.T + V @ N.T
    R = np.vstack([_reference_at(schedule, tk) for tk in t])
    res = residuals_path(cs, X, U)
    return Trace(
        t=t,
        x=X,
        u=U,
        v=V,
        r=R,
        delta_T=delta_T,
        delta_inf=delta_inf,
        delta=delta_app,
        v_functional=v_fun,
        residuals=res,
    )
