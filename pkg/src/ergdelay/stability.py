"""Lyapunov certificates for the delayed inner loop.

The pre-stabilized error dynamics are

    e'(t) = A e(t) + B K e(t - tau)

and a certificate is a set of matrices making one of three functionals
provably decreasing along them:

* ``razumikhin``: V(t) = max over the trailing tau window of e' P e,
  certified together with a scalar q > 0.
* ``krasovskii_q``: V(t) = e' P e + integral of e' Q e over the trailing
  tau window.
* ``krasovskii_r``: V(t) = e' P e + integral of (theta - t + tau) e'' R e''
  (quadratic form on the derivative) over the trailing tau window, certified
  with free slack matrices Psi2, Psi3.

Each case reduces to a single symmetric matrix being negative definite,
checked by its largest eigenvalue.  Certificate search is derivative-free
(multi-start simplex over Cholesky factors), so a failure to find a
certificate is never a proof that none exists.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateConstraintError,
    InfeasibleError,
    InsufficientSpanError,
    ReferenceNotStrictlyAdmissibleError,
)

VARIANTS = ("razumikhin", "krasovskii_q", "krasovskii_r")


def _sym(name, value):
    M = np.asarray(value, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = 1.0 + np.abs(M).max()
    if np.abs(M - M.T).max() > 1e-9 * scale:
        raise ValueError(f"{name} must be symmetric")
    M = 0.5 * (M + M.T)
    M.setflags(write=False)
    return M


def _min_eig(M):
    return float(np.linalg.eigvalsh(M)[0])


@dataclass(frozen=True)
class RazumikhinCertificate:
    """Pointwise-max functional parameters (P, q)."""

    P: np.ndarray
    q: float
    variant = "razumikhin"

    def __post_init__(self):
        object.__setattr__(self, "P", _sym("P", self.P))
        object.__setattr__(self, "q", float(self.q))

    def window(self, tau):
        """History span (seconds) the functional needs."""
        return tau

    def to_dict(self):
        return {"variant": self.variant, "P": self.P.tolist(), "q": self.q}


@dataclass(frozen=True)
class KrasovskiiQCertificate:
    """Accumulated-state functional parameters (P, Q)."""

    P: np.ndarray
    Q: np.ndarray
    variant = "krasovskii_q"

    def __post_init__(self):
        object.__setattr__(self, "P", _sym("P", self.P))
        object.__setattr__(self, "Q", _sym("Q", self.Q))
        if self.Q.shape != self.P.shape:
            raise ValueError("P and Q must have the same shape")

    def window(self, tau):
        return tau

    def to_dict(self):
        return {"variant": self.variant, "P": self.P.tolist(), "Q": self.Q.tolist()}


@dataclass(frozen=True)
class KrasovskiiRCertificate:
    """Accumulated-derivative functional parameters (P, R, Psi2, Psi3).

    Evaluating the functional needs twice the delay of stored history, since
    the error derivative under the loop dynamics reaches a further tau back.
    """

    P: np.ndarray
    R: np.ndarray
    Psi2: np.ndarray
    Psi3: np.ndarray
    variant = "krasovskii_r"

    def __post_init__(self):
        P = _sym("P", self.P)
        R = _sym("R", self.R)
        Psi2 = np.asarray(self.Psi2, dtype=float)
        Psi3 = np.asarray(self.Psi3, dtype=float)
        if R.shape != P.shape:
            raise ValueError("P and R must have the same shape")
        for name, M in (("Psi2", Psi2), ("Psi3", Psi3)):
            if M.shape != P.shape:
                raise ValueError(f"{name} must have the same shape as P")
            M.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Psi2", Psi2)
        object.__setattr__(self, "Psi3", Psi3)

    def window(self, tau):
        return 2.0 * tau

    def to_dict(self):
        return {
            "variant": self.variant,
            "P": self.P.tolist(),
            "R": self.R.tolist(),
            "Psi2": self.Psi2.tolist(),
            "Psi3": self.Psi3.tolist(),
        }


def certificate_from_dict(data):
    """Rebuild a certificate from its ``to_dict`` form."""
    variant = data.get("variant")
    if variant == "razumikhin":
        return RazumikhinCertificate(P=np.array(data["P"]), q=data["q"])
    if variant == "krasovskii_q":
        return KrasovskiiQCertificate(P=np.array(data["P"]), Q=np.array(data["Q"]))
    if variant == "krasovskii_r":
        return KrasovskiiRCertificate(
            P=np.array(data["P"]),
            R=np.array(data["R"]),
            Psi2=np.array(data["Psi2"]),
            Psi3=np.array(data["Psi3"]),
        )
    raise ValueError(f"unknown certificate variant {variant!r}")


def positivity_violation(cert):
    """Return a diagnostic string if a positivity requirement fails, else None."""
    if _min_eig(cert.P) <= 0.0:
        return "P is not positive definite"
    if cert.variant == "razumikhin" and cert.q <= 0.0:
        return "q is not positive"
    if cert.variant == "krasovskii_q" and _min_eig(cert.Q) <= 0.0:
        return "Q is not positive definite"
    if cert.variant == "krasovskii_r" and _min_eig(cert.R) <= 0.0:
        return "R is not positive definite"
    return None


# ---------------------------------------------------------------------------
# LMI assembly and feasibility


def _raz_lmi(A, BK, P, q):
    M11 = A.T @ P + P @ A + q * P
    M12 = P @ BK
    M22 = -q * P
    M = np.block([[M11, M12], [M12.T, M22]])
    return 0.5 * (M + M.T)


def _kq_lmi(A, BK, P, Q):
    M11 = A.T @ P + P @ A + Q
    M12 = P @ BK
    M22 = -Q
    M = np.block([[M11, M12], [M12.T, M22]])
    return 0.5 * (M + M.T)


def _kr_lmi(A, BK, tau, P, R, Psi2, Psi3):
    Acl = A + BK
    M11 = Acl.T @ Psi2 + Psi2.T @ Acl
    M12 = P - Psi2.T + Acl.T @ Psi3
    M13 = -tau * (Psi2.T @ BK)
    M22 = -Psi3 - Psi3.T + tau * R
    M23 = -tau * (Psi3.T @ BK)
    M33 = -tau * R
    M = np.block(
        [[M11, M12, M13], [M12.T, M22, M23], [M13.T, M23.T, M33]]
    )
    return 0.5 * (M + M.T)


def lmi_matrix(cert, sys, gain):
    """Assemble the symmetric test matrix whose negativity certifies decrease.

    Shapes are (2n, 2n) for the razumikhin and krasovskii_q variants and
    (3n, 3n) for krasovskii_r.
    """
    A = sys.A
    BK = sys.B @ gain.K
    if cert.variant == "razumikhin":
        return _raz_lmi(A, BK, cert.P, cert.q)
    if cert.variant == "krasovskii_q":
        return _kq_lmi(A, BK, cert.P, cert.Q)
    if cert.variant == "krasovskii_r":
        return _kr_lmi(A, BK, sys.tau, cert.P, cert.R, cert.Psi2, cert.Psi3)
    raise ValueError(f"unknown certificate variant {cert.variant!r}")


def lmi_feasible(cert, sys, gain, margin=0.0):
    """True when the certificate's test matrix is negative definite.

    The check is ``max eigenvalue < -margin``.  Positivity violations of the
    certificate parameters (P, q, Q, R) make the certificate invalid
    regardless of the matrix, so they return False with a warning.
    """
    tag = positivity_violation(cert)
    if tag is not None:
        warnings.warn(f"certificate rejected: {tag}", RuntimeWarning, stacklevel=2)
        return False
    M = lmi_matrix(cert, sys, gain)
    return bool(np.linalg.eigvalsh(M)[-1] < -margin)


def lmi_margin(cert, sys, gain):
    """Negated largest eigenvalue of the test matrix (> 0 means feasible)."""
    return float(-np.linalg.eigvalsh(lmi_matrix(cert, sys, gain))[-1])


# ---------------------------------------------------------------------------
# Functional evaluation on history segments


def _segment_grid(seg):
    times = np.asarray(seg.times, dtype=float)
    values = np.asarray(seg.values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return times, values


def _interp_uniform(times, values, t_query):
    dt = times[1] - times[0]
    pos = (np.asarray(t_query) - times[0]) / dt
    lo = np.clip(np.floor(pos).astype(int), 0, len(times) - 2)
    w = pos - lo
    return (1.0 - w)[:, None] * values[lo] + w[:, None] * values[lo + 1]


def _window_nodes(times, values, span):
    """Grid nodes covering the trailing ``span`` of the segment.

    Returns (nodes_t, nodes_v) where the first node is exactly at
    t_end - span (interpolated if it falls between samples).
    """
    t_end = times[-1]
    t_lo = t_end - span
    dt = times[1] - times[0]
    if t_lo < times[0] - 1e-9 * max(dt, 1.0):
        raise InsufficientSpanError(
            f"segment spans [{times[0]:g}, {t_end:g}] but the functional "
            f"window needs {span:g} of history"
        )
    off = (t_lo - times[0]) / dt
    j0 = max(int(math.ceil(off - 1e-9)), 0)
    nodes_t = times[j0:]
    nodes_v = values[j0:]
    if nodes_t[0] - t_lo > 1e-12 * max(1.0, abs(t_lo)):
        v0 = _interp_uniform(times, values, np.array([t_lo]))
        nodes_t = np.concatenate([[t_lo], nodes_t])
        nodes_v = np.vstack([v0, nodes_v])
    return nodes_t, nodes_v


def _quad(E, M):
    return np.einsum("ij,jk,ik->i", E, M, E)


def eval_functional(cert, sys, gain, seg):
    """Evaluate the certificate's functional at the end of a history segment.

    ``seg`` holds error samples (state minus the steady state the loop is
    regulating to) on a uniform grid.  Integrals use the trapezoid rule on
    the sample grid; the pointwise-max variant takes the max over samples.

    Raises
    ------
    InsufficientSpanError
        If the segment is shorter than ``cert.window(sys.tau)``.
    """
    times, values = _segment_grid(seg)
    tau = sys.tau
    e_end = values[-1]
    if cert.variant == "razumikhin":
        nodes_t, nodes_v = _window_nodes(times, values, tau)
        return float(np.max(_quad(nodes_v, cert.P)))
    if cert.variant == "krasovskii_q":
        nodes_t, nodes_v = _window_nodes(times, values, tau)
        integral = np.trapezoid(_quad(nodes_v, cert.Q), nodes_t)
        return float(e_end @ cert.P @ e_end + integral)
    if cert.variant == "krasovskii_r":
        t_end = times[-1]
        if t_end - times[0] < 2.0 * tau - 1e-9:
            raise InsufficientSpanError(
                "derivative-weighted functional needs a history span of "
                f"{2.0 * tau:g}, segment has {t_end - times[0]:g}"
            )
        nodes_t, nodes_v = _window_nodes(times, values, tau)
        delayed = _interp_uniform(times, values, nodes_t - tau)
        BK = sys.B @ gain.K
        edot = nodes_v @ sys.A.T + delayed @ BK.T
        weight = nodes_t - (t_end - tau)
        integral = np.trapezoid(weight * _quad(edot, cert.R), nodes_t)
        return float(e_end @ cert.P @ e_end + integral)
    raise ValueError(f"unknown certificate variant {cert.variant!r}")


def functional_trajectory(cert, sys, gain, times, errors):
    """Functional values along a whole error trajectory on an aligned grid.

    Requires ``tau/dt`` to be an integer within 1e-6.  Returns
    ``(t_valid, V)`` where ``t_valid`` starts once a full window of history
    is available.  Useful for monotonicity checks without re-evaluating the
    functional window by window.
    """
    times = np.asarray(times, dtype=float)
    E = np.asarray(errors, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    dt = times[1] - times[0]
    steps = sys.tau / dt
    w = int(round(steps))
    if abs(steps - w) > 1e-6 or w < 1:
        raise ValueError("tau must be an integer number of grid steps")
    if cert.variant == "razumikhin":
        quad = _quad(E, cert.P)
        windows = np.lib.stride_tricks.sliding_window_view(quad, w + 1)
        return times[w:], windows.max(axis=1)
    if cert.variant == "krasovskii_q":
        from scipy.integrate import cumulative_trapezoid

        quad_p = _quad(E, cert.P)
        F = cumulative_trapezoid(_quad(E, cert.Q), dx=dt, initial=0.0)
        return times[w:], quad_p[w:] + (F[w:] - F[:-w])
    if cert.variant == "krasovskii_r":
        from scipy.integrate import cumulative_trapezoid

        if len(times) <= 2 * w:
            raise InsufficientSpanError(
                "trajectory shorter than twice the delay window"
            )
        BK = sys.B @ gain.K
        edot = E[w:] @ sys.A.T + E[:-w] @ BK.T
        q = _quad(edot, cert.R)
        th = times[w:]
        F0 = cumulative_trapezoid(q, dx=dt, initial=0.0)
        F1 = cumulative_trapezoid(q * th, dx=dt, initial=0.0)
        t_valid = times[2 * w :]
        quad_p = _quad(E[2 * w :], cert.P)
        dF0 = F0[w:] - F0[:-w]
        dF1 = F1[w:] - F1[:-w]
        V = quad_p + dF1 + (sys.tau - t_valid) * dF0
        return t_valid, V
    raise ValueError(f"unknown certificate variant {cert.variant!r}")


# ---------------------------------------------------------------------------
# Constraint thresholds


def gamma_threshold(cs, cert, gain, eq):
    """Largest functional level whose sublevel set stays inside the constraints.

    For each row the squared steady-state residual is divided by
    ``h_cl' P^{-1} h_cl`` where ``h_cl = h_x + K' h_u``; the threshold is the
    minimum over rows.  Rows with ``h_cl = 0`` do not restrict the error and
    are excluded with a warning.

    Raises
    ------
    ReferenceNotStrictlyAdmissibleError
        If any steady-state residual is <= 0.
    DegenerateConstraintError
        If every row is excluded.
    """
    from .model import residuals

    res = residuals(cs, eq.x_bar, eq.u_bar)
    if np.any(res <= 0.0):
        worst = int(np.argmin(res))
        raise ReferenceNotStrictlyAdmissibleError(
            f"steady state for v={eq.v!r} has residual {res[worst]:.6g} on "
            f"constraint row {worst}; the reference must be strictly inside"
        )
    Hcl = cs.closed_loop_rows(gain)
    norms = np.linalg.norm(Hcl, axis=1)
    scale = 1.0 + np.abs(Hcl).max()
    keep = norms > 1e-14 * scale
    if not np.any(keep):
        raise DegenerateConstraintError(
            "every constraint row maps to zero through the closed loop; "
            "no level threshold exists"
        )
    if not np.all(keep):
        dropped = np.flatnonzero(~keep).tolist()
        warnings.warn(
            f"constraint rows {dropped} are invisible to the closed loop "
            "state and were excluded from the level threshold",
            RuntimeWarning,
            stacklevel=2,
        )
    H = Hcl[keep]
    denom = np.einsum("ij,ji->i", H, np.linalg.solve(cert.P, H.T))
    return float(np.min(res[keep] ** 2 / denom))


# ---------------------------------------------------------------------------
# Certificate search


def _tril_count(n):
    return n * (n + 1) // 2


def _tril_to_factor(vals, n):
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = vals
    return L


def _spd_from(vals, n):
    L = _tril_to_factor(vals, n)
    return L @ L.T


class _Param:
    """Packing/unpacking of the search vector for one certificate variant."""

    def __init__(self, variant, n):
        self.variant = variant
        self.n = n
        nt = _tril_count(n)
        if variant == "razumikhin":
            self.dim = nt + 1
        elif variant == "krasovskii_q":
            self.dim = 2 * nt
        elif variant == "krasovskii_r":
            self.dim = 2 * nt + 2 * n * n
        else:
            raise ValueError(f"unknown certificate variant {variant!r}")

    def initial(self, rng):
        n = self.n
        nt = _tril_count(n)
        rows, cols = np.tril_indices(n)
        diag_idx = np.flatnonzero(rows == cols)

        def factor():
            v = 0.3 * rng.standard_normal(nt)
            v[diag_idx] = 0.5 + rng.uniform(0.0, 1.0, size=n)
            return v

        if self.variant == "razumikhin":
            return np.concatenate([factor(), rng.normal(0.0, 1.0, size=1)])
        if self.variant == "krasovskii_q":
            return np.concatenate([factor(), factor()])
        slack0 = rng.uniform(0.1, 1.0)
        psi = slack0 * np.eye(n) + 0.2 * rng.standard_normal((n, n))
        psj = slack0 * np.eye(n) + 0.2 * rng.standard_normal((n, n))
        return np.concatenate([factor(), factor(), psi.ravel(), psj.ravel()])

    def unpack(self, theta):
        n = self.n
        nt = _tril_count(n)
        P = _spd_from(theta[:nt], n)
        if self.variant == "razumikhin":
            q = math.exp(min(max(theta[nt], -30.0), 30.0))
            return P, (q,)
        if self.variant == "krasovskii_q":
            return P, (_spd_from(theta[nt : 2 * nt], n),)
        R = _spd_from(theta[nt : 2 * nt], n)
        off = 2 * nt
        Psi2 = theta[off : off + n * n].reshape(n, n)
        Psi3 = theta[off + n * n : off + 2 * n * n].reshape(n, n)
        return P, (R, Psi2, Psi3)

    def assemble(self, A, BK, tau, P, extra):
        if self.variant == "razumikhin":
            return _raz_lmi(A, BK, P, extra[0])
        if self.variant == "krasovskii_q":
            return _kq_lmi(A, BK, P, extra[0])
        return _kr_lmi(A, BK, tau, P, extra[0], extra[1], extra[2])

    def certificate(self, P, extra, scale=1.0):
        # Divide every matrix by `scale`; q is scale free.
        if self.variant == "razumikhin":
            return RazumikhinCertificate(P=P / scale, q=extra[0])
        if self.variant == "krasovskii_q":
            return KrasovskiiQCertificate(P=P / scale, Q=extra[0] / scale)
        return KrasovskiiRCertificate(
            P=P / scale,
            R=extra[0] / scale,
            Psi2=extra[1] / scale,
            Psi3=extra[2] / scale,
        )


def synthesize(
    variant,
    sys,
    gain,
    seed,
    restarts=200,
    max_iter=500,
    lmi_margin=1e-6,
):
    """Search for a certificate of the requested variant.

    Multi-start Nelder-Mead over Cholesky factors (and q / slack matrices),
    minimizing the largest eigenvalue of the test matrix normalized so that
    the largest eigenvalue of P is one.  The first restart reaching margin
    >= ``lmi_margin`` wins; the returned certificate is normalized the same
    way.

    Raises
    ------
    InfeasibleError
        If no restart reaches the requested margin.  This is not a proof of
        infeasibility.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    A = sys.A
    BK = sys.B @ gain.K
    tau = sys.tau
    par = _Param(variant, sys.n)
    rng = np.random.default_rng(seed)

    def objective(theta):
        P, extra = par.unpack(theta)
        s = float(np.linalg.eigvalsh(P)[-1])
        if s <= 1e-12:
            return 1e6
        M = par.assemble(A, BK, tau, P, extra)
        return float(np.linalg.eigvalsh(M)[-1]) / s

    best_fail = np.inf
    for _ in range(restarts):
        theta0 = par.initial(rng)
        result = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "maxfev": 2 * max_iter,
                "xatol": 1e-9,
                "fatol": 1e-12,
                "adaptive": par.dim > 4,
            },
        )
        if result.fun <= -1.05 * lmi_margin:
            P, extra = par.unpack(result.x)
            s = float(np.linalg.eigvalsh(P)[-1])
            cert = par.certificate(P, extra, scale=s)
            if positivity_violation(cert) is None and lmi_feasible(
                cert, sys, gain, margin=lmi_margin
            ):
                return cert
        best_fail = min(best_fail, result.fun)
    raise InfeasibleError(
        f"no {variant} certificate found within the search budget "
        f"({restarts} restarts x {max_iter} iterations); best margin "
        f"reached was {-best_fail:.3g}. This does not prove infeasibility."
    )


def find_slack(sys, gain, P, R, seed=0, restarts=30, max_iter=300, lmi_margin=1e-6):
    """Search slack matrices making the derivative-weighted test pass for (P, R).

    Returns ``(Psi2, Psi3)`` or raises InfeasibleError.
    """
    P = _sym("P", P)
    R = _sym("R", R)
    A = sys.A
    BK = sys.B @ gain.K
    tau = sys.tau
    n = sys.n
    rng = np.random.default_rng(seed)

    def objective(theta):
        Psi2 = theta[: n * n].reshape(n, n)
        Psi3 = theta[n * n :].reshape(n, n)
        M = _kr_lmi(A, BK, tau, P, R, Psi2, Psi3)
        return float(np.linalg.eigvalsh(M)[-1])

    best_fail = np.inf
    for _ in range(restarts):
        s0 = rng.uniform(0.1, 1.0)
        theta0 = np.concatenate(
            [
                (s0 * np.eye(n) + 0.2 * rng.standard_normal((n, n))).ravel(),
                (s0 * np.eye(n) + 0.2 * rng.standard_normal((n, n))).ravel(),
            ]
        )
        result = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={"maxiter": max_iter, "maxfev": 2 * max_iter, "adaptive": n > 1},
        )
        if result.fun <= -1.05 * lmi_margin:
            Psi2 = result.x[: n * n].reshape(n, n)
            Psi3 = result.x[n * n :].reshape(n, n)
            return Psi2, Psi3
        best_fail = min(best_fail, result.fun)
    raise InfeasibleError(
        f"no slack matrices found for the given (P, R) within the budget; "
        f"best margin reached was {-best_fail:.3g}. This does not prove "
        "infeasibility."
    )


def optimize_p_volume(
    cs,
    sys,
    gain,
    variant,
    seed,
    restarts=60,
    max_iter=400,
    lmi_margin=1e-6,
):
    """Search for the certificate whose invariant-set shape is least conservative.

    Minimizes log det P subject to the variant's decrease test and to
    ``P >= h_cl h_cl'`` for every closed-loop constraint row (so the unit
    sublevel set of P fits inside each constraint slab).  Constraints enter
    as penalties; the best feasible restart wins.  The returned certificate
    keeps the scale pinned by the domination constraint (no normalization).

    Raises
    ------
    ValueError
        If the constraint set is empty (the problem would be unbounded).
    InfeasibleError
        If no restart lands feasible.
    """
    if len(cs) == 0:
        raise ValueError("volume optimization needs at least one constraint row")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    A = sys.A
    BK = sys.B @ gain.K
    tau = sys.tau
    n = sys.n
    Hcl = cs.closed_loop_rows(gain)
    par = _Param(variant, n)
    rng = np.random.default_rng(seed)

    def parts(theta):
        P, extra = par.unpack(theta)
        sign, logdet = np.linalg.slogdet(P)
        if sign <= 0 or not np.isfinite(logdet):
            return None
        M = par.assemble(A, BK, tau, P, extra)
        lmi_violation = float(np.linalg.eigvalsh(M)[-1]) + lmi_margin
        try:
            Z = np.linalg.solve(P, Hcl.T)
        except np.linalg.LinAlgError:
            return None
        dom = np.einsum("ij,ji->i", Hcl, Z) - 1.0
        return P, extra, logdet, lmi_violation, dom

    def objective(theta):
        got = parts(theta)
        if got is None:
            return 1e9
        _, _, logdet, lmi_violation, dom = got
        pen = max(lmi_violation, 0.0) + float(np.sum(np.maximum(dom, 0.0)))
        return logdet + 1e4 * pen

    best = None
    best_fail = np.inf
    for _ in range(restarts):
        theta0 = par.initial(rng)
        result = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "maxfev": 2 * max_iter,
                "adaptive": par.dim > 4,
            },
        )
        got = parts(result.x)
        if got is None:
            continue
        P, extra, logdet, lmi_violation, dom = got
        feasible = lmi_violation <= 0.0 and np.all(dom <= 1e-6)
        if feasible and (best is None or logdet < best[0]):
            best = (logdet, P, extra)
        if not feasible:
            best_fail = min(best_fail, result.fun)
    if best is None:
        raise InfeasibleError(
            f"no volume-optimized {variant} certificate found within the "
            "budget. This does not prove infeasibility."
        )
    _, P, extra = best
    cert = par.certificate(P, extra, scale=1.0)
    if positivity_violation(cert) is not None or not lmi_feasible(
        cert, sys, gain, margin=0.0
    ):
        raise InfeasibleError(
            "volume optimization produced a candidate that failed the final "
            "feasibility check"
        )
    return cert
