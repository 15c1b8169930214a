"""Plant model, constraints, steady-state maps, and the inner control law.

The plant is linear time invariant with a single constant delay on the input
channel:

    x'(t) = A x(t) + B u(t - tau)
    y(t)  = C x(t) + D u(t - tau)

Constraints are affine rows ``h_x' x + h_u' u + g >= 0`` evaluated on the
instantaneous state and commanded input.  The inner loop is a static state
feedback around a steady state parameterized by the auxiliary reference v:

    u(t) = u_bar(v) + K (x(t) - x_bar(v))
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoEquilibriumError

# Relative residual above which a steady-state solve is rejected.
_SS_RTOL = 1e-8


def _as_matrix(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    return arr


def _as_vector(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DelaySystem:
    """LTI plant with one constant input delay.

    Attributes
    ----------
    A, B, C, D : ndarray
        State-space matrices with shapes (n, n), (n, m), (p, n), (p, m).
    tau : float
        Input delay in seconds, strictly positive.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    tau: float

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got shape {B.shape}")
        m = B.shape[1]
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got shape {C.shape}")
        p = C.shape[0]
        if D.shape != (p, m):
            raise ValueError(f"D must have shape ({p}, {m}), got {D.shape}")
        tau = float(self.tau)
        if not tau > 0.0:
            raise ValueError(f"tau must be > 0, got {tau}")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "tau", tau)
        # Min-norm steady-state map: [x_bar; u_bar] = S v solves
        # [[A, B], [C, D]] [x_bar; u_bar] = [0; v].
        M = np.block([[A, B], [C, D]])
        S = np.linalg.pinv(M)[:, n:]
        target = np.vstack([np.zeros((n, p)), np.eye(p)])
        exact = bool(
            np.linalg.norm(M @ S - target) <= 1e-9 * (1.0 + np.linalg.norm(target))
        )
        S.setflags(write=False)
        object.__setattr__(self, "_ss_map", S)
        object.__setattr__(self, "_ss_exact", exact)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class PrimaryGain:
    """Static feedback gain K of the inner loop, shape (m, n)."""

    K: np.ndarray

    def __post_init__(self):
        K = _as_matrix(self.K, "K")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)


@dataclass(frozen=True)
class Equilibrium:
    """Steady state (x_bar, u_bar) whose output equals the reference v."""

    x_bar: np.ndarray
    u_bar: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_bar", _as_vector(self.x_bar, "x_bar"))
        object.__setattr__(self, "u_bar", _as_vector(self.u_bar, "u_bar"))
        object.__setattr__(self, "v", _as_vector(self.v, "v"))

    def verify(self, sys, tol=1e-9):
        """Check the defining equations against ``sys`` within ``tol``."""
        drift = sys.A @ self.x_bar + sys.B @ self.u_bar
        out = sys.C @ self.x_bar + sys.D @ self.u_bar - self.v
        ok_drift = np.linalg.norm(drift) <= tol * (1.0 + np.linalg.norm(self.x_bar))
        ok_out = np.linalg.norm(out) <= tol * (1.0 + np.linalg.norm(self.v))
        return bool(ok_drift and ok_out)


@dataclass(frozen=True)
class ConstraintRow:
    """One affine constraint ``h_x' x + h_u' u + g >= 0``."""

    h_x: np.ndarray
    h_u: np.ndarray
    g: float

    def __post_init__(self):
        h_x = _as_vector(self.h_x, "h_x")
        h_u = _as_vector(self.h_u, "h_u")
        if not (np.any(h_x != 0.0) or np.any(h_u != 0.0)):
            raise ValueError("constraint row has h_x = 0 and h_u = 0")
        h_x.setflags(write=False)
        h_u.setflags(write=False)
        object.__setattr__(self, "h_x", h_x)
        object.__setattr__(self, "h_u", h_u)
        object.__setattr__(self, "g", float(self.g))


@dataclass(frozen=True)
class ConstraintSet:
    """Stack of constraint rows with cached (H_x, H_u, g) matrices."""

    rows: tuple
    H_x: np.ndarray = field(init=False, repr=False)
    H_u: np.ndarray = field(init=False, repr=False)
    g: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = tuple(self.rows)
        if len(rows) == 0:
            raise ValueError("constraint set must contain at least one row")
        n = rows[0].h_x.shape[0]
        m = rows[0].h_u.shape[0]
        for r in rows:
            if r.h_x.shape[0] != n or r.h_u.shape[0] != m:
                raise ValueError("constraint rows have inconsistent dimensions")
        object.__setattr__(self, "rows", rows)
        H_x = np.array([r.h_x for r in rows])
        H_u = np.array([r.h_u for r in rows])
        g = np.array([r.g for r in rows])
        for arr in (H_x, H_u, g):
            arr.setflags(write=False)
        object.__setattr__(self, "H_x", H_x)
        object.__setattr__(self, "H_u", H_u)
        object.__setattr__(self, "g", g)

    def __len__(self):
        return len(self.rows)

    def closed_loop_rows(self, gain):
        """Rows mapped through the inner loop: ``H_x + H_u K``, shape (n_c, n)."""
        return self.H_x + self.H_u @ gain.K


def steady_state(sys, v):
    """Solve for the steady state whose output equals ``v``.

    Uses the min-norm least-squares solution of
    ``[[A, B], [C, D]] [x_bar; u_bar] = [0; v]`` and rejects it when the
    relative residual exceeds 1e-8.

    Parameters
    ----------
    sys : DelaySystem
    v : array_like, shape (p,)

    Returns
    -------
    Equilibrium

    Raises
    ------
    NoEquilibriumError
        If no steady state reproduces ``v`` within tolerance.
    """
    v = _as_vector(v, "v")
    if v.shape[0] != sys.p:
        raise ValueError(f"v must have length {sys.p}, got {v.shape[0]}")
    z = sys._ss_map @ v
    x_bar, u_bar = z[: sys.n], z[sys.n :]
    if not sys._ss_exact:
        rhs = np.concatenate([np.zeros(sys.n), v])
        lhs = np.concatenate([sys.A @ x_bar + sys.B @ u_bar, sys.C @ x_bar + sys.D @ u_bar])
        if np.linalg.norm(lhs - rhs) > _SS_RTOL * (1.0 + np.linalg.norm(rhs)):
            raise NoEquilibriumError(
                f"no steady state reproduces reference {v!r}: the output map "
                "cannot reach it"
            )
    return Equilibrium(x_bar=x_bar, u_bar=u_bar, v=v)


def residuals(cs, x, u):
    """Constraint residuals ``H_x x + H_u u + g`` (>= 0 means satisfied)."""
    x = _as_vector(x, "x")
    u = _as_vector(u, "u")
    if x.shape[0] != cs.H_x.shape[1]:
        raise ValueError(
            f"x must have length {cs.H_x.shape[1]}, got {x.shape[0]}"
        )
    if u.shape[0] != cs.H_u.shape[1]:
        raise ValueError(
            f"u must have length {cs.H_u.shape[1]}, got {u.shape[0]}"
        )
    return cs.H_x @ x + cs.H_u @ u + cs.g


def residuals_path(cs, X, U):
    """Residuals for whole trajectories; X is (N, n), U is (N, m) -> (N, n_c)."""
    return X @ cs.H_x.T + U @ cs.H_u.T + cs.g


def primary_input(gain, eq, x):
    """Inner-loop command ``u_bar + K (x - x_bar)``."""
    x = _as_vector(x, "x")
    if x.shape[0] != gain.K.shape[1]:
        raise ValueError(f"x must have length {gain.K.shape[1]}, got {x.shape[0]}")
    return eq.u_bar + gain.K @ (x - eq.x_bar)


def reference_feedthrough(sys, gain):
    """Gain N with ``u = K x + N v`` at steady state, i.e. ``Su - K Sx``."""
    S = sys._ss_map
    Sx, Su = S[: sys.n], S[sys.n :]
    return Su - gain.K @ Sx
