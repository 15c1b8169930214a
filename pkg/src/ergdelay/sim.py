"""Fixed-step simulation of the delayed closed loop and forward prediction.

Both the live simulation and the governor's internal prediction advance the
same dynamics with the same kernel:

    x'(t) = A x(t) + B K x(t - tau) + B N v(t - tau)

where ``N`` maps the auxiliary reference to the feedforward part of the
command (``u = K x + N v`` reproduces the inner-loop law at every instant).
Because the code path is shared, a prediction from the current state with a
frozen reference matches a continued simulation with that same reference
exactly, not just to integration accuracy.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import HistoryUnderrunError, InsufficientSpanError
from .model import reference_feedthrough, steady_state


@dataclass(frozen=True)
class HistorySegment:
    """Uniformly sampled vector signal on ``times`` (one row per sample)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("times must be 1-d with at least two samples")
        if values.shape[0] != times.shape[0]:
            raise ValueError("values must have one row per time sample")
        steps = np.diff(times)
        dt = steps[0]
        if dt <= 0.0 or np.any(np.abs(steps - dt) > 1e-12 * max(1.0, abs(dt))):
            raise ValueError("times must be strictly increasing and uniform")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def span(self):
        return float(self.times[-1] - self.times[0])


class HistoryBuffer:
    """Preallocated uniform-grid sample store with linear interpolation.

    Row ``i`` holds the sample at ``t0 + i * dt``.  The buffer is append
    only; capacity is fixed at construction and sized by the caller for the
    whole run (history plus every step that will be taken).
    """

    def __init__(self, dt, t0, capacity, dim):
        if dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {dt}")
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.dt = float(dt)
        self.t0 = float(t0)
        self._data = np.zeros((int(capacity), int(dim)))
        self.filled = 0

    @property
    def dim(self):
        return self._data.shape[1]

    @property
    def capacity(self):
        return self._data.shape[0]

    @property
    def t_newest(self):
        return self.t0 + (self.filled - 1) * self.dt

    def extend(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        end = self.filled + rows.shape[0]
        if end > self.capacity:
            raise ValueError("history buffer capacity exceeded")
        self._data[self.filled : end] = rows
        self.filled = end

    def values(self):
        """View of the filled rows (read only by convention)."""
        return self._data[: self.filled]

    def times(self):
        return self.t0 + self.dt * np.arange(self.filled)

    def lookup(self, t):
        """Linearly interpolated sample at time ``t`` within the stored span."""
        pos = (t - self.t0) / self.dt
        if pos < -1e-9 or pos > self.filled - 1 + 1e-9:
            raise HistoryUnderrunError(
                f"lookup at t={t:g} outside stored span "
                f"[{self.t0:g}, {self.t_newest:g}]"
            )
        pos = min(max(pos, 0.0), float(self.filled - 1))
        lo = int(pos)
        w = pos - lo
        if w == 0.0:
            return self._data[lo].copy()
        return (1.0 - w) * self._data[lo] + w * self._data[lo + 1]

    def segment(self, span):
        """Trailing ``span`` of the buffer as a HistorySegment."""
        if span > (self.filled - 1) * self.dt + 1e-9 * max(1.0, self.dt):
            raise InsufficientSpanError(
                f"buffer spans {(self.filled - 1) * self.dt:g}, needs {span:g}"
            )
        j0 = max(self.filled - 1 - int(np.ceil(span / self.dt - 1e-9)), 0)
        return HistorySegment(
            times=self.t0 + self.dt * np.arange(j0, self.filled),
            values=self._data[j0 : self.filled].copy(),
        )


class SimState:
    """Aligned state and reference histories of one closed-loop run.

    Both buffers share the grid (same t0, dt, fill count); the newest row is
    the current instant.  Instances are single-owner and mutated in place by
    ``step_closed_loop``.
    """

    def __init__(self, x_hist, v_hist):
        if x_hist.dt != v_hist.dt or x_hist.t0 != v_hist.t0:
            raise ValueError("state and reference buffers must share their grid")
        if x_hist.filled != v_hist.filled:
            raise ValueError("state and reference buffers must be equally filled")
        if x_hist.filled < 2:
            raise ValueError("need at least two samples of history")
        self.x_hist = x_hist
        self.v_hist = v_hist

    @property
    def t(self):
        return self.x_hist.t_newest

    @property
    def dt(self):
        return self.x_hist.dt

    @property
    def x(self):
        return self.x_hist._data[self.x_hist.filled - 1]

    @property
    def v(self):
        return self.v_hist._data[self.v_hist.filled - 1]

    @classmethod
    def from_constant_history(cls, sys, x0, v0, dt, span=None, extra_capacity=0):
        """Constant history ``x(t) = x0, v(t) = v0`` over ``[-span, 0]``.

        ``span`` defaults to twice the delay, enough for every functional
        window.  ``extra_capacity`` reserves room for the steps to come.
        """
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        v0 = np.atleast_1d(np.asarray(v0, dtype=float))
        if x0.shape[0] != sys.n:
            raise ValueError(f"x0 must have length {sys.n}, got {x0.shape[0]}")
        if v0.shape[0] != sys.p:
            raise ValueError(f"v0 must have length {sys.p}, got {v0.shape[0]}")
        if span is None:
            span = 2.0 * sys.tau
        hist_steps = int(round(span / dt))
        if hist_steps < 1:
            raise ValueError("history span must cover at least one step")
        capacity = hist_steps + 1 + int(extra_capacity)
        xb = HistoryBuffer(dt, -hist_steps * dt, capacity, sys.n)
        vb = HistoryBuffer(dt, -hist_steps * dt, capacity, sys.p)
        xb.extend(np.tile(x0, (hist_steps + 1, 1)))
        vb.extend(np.tile(v0, (hist_steps + 1, 1)))
        return cls(xb, vb)

    @classmethod
    def from_samples(cls, sys, times, x_rows, v_rows, extra_capacity=0):
        """Tabulated history ending at ``times[-1]`` (normally 0)."""
        times = np.asarray(times, dtype=float)
        x_rows = np.atleast_2d(np.asarray(x_rows, dtype=float))
        v_rows = np.atleast_2d(np.asarray(v_rows, dtype=float))
        seg = HistorySegment(times=times, values=x_rows)  # validates the grid
        if v_rows.shape[0] != len(times):
            raise ValueError("v history must have one row per time sample")
        if x_rows.shape[1] != sys.n or v_rows.shape[1] != sys.p:
            raise ValueError("history rows do not match the system dimensions")
        dt = seg.dt
        capacity = len(times) + int(extra_capacity)
        xb = HistoryBuffer(dt, times[0], capacity, sys.n)
        vb = HistoryBuffer(dt, times[0], capacity, sys.p)
        xb.extend(x_rows)
        vb.extend(v_rows)
        return cls(xb, vb)


def _loop_matrices(sys, gain):
    BK = np.ascontiguousarray(sys.B @ gain.K)
    BN = np.ascontiguousarray(sys.B @ reference_feedthrough(sys, gain))
    return np.ascontiguousarray(sys.A), BK, BN


def _advance_state(sys, gain, state, v_apply, nsteps):
    """Advance ``nsteps`` grid steps holding the reference at ``v_apply``."""
    dt = state.dt
    tau_steps = sys.tau / dt
    if state.x_hist.filled - 1 < tau_steps - 1e-9:
        raise HistoryUnderrunError(
            f"delayed term needs {sys.tau:g} of history, buffer holds "
            f"{(state.x_hist.filled - 1) * dt:g}"
        )
    A, BK, BN = _loop_matrices(sys, gain)
    v_apply = np.ascontiguousarray(np.atleast_1d(v_apply), dtype=float)
    if v_apply.shape[0] != sys.p:
        raise ValueError(f"v must have length {sys.p}, got {v_apply.shape[0]}")
    filled = _backend.advance(
        state.x_hist._data,
        state.v_hist._data,
        state.x_hist.filled,
        int(nsteps),
        dt,
        tau_steps,
        A,
        BK,
        BN,
        v_apply,
    )
    state.x_hist.filled = filled
    state.v_hist.filled = filled
    return state


def step_closed_loop(sys, gain, state, v, dt):
    """Advance the closed loop one RK4 step under reference ``v``.

    ``dt`` must match the grid the state's buffers were built with (the grid
    is a property of the run, not of a single call).  Appends the new sample
    to both buffers and returns the mutated state.

    Raises
    ------
    HistoryUnderrunError
        If the stored history is shorter than the delay.
    """
    if abs(dt - state.dt) > 1e-12 * max(1.0, state.dt):
        raise ValueError(
            f"dt {dt:g} does not match the state's grid step {state.dt:g}"
        )
    if state.x_hist.filled >= state.x_hist.capacity:
        raise ValueError("history buffer capacity exceeded; size the state "
                         "for the full run")
    return _advance_state(sys, gain, state, v, 1)


@dataclass(frozen=True)
class PredictionResult:
    """Forward prediction under a frozen reference.

    ``theta`` spans ``[-back, T]`` relative to the prediction instant; the
    rows before zero are copied history so functional windows ending at T
    can reach into the past.  ``u`` covers ``theta >= 0`` only.
    """

    theta: np.ndarray
    x: np.ndarray
    u: np.ndarray
    i_zero: int
    v: np.ndarray
    x_bar: np.ndarray
    u_bar: np.ndarray

    @property
    def T(self):
        return float(self.theta[-1])

    def forward_x(self):
        """State samples on ``theta in [0, T]``."""
        return self.x[self.i_zero :]

    def error_segment(self, span):
        """Trailing error history ``x - x_bar`` over ``[T - span, T]``."""
        dt = self.theta[1] - self.theta[0]
        total = self.theta[-1] - self.theta[0]
        if span > total + 1e-9 * max(1.0, dt):
            raise InsufficientSpanError(
                f"prediction carries {total:g} of history, window needs {span:g}"
            )
        j0 = len(self.theta) - 1 - int(np.ceil(span / dt - 1e-9))
        j0 = max(j0, 0)
        return HistorySegment(
            times=self.theta[j0:], values=self.x[j0:] - self.x_bar
        )


def predict(sys, gain, state, T):
    """Integrate the loop forward ``T`` seconds with the reference frozen.

    Does not mutate ``state``.  The frozen reference is the newest stored
    reference sample.  The result carries up to ``2 tau`` of past history so
    terminal functional windows (including the derivative-weighted one) can
    be sliced from it, and the commanded input along ``[0, T]`` computed from
    the steady-state pair of the frozen reference.

    Raises
    ------
    ValueError
        If ``T`` is not a positive multiple of the grid step.
    NoEquilibriumError
        If the frozen reference has no steady state.
    """
    dt = state.dt
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T must be a positive multiple of dt={dt:g}, got {T!r}")
    tau_steps = sys.tau / dt
    if state.x_hist.filled - 1 < tau_steps - 1e-9:
        raise HistoryUnderrunError(
            f"delayed term needs {sys.tau:g} of history, buffer holds "
            f"{(state.x_hist.filled - 1) * dt:g}"
        )
    v = np.array(state.v, dtype=float)
    eq = steady_state(sys, v)  # may raise NoEquilibriumError

    back = min(state.x_hist.filled - 1, int(np.ceil(2.0 * tau_steps)))
    rows = back + 1 + nsteps
    xw = np.zeros((rows, sys.n))
    vw = np.zeros((rows, sys.p))
    xw[: back + 1] = state.x_hist._data[
        state.x_hist.filled - 1 - back : state.x_hist.filled
    ]
    vw[: back + 1] = state.v_hist._data[
        state.v_hist.filled - 1 - back : state.v_hist.filled
    ]
    A, BK, BN = _loop_matrices(sys, gain)
    _backend.advance(
        xw, vw, back + 1, nsteps, dt, tau_steps, A, BK, BN,
        np.ascontiguousarray(v),
    )
    theta = dt * np.arange(-back, nsteps + 1)
    forward = xw[back:]
    u = (forward - eq.x_bar) @ gain.K.T + eq.u_bar
    return PredictionResult(
        theta=theta,
        x=xw,
        u=u,
        i_zero=back,
        v=v,
        x_bar=eq.x_bar,
        u_bar=eq.u_bar,
    )
