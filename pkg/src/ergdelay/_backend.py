"""Fixed-step integration kernels with selectable numba / numpy backends.

The hot loop of every simulation and prediction is the same operation:
advance the delayed closed loop

    x'(t) = A x(t) + BK x(t - tau) + BN v(t - tau)

over a uniform grid with classic RK4, reading the delayed terms from the
already-filled part of the sample buffers via linear interpolation.  Because
the delayed forcing only depends on samples at least ``tau`` old, the three
distinct stage times of an RK4 step (t, t + dt/2, t + dt) can be evaluated
up front whenever ``tau >= dt``, which callers guarantee.

Backend selection happens once at import from the ``ERG_BACKEND`` environment
variable: ``numba`` (default) compiles the loop kernel with ``@njit``;
``numpy`` keeps a vectorized-per-step pure numpy version.  If numba is
requested but cannot be imported the numpy path is used and a warning is
emitted.  Both implementations are importable regardless of the flag so the
benchmark can time them side by side.
"""

import os
import warnings

import numpy as np

_VALID_BACKENDS = ("numba", "numpy")


def requested_backend():
    """Return the backend named by ``ERG_BACKEND`` (default ``numba``)."""
    name = os.environ.get("ERG_BACKEND", "numba").strip().lower()
    if name not in _VALID_BACKENDS:
        raise ValueError(
            f"ERG_BACKEND must be one of {_VALID_BACKENDS}, got {name!r}"
        )
    return name


def _interp_row(buf, pos, out):
    # Linear interpolation of one buffer row at fractional index pos.
    lo = int(pos)
    w = pos - lo
    if w == 0.0:
        for c in range(buf.shape[1]):
            out[c] = buf[lo, c]
    else:
        for c in range(buf.shape[1]):
            out[c] = (1.0 - w) * buf[lo, c] + w * buf[lo + 1, c]


def _advance_loops(xbuf, vbuf, filled, nsteps, dt, tau_steps, A, BK, BN, v_apply):
    # Scalar-loop RK4 stepper; the numba backend jits this function.
    n = xbuf.shape[1]
    p = vbuf.shape[1]
    xd = np.empty(n)
    vd = np.empty(p)
    f1 = np.empty(n)
    f2 = np.empty(n)
    f4 = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xs = np.empty(n)
    half = 0.5 * dt
    sixth = dt / 6.0
    for s in range(nsteps):
        i = filled - 1 + s
        base = i - tau_steps
        for stage in range(3):
            pos = base + 0.5 * stage
            _interp_row(xbuf, pos, xd)
            _interp_row(vbuf, pos, vd)
            if stage == 0:
                f = f1
            elif stage == 1:
                f = f2
            else:
                f = f4
            for r in range(n):
                acc = 0.0
                for c in range(n):
                    acc += BK[r, c] * xd[c]
                for c in range(p):
                    acc += BN[r, c] * vd[c]
                f[r] = acc
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += A[r, c] * xbuf[i, c]
            k1[r] = acc + f1[r]
        for r in range(n):
            xs[r] = xbuf[i, r] + half * k1[r]
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += A[r, c] * xs[c]
            k2[r] = acc + f2[r]
        for r in range(n):
            xs[r] = xbuf[i, r] + half * k2[r]
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += A[r, c] * xs[c]
            k3[r] = acc + f2[r]
        for r in range(n):
            xs[r] = xbuf[i, r] + dt * k3[r]
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += A[r, c] * xs[c]
            k4[r] = acc + f4[r]
        for r in range(n):
            xbuf[i + 1, r] = xbuf[i, r] + sixth * (
                k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]
            )
        for c in range(p):
            vbuf[i + 1, c] = v_apply[c]
    return filled + nsteps


def _force_np(xbuf, vbuf, pos, BK, BN):
    lo = int(pos)
    w = pos - lo
    if w == 0.0:
        return BK @ xbuf[lo] + BN @ vbuf[lo]
    xd = (1.0 - w) * xbuf[lo] + w * xbuf[lo + 1]
    vd = (1.0 - w) * vbuf[lo] + w * vbuf[lo + 1]
    return BK @ xd + BN @ vd


def advance_numpy(xbuf, vbuf, filled, nsteps, dt, tau_steps, A, BK, BN, v_apply):
    """Pure numpy RK4 advance; same contract as the jitted kernel.

    ``xbuf``/``vbuf`` are (capacity, n) and (capacity, p) sample arrays of
    which the first ``filled`` rows hold the trajectory so far, one row per
    grid step of size ``dt``.  Advances ``nsteps`` steps in place, writing
    ``v_apply`` into the new reference rows, and returns the new fill count.
    ``tau_steps`` is the delay measured in (possibly fractional) grid steps;
    callers must keep it identical between runs that should agree exactly.
    """
    half = 0.5 * dt
    sixth = dt / 6.0
    for s in range(nsteps):
        i = filled - 1 + s
        base = i - tau_steps
        f1 = _force_np(xbuf, vbuf, base, BK, BN)
        f2 = _force_np(xbuf, vbuf, base + 0.5, BK, BN)
        f4 = _force_np(xbuf, vbuf, base + 1.0, BK, BN)
        xi = xbuf[i]
        k1 = A @ xi + f1
        k2 = A @ (xi + half * k1) + f2
        k3 = A @ (xi + half * k2) + f2
        k4 = A @ (xi + dt * k3) + f4
        xbuf[i + 1] = xi + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        vbuf[i + 1] = v_apply
    return filled + nsteps


_numba_advance = None


def _compile_numba():
    global _numba_advance, _interp_row
    if _numba_advance is None:
        import numba

        _interp_row = numba.njit(cache=True)(_interp_row)
        _numba_advance = numba.njit(cache=True, nogil=True)(_advance_loops)
    return _numba_advance


def get_advance(backend):
    """Return the advance kernel for ``backend`` ('numba' or 'numpy')."""
    if backend == "numpy":
        return advance_numpy
    if backend == "numba":
        return _compile_numba()
    raise ValueError(f"unknown backend {backend!r}")


def _select():
    name = requested_backend()
    if name == "numba":
        try:
            return "numba", get_advance("numba")
        except ImportError:  # pragma: no cover - depends on environment
            warnings.warn(
                "ERG_BACKEND=numba but numba is not importable; "
                "falling back to the pure numpy kernel",
                RuntimeWarning,
                stacklevel=2,
            )
            return "numpy", advance_numpy
    return "numpy", advance_numpy


ACTIVE_BACKEND, advance = _select()
