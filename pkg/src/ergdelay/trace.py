"""Run traces: column layout, CSV round trip, and summary statistics.

Column order is ``t, x1..xn, u1..um, v1..vp, r1..rp, Delta_T, Delta_inf, V,
residual_1..residual_nc``.  Floats are written with ``repr`` (shortest
round-trip form), so writing and re-reading a trace reproduces it exactly;
missing diagnostics are ``nan``.  The applied margin ``delta`` is kept on
the in-memory trace for summaries but is not a file column.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trace:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    delta_T: np.ndarray
    delta_inf: np.ndarray
    v_functional: np.ndarray
    residuals: np.ndarray
    delta: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        rows = len(self.t)
        for name in ("x", "u", "v", "r", "residuals"):
            arr = getattr(self, name)
            if arr.shape[0] != rows:
                raise ValueError(f"{name} must have {rows} rows")

    def column_names(self):
        names = ["t"]
        names += [f"x{i + 1}" for i in range(self.x.shape[1])]
        names += [f"u{i + 1}" for i in range(self.u.shape[1])]
        names += [f"v{i + 1}" for i in range(self.v.shape[1])]
        names += [f"r{i + 1}" for i in range(self.r.shape[1])]
        names += ["Delta_T", "Delta_inf", "V"]
        names += [f"residual_{i + 1}" for i in range(self.residuals.shape[1])]
        return names

    def _matrix(self):
        return np.column_stack(
            [
                self.t,
                self.x,
                self.u,
                self.v,
                self.r,
                self.delta_T,
                self.delta_inf,
                self.v_functional,
                self.residuals,
            ]
        )

    def to_csv(self, path, decimation=1):
        """Write the trace; ``decimation`` keeps every k-th row plus the last."""
        decimation = int(decimation)
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        M = self._matrix()
        idx = np.arange(0, M.shape[0], decimation)
        if idx[-1] != M.shape[0] - 1:
            idx = np.append(idx, M.shape[0] - 1)
        with open(path, "w") as fh:
            fh.write(",".join(self.column_names()) + "\n")
            for row in M[idx]:
                fh.write(",".join(repr(float(val)) for val in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        """Read a trace written by ``to_csv`` (column counts inferred)."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = [
                [float(tok) for tok in line.strip().split(",")]
                for line in fh
                if line.strip()
            ]
        M = np.array(data, dtype=float)
        if M.ndim != 2 or M.shape[1] != len(header):
            raise ValueError(f"malformed trace file {path}")

        def count(prefix):
            return sum(
                1
                for h in header
                if h.startswith(prefix) and h[len(prefix) :].isdigit()
            )

        n, m, p = count("x"), count("u"), count("v")
        nc = sum(1 for h in header if h.startswith("residual_"))
        cols = iter(np.split(
            M, np.cumsum([1, n, m, p, p, 1, 1, 1, nc])[:-1], axis=1
        ))
        t = next(cols).ravel()
        x, u, v, r = next(cols), next(cols), next(cols), next(cols)
        delta_T = next(cols).ravel()
        delta_inf = next(cols).ravel()
        v_fun = next(cols).ravel()
        res = next(cols)
        return cls(
            t=t, x=x, u=u, v=v, r=r, delta_T=delta_T, delta_inf=delta_inf,
            v_functional=v_fun, residuals=res,
        )

    def summary(self):
        """Headline numbers of the run (first state/reference component).

        Returns a dict with ``max_x``, ``settling_time`` (first time after
        which the state stays within 2% of the final reference; inf if it
        never does), ``min_residual``, ``min_delta`` (nan when the run kept
        no margin diagnostics), and ``final_x``.
        """
        x = self.x[:, 0]
        r_final = float(self.r[-1, 0])
        band = 0.02 * abs(r_final)
        outside = np.abs(x - r_final) > band
        if outside[-1]:
            settling = math.inf
        elif not np.any(outside):
            settling = float(self.t[0])
        else:
            settling = float(self.t[int(np.flatnonzero(outside)[-1]) + 1])
        if self.delta is not None and not np.all(np.isnan(self.delta)):
            min_delta = float(np.nanmin(self.delta))
        else:
            min_delta = float("nan")
        return {
            "max_x": float(x.max()),
            "settling_time": settling,
            "min_residual": float(self.residuals.min()),
            "min_delta": min_delta,
            "final_x": float(x[-1]),
        }
