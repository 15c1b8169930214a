"""Scenario files: schema validation, presets, and state construction.

A scenario is a JSON object with blocks ``system``, ``gain``,
``constraints``, optional ``erg``, ``run``, and optional ``output``.  All
semantic errors are reported as ScenarioError with a dotted path to the
offending entry; JSON syntax errors carry file, line, and column.

Scalar systems may write plain numbers wherever a vector or matrix is
expected.  The certificate block is either explicit parameters or
``{"synthesize": {...}}``, resolved at load time.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .erg import ErgConfig
from .errors import ScenarioError
from .model import (
    ConstraintRow,
    ConstraintSet,
    DelaySystem,
    PrimaryGain,
    residuals,
    steady_state,
)
from .sim import SimState
from .stability import (
    VARIANTS,
    certificate_from_dict,
    find_slack,
    lmi_feasible,
    optimize_p_volume,
    positivity_violation,
    synthesize,
)

DEFAULT_LMI_MARGIN = 1e-6


@dataclass(frozen=True)
class RunConfig:
    dt: float
    duration: float
    x0: np.ndarray
    v0: np.ndarray
    reference: tuple  # ((t, value-vector), ...)
    history: object = None  # None or (times, x_rows, v_rows)


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    decimation: int = 1


@dataclass(frozen=True)
class Scenario:
    system: DelaySystem
    gain: PrimaryGain
    constraints: ConstraintSet
    erg: ErgConfig | None
    run: RunConfig
    output: OutputConfig
    name: str = "scenario"

    def initial_state(self, extra_capacity=0):
        """Build the SimState the run starts from (history ending at t=0)."""
        if self.run.history is not None:
            times, x_rows, v_rows = self.run.history
            return SimState.from_samples(
                self.system, times, x_rows, v_rows, extra_capacity=extra_capacity
            )
        return SimState.from_constant_history(
            self.system,
            self.run.x0,
            self.run.v0,
            self.run.dt,
            extra_capacity=extra_capacity,
        )


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _get(data, path, key, required=True, default=None):
    if key not in data:
        if required:
            _fail(path, f"missing required key {key!r}")
        return default
    return data[key]


def _as_matrix(value, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "expected a number or nested list of numbers")
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        _fail(path, f"expected a matrix, got {arr.ndim} dimensions")
    return arr

def _as_vector(value, path):
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        _fail(path, "expected a number or list of numbers")
    if arr.ndim != 1:
        _fail(path, f"expected a vector, got {arr.ndim} dimensions")
    return arr


def _as_float(value, path):
    try:
        return float(value)
    except (TypeError, ValueError):
        _fail(path, f"expected a number, got {value!r}")


def _build_system(data):
    if not isinstance(data, dict):
        _fail("system", "must be an object")
    try:
        return DelaySystem(
            A=_as_matrix(_get(data, "system", "A"), "system.A"),
            B=_as_matrix(_get(data, "system", "B"), "system.B"),
            C=_as_matrix(_get(data, "system", "C"), "system.C"),
            D=_as_matrix(_get(data, "system", "D"), "system.D"),
            tau=_as_float(_get(data, "system", "tau"), "system.tau"),
        )
    except ValueError as exc:
        _fail("system", str(exc))


def _build_constraints(data, sys):
    if not isinstance(data, list) or len(data) == 0:
        _fail("constraints", "must be a non-empty list of rows")
    rows = []
    for i, entry in enumerate(data):
        path = f"constraints[{i}]"
        if not isinstance(entry, dict):
            _fail(path, "must be an object with h_x, h_u, g")
        try:
            rows.append(
                ConstraintRow(
                    h_x=_as_vector(_get(entry, path, "h_x"), f"{path}.h_x"),
                    h_u=_as_vector(_get(entry, path, "h_u"), f"{path}.h_u"),
                    g=_as_float(_get(entry, path, "g"), f"{path}.g"),
                )
            )
        except ValueError as exc:
            _fail(path, str(exc))
        if rows[-1].h_x.shape[0] != sys.n:
            _fail(f"{path}.h_x", f"must have length {sys.n}")
        if rows[-1].h_u.shape[0] != sys.m:
            _fail(f"{path}.h_u", f"must have length {sys.m}")
    try:
        return ConstraintSet(rows=tuple(rows))
    except ValueError as exc:
        _fail("constraints", str(exc))


def _build_certificate(data, sys, gain, seed_override=None):
    path = "erg.certificate"
    if not isinstance(data, dict):
        _fail(path, "must be an object")
    if "synthesize" in data:
        spec = data["synthesize"]
        if not isinstance(spec, dict):
            _fail(f"{path}.synthesize", "must be an object")
        variant = _get(spec, f"{path}.synthesize", "variant")
        if variant not in VARIANTS:
            _fail(f"{path}.synthesize.variant", f"must be one of {VARIANTS}")
        seed = spec.get("seed", 0) if seed_override is None else seed_override
        kwargs = {}
        for key in ("restarts", "max_iter"):
            if key in spec:
                kwargs[key] = int(spec[key])
        objective = spec.get("objective", "margin")
        try:
            if objective == "margin":
                return synthesize(variant, sys, gain, seed, **kwargs)
            if objective == "volume":
                _fail(
                    f"{path}.synthesize.objective",
                    "volume synthesis needs the constraint set; use the "
                    "synthesize command instead",
                )
            _fail(f"{path}.synthesize.objective", "must be 'margin' or 'volume'")
        except ScenarioError:
            raise
        except Exception as exc:
            _fail(f"{path}.synthesize", str(exc))
    variant = _get(data, path, "variant")
    if variant == "krasovskii_r" and "Psi2" not in data:
        try:
            P = _as_matrix(_get(data, path, "P"), f"{path}.P")
            R = _as_matrix(_get(data, path, "R"), f"{path}.R")
            seed = data.get("slack_seed", 0)
            Psi2, Psi3 = find_slack(sys, gain, P, R, seed=seed)
            data = dict(data, Psi2=Psi2.tolist(), Psi3=Psi3.tolist())
        except ScenarioError:
            raise
        except Exception as exc:
            _fail(path, f"slack search failed: {exc}")
    try:
        payload = {
            key: (_as_matrix(val, f"{path}.{key}") if key not in ("variant", "q")
                  else val)
            for key, val in data.items()
            if key != "slack_seed"
        }
        return certificate_from_dict(payload)
    except (ValueError, KeyError) as exc:
        _fail(path, str(exc))


def _build_erg(data, sys, gain, seed_override=None):
    if data is None:
        return None
    if not isinstance(data, dict):
        _fail("erg", "must be an object or null")
    variant = data.get("variant", "terminal")
    cert = None
    if "certificate" in data and data["certificate"] is not None:
        cert = _build_certificate(data["certificate"], sys, gain, seed_override)
    try:
        return ErgConfig(
            T=_as_float(_get(data, "erg", "T"), "erg.T"),
            kappa1=_as_float(_get(data, "erg", "kappa1"), "erg.kappa1"),
            kappa2=_as_float(data.get("kappa2", 1.0), "erg.kappa2"),
            eta=_as_float(data.get("eta", 1.0), "erg.eta"),
            zeta=_as_float(_get(data, "erg", "zeta"), "erg.zeta"),
            delta=_as_float(_get(data, "erg", "delta"), "erg.delta"),
            variant=variant,
            update_period=_as_float(data.get("update_period", 0.01),
                                    "erg.update_period"),
            certificate=cert,
        )
    except ValueError as exc:
        _fail("erg", str(exc))


def _build_run(data, sys):
    if not isinstance(data, dict):
        _fail("run", "must be an object")
    dt = _as_float(_get(data, "run", "dt"), "run.dt")
    if dt <= 0.0:
        _fail("run.dt", "must be > 0")
    if dt > sys.tau / 100.0 + 1e-12:
        _fail("run.dt", f"must be <= tau/100 = {sys.tau / 100.0:g} for "
                        "accurate delayed interpolation")
    duration = _as_float(_get(data, "run", "duration"), "run.duration")
    steps = duration / dt
    if duration <= 0.0 or abs(steps - round(steps)) > 1e-6:
        _fail("run.duration", "must be a positive multiple of dt")
    x0 = _as_vector(data.get("x0", np.zeros(sys.n)), "run.x0")
    if x0.shape[0] != sys.n:
        _fail("run.x0", f"must have length {sys.n}")
    v0 = _as_vector(data.get("v0", np.zeros(sys.p)), "run.v0")
    if v0.shape[0] != sys.p:
        _fail("run.v0", f"must have length {sys.p}")
    sched_raw = _get(data, "run", "reference")
    if not isinstance(sched_raw, list) or len(sched_raw) == 0:
        _fail("run.reference", "must be a non-empty list of [time, value] pairs")
    schedule = []
    last_t = None
    for i, entry in enumerate(sched_raw):
        path = f"run.reference[{i}]"
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            _fail(path, "must be a [time, value] pair")
        t_k = _as_float(entry[0], f"{path}[0]")
        r_k = _as_vector(entry[1], f"{path}[1]")
        if r_k.shape[0] != sys.p:
            _fail(f"{path}[1]", f"must have length {sys.p}")
        if i == 0 and abs(t_k) > 1e-12:
            _fail(path, "the first schedule entry must be at time 0")
        if last_t is not None and t_k <= last_t:
            _fail(path, "schedule times must be strictly increasing")
        ratio = t_k / dt
        if abs(ratio - round(ratio)) > 1e-6:
            _fail(path, "schedule times must be multiples of dt")
        last_t = t_k
        schedule.append((t_k, r_k))
    history = None
    if data.get("history") is not None:
        hist = data["history"]
        if not isinstance(hist, dict):
            _fail("run.history", "must be an object with x and v sample rows")
        x_rows = _as_matrix(_get(hist, "run.history", "x"), "run.history.x")
        v_rows = _as_matrix(_get(hist, "run.history", "v"), "run.history.v")
        if x_rows.shape[0] != v_rows.shape[0]:
            _fail("run.history", "x and v must have the same number of rows")
        if x_rows.shape[0] < 2:
            _fail("run.history", "needs at least two rows")
        if x_rows.shape[1] != sys.n:
            _fail("run.history.x", f"rows must have length {sys.n}")
        if v_rows.shape[1] != sys.p:
            _fail("run.history.v", f"rows must have length {sys.p}")
        span = (x_rows.shape[0] - 1) * dt
        if span + 1e-9 < 2.0 * sys.tau:
            _fail("run.history", f"must span at least twice the delay "
                                 f"({2.0 * sys.tau:g}), got {span:g}")
        times = dt * np.arange(-(x_rows.shape[0] - 1), 1)
        if not np.allclose(v_rows[-1], v0):
            _fail("run.history.v", "the newest row must equal run.v0")
        if not np.allclose(x_rows[-1], x0):
            _fail("run.history.x", "the newest row must equal run.x0")
        history = (times, x_rows, v_rows)
    return RunConfig(
        dt=dt, duration=duration, x0=x0, v0=v0,
        reference=tuple(schedule), history=history,
    )


def _build_output(data):
    if data is None:
        return OutputConfig()
    if not isinstance(data, dict):
        _fail("output", "must be an object")
    decimation = int(data.get("decimation", 1))
    if decimation < 1:
        _fail("output.decimation", "must be >= 1")
    return OutputConfig(path=data.get("path"), decimation=decimation)


def scenario_from_dict(data, source="<memory>", seed=None):
    """Validate a scenario dict and build the typed object graph.

    Raises ScenarioError with a dotted path for every semantic problem.
    """
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: scenario root must be an object")
    sys = _build_system(_get(data, source, "system"))
    try:
        gain = PrimaryGain(K=_as_matrix(_get(data, source, "gain")["K"], "gain.K"))
    except (TypeError, KeyError):
        _fail("gain", "must be an object with key 'K'")
    if gain.K.shape != (sys.m, sys.n):
        _fail("gain.K", f"must have shape ({sys.m}, {sys.n})")
    cs = _build_constraints(_get(data, source, "constraints"), sys)
    erg_cfg = _build_erg(data.get("erg"), sys, gain, seed_override=seed)
    run = _build_run(_get(data, source, "run"), sys)
    output = _build_output(data.get("output"))

    if erg_cfg is not None:
        try:
            erg_cfg.validate_grid(sys, run.dt)
        except ValueError as exc:
            _fail("erg", str(exc))
        if erg_cfg.certificate is not None:
            tag = positivity_violation(erg_cfg.certificate)
            if tag is not None:
                _fail("erg.certificate", tag)
            if not lmi_feasible(erg_cfg.certificate, sys, gain,
                                margin=DEFAULT_LMI_MARGIN):
                _fail(
                    "erg.certificate",
                    "does not certify the closed loop (decrease test failed "
                    f"at margin {DEFAULT_LMI_MARGIN:g})",
                )
        if sys.n != sys.p:
            _fail("erg", "governed runs need matching state and reference "
                         f"dimensions for repulsion terms, got n={sys.n}, "
                         f"p={sys.p}")

    # At least one probe reference must be strictly admissible.
    probes = [run.v0] + [r_k for _, r_k in run.reference]
    admissible = []
    for probe in probes:
        try:
            eq = steady_state(sys, probe)
        except Exception:
            continue
        admissible.append(bool(np.all(residuals(cs, eq.x_bar, eq.u_bar) > 0.0)))
    if not any(admissible):
        _fail("run", "no probe reference (v0 or scheduled value) is strictly "
                     "admissible; the constrained problem is empty")
    if erg_cfg is not None:
        try:
            eq0 = steady_state(sys, run.v0)
        except Exception as exc:
            _fail("run.v0", f"has no steady state: {exc}")
        res0 = residuals(cs, eq0.x_bar, eq0.u_bar)
        if np.any(res0 < erg_cfg.delta - 1e-12):
            _fail("run.v0", "must start at least delta inside the constraints "
                            f"(min residual {res0.min():.6g} < {erg_cfg.delta:g})")

    return Scenario(
        system=sys, gain=gain, constraints=cs, erg=erg_cfg, run=run,
        output=output, name=str(data.get("name", "scenario")),
    )


def load_scenario(path, seed=None):
    """Load and validate a scenario JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    return scenario_from_dict(data, source=str(path), seed=seed)


def with_overrides(scenario, dt=None, duration=None, out=None, decimation=None):
    """Copy a scenario with run/output fields replaced (grid kept valid)."""
    run = scenario.run
    if dt is not None or duration is not None:
        run = replace(
            run,
            dt=float(dt) if dt is not None else run.dt,
            duration=float(duration) if duration is not None else run.duration,
        )
    output = scenario.output
    if out is not None or decimation is not None:
        output = replace(
            output,
            path=out if out is not None else output.path,
            decimation=int(decimation) if decimation is not None
            else output.decimation,
        )
    return replace(scenario, run=run, output=output)


# ---------------------------------------------------------------------------
# Presets: a scalar flow loop with one rate limit, mild and aggressive gains.

_FLOW = {
    "system": {"A": -0.82, "B": 0.7279, "C": 1.0, "D": 0.0, "tau": 0.8},
    "constraints": [{"h_x": -1.0, "h_u": 0.0, "g": 26.6}],
    "run": {
        "dt": 0.001,
        "duration": 60.0,
        "x0": 0.0,
        "v0": 0.0,
        "reference": [[0.0, 26.0]],
    },
}

_ERG_COMMON = {
    "kappa1": 50.0,
    "kappa2": 20.0,
    "eta": 1.0,
    "zeta": 0.5,
    "delta": 0.1,
    "update_period": 0.01,
}


def _flow_dict(name, k, erg):
    data = json.loads(json.dumps(_FLOW))  # deep copy
    data["name"] = name
    data["gain"] = {"K": k}
    data["erg"] = erg
    return data


def _erg_block(variant, T, certificate=None):
    block = dict(_ERG_COMMON, variant=variant, T=T)
    if certificate is not None:
        block["certificate"] = certificate
    return block


_PRESET_BUILDERS = {
    "norg": lambda: _flow_dict("norg", -1.0, None),
    "erg1": lambda: _flow_dict(
        "erg1", -1.0, _erg_block("infinite_horizon", 7.0)
    ),
    "erg2": lambda: _flow_dict(
        "erg2", -1.0,
        _erg_block("terminal", 0.7,
                   {"variant": "razumikhin", "P": 1.0, "q": 0.82}),
    ),
    "erg3": lambda: _flow_dict(
        "erg3", -1.0,
        _erg_block("terminal", 0.7,
                   {"variant": "krasovskii_q", "P": 1.0, "Q": 0.86}),
    ),
    "erg4": lambda: _flow_dict(
        "erg4", -1.0,
        _erg_block("terminal", 0.7,
                   {"variant": "krasovskii_r", "P": 1.0, "R": 0.95,
                    "Psi2": 0.5, "Psi3": 0.5}),
    ),
    "aggressive-norg": lambda: _flow_dict("aggressive-norg", -1.68, None),
    "aggressive-erg1": lambda: _flow_dict(
        "aggressive-erg1", -1.68, _erg_block("infinite_horizon", 7.0)
    ),
    "aggressive-erg4": lambda: _flow_dict(
        "aggressive-erg4", -1.68,
        _erg_block("terminal", 0.7,
                   {"variant": "krasovskii_r", "P": 1.0, "R": 0.64,
                    "Psi2": 0.5, "Psi3": 0.5}),
    ),
}


def preset_names():
    return sorted(_PRESET_BUILDERS)


def _canonical_preset(name):
    if name in _PRESET_BUILDERS:
        return name
    if name.startswith("flow-") and name[5:] in _PRESET_BUILDERS:
        return name[5:]
    return None


def is_preset(name):
    return _canonical_preset(name) is not None


def preset_dict(name):
    """The scenario dict behind a preset (accepts a ``flow-`` prefix)."""
    canonical = _canonical_preset(name)
    if canonical is None:
        raise ScenarioError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return _PRESET_BUILDERS[canonical]()


def preset_scenario(name):
    return scenario_from_dict(preset_dict(name), source=f"preset:{name}")
