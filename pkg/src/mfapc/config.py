"""Experiment configuration files.

Flat INI-style sections ([controller], [estimator], [plant], [reference],
[run]) chosen for diffability.  Parsing is strict: unknown sections or keys,
or keys that do not apply to the selected kind, are rejected with an error
naming the offending field.  :meth:`ExperimentConfig.to_text` emits the
canonical form (fixed key order, repr'd floats), and parse(to_text(x)) == x.
"""

import configparser
import os
from dataclasses import dataclass, replace

from .controller import MfapcConfig, PidConfig
from .estimator import EstimatorState, ForecasterState
from .plants import (
    ConstantReference,
    Example1Plant,
    SquareWaveReference,
    SyntheticLinearPlant,
    TableReference,
)
from .simloop import LoopSpec


class ConfigError(ValueError):
    """A config problem, carrying the dotted field name it refers to."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _fmt_float(x):
    return repr(float(x))


def _fmt_list(xs):
    return ", ".join(_fmt_float(x) for x in xs)


def _fmt_bool(b):
    return "true" if b else "false"


@dataclass(frozen=True)
class ControllerSection:
    kind: str = "mfapc"
    horizon: int = 3
    control_horizon: int = 3
    order: int = 2
    lam: float = 0.01
    rho: tuple = (0.5, 0.5, 0.5)
    pg_bound: float = 10.0
    kp: float = 0.15
    ti: float = 0.5
    td: float = 0.0


@dataclass(frozen=True)
class EstimatorSection:
    phi_init: tuple = (1.0, 0.0)
    eta: float = 0.5
    mu: float = 2.0
    epsilon: float = 1e-5
    clamp: bool = True
    forecaster: str = "hold"
    forecast_order: int = 3
    forecast_ridge: float = 1e-6


@dataclass(frozen=True)
class PlantSection:
    kind: str = "example1"
    literal_lags: bool = False
    switch_k: int | None = 200
    noise_std: float = 0.0
    phi_true: tuple = (1.5, 0.4)
    y0: float = 0.0


@dataclass(frozen=True)
class ReferenceSection:
    kind: str = "square"
    amplitude: float = 5.0
    half_period: int = 80
    value: float = 5.0
    path: str = ""


@dataclass(frozen=True)
class RunSection:
    label: str = "run"
    steps: int = 400
    preview: bool = True
    seed: int = 0
    out_dir: str = ""


_CONTROLLER_KEYS = {
    "mfapc": ("kind", "horizon", "control_horizon", "order", "lambda", "rho", "pg_bound"),
    "mfac": ("kind", "order", "lambda", "rho", "pg_bound"),
    "pid": ("kind", "kp", "ti", "td"),
}
_ESTIMATOR_KEYS = (
    "phi_init", "eta", "mu", "epsilon", "clamp",
    "forecaster", "forecast_order", "forecast_ridge",
)
_PLANT_KEYS = {
    "example1": ("kind", "literal_lags", "switch_k", "noise_std"),
    "linear_pfdl": ("kind", "phi_true", "y0"),
}
_REFERENCE_KEYS = {
    "square": ("kind", "amplitude", "half_period"),
    "constant": ("kind", "value"),
    "table": ("kind", "path"),
}
_RUN_KEYS = ("label", "steps", "preview", "seed", "out_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    controller: ControllerSection = ControllerSection()
    estimator: EstimatorSection = EstimatorSection()
    plant: PlantSection = PlantSection()
    reference: ReferenceSection = ReferenceSection()
    run: RunSection = RunSection()
    base_dir: str = "."

    # -- serialization ------------------------------------------------------

    def to_text(self):
        """Canonical file form; parse(to_text(cfg)) == cfg."""
        c, e, p, r, run = self.controller, self.estimator, self.plant, self.reference, self.run
        lines = ["[controller]", f"kind = {c.kind}"]
        if c.kind in ("mfapc", "mfac"):
            if c.kind == "mfapc":
                lines.append(f"horizon = {c.horizon}")
                lines.append(f"control_horizon = {c.control_horizon}")
            lines.append(f"order = {c.order}")
            lines.append(f"lambda = {_fmt_float(c.lam)}")
            lines.append(f"rho = {_fmt_list(c.rho)}")
            lines.append(f"pg_bound = {_fmt_float(c.pg_bound)}")
        else:
            lines.append(f"kp = {_fmt_float(c.kp)}")
            lines.append(f"ti = {_fmt_float(c.ti)}")
            lines.append(f"td = {_fmt_float(c.td)}")
        lines += [
            "",
            "[estimator]",
            f"phi_init = {_fmt_list(e.phi_init)}",
            f"eta = {_fmt_float(e.eta)}",
            f"mu = {_fmt_float(e.mu)}",
            f"epsilon = {_fmt_float(e.epsilon)}",
            f"clamp = {_fmt_bool(e.clamp)}",
            f"forecaster = {e.forecaster}",
            f"forecast_order = {e.forecast_order}",
            f"forecast_ridge = {_fmt_float(e.forecast_ridge)}",
            "",
            "[plant]",
            f"kind = {p.kind}",
        ]
        if p.kind == "example1":
            lines.append(f"literal_lags = {_fmt_bool(p.literal_lags)}")
            lines.append(f"switch_k = {'none' if p.switch_k is None else p.switch_k}")
            lines.append(f"noise_std = {_fmt_float(p.noise_std)}")
        else:
            lines.append(f"phi_true = {_fmt_list(p.phi_true)}")
            lines.append(f"y0 = {_fmt_float(p.y0)}")
        lines += ["", "[reference]", f"kind = {r.kind}"]
        if r.kind == "square":
            lines.append(f"amplitude = {_fmt_float(r.amplitude)}")
            lines.append(f"half_period = {r.half_period}")
        elif r.kind == "constant":
            lines.append(f"value = {_fmt_float(r.value)}")
        else:
            lines.append(f"path = {r.path}")
        lines += [
            "",
            "[run]",
            f"label = {run.label}",
            f"steps = {run.steps}",
            f"preview = {_fmt_bool(run.preview)}",
            f"seed = {run.seed}",
            f"out_dir = {run.out_dir}",
            "",
        ]
        return "\n".join(lines)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    # -- domain-object construction ----------------------------------------

    def mfapc_config(self):
        c = self.controller
        if c.kind == "pid":
            order = len(self.estimator.phi_init)
            return MfapcConfig(N=1, Nu=1, L=order, lam=0.01, rho=(0.5,) * (order + 1))
        n, nu = (1, 1) if c.kind == "mfac" else (c.horizon, c.control_horizon)
        return MfapcConfig(N=n, Nu=nu, L=c.order, lam=c.lam, rho=c.rho, pg_bound=c.pg_bound)

    def build(self):
        """Construct (plant, reference, loop spec, steps) for the simulator."""
        p = self.plant
        if p.kind == "example1":
            plant = Example1Plant(
                literal_lags=p.literal_lags,
                switch_k=p.switch_k,
                noise_std=p.noise_std,
                seed=self.run.seed,
            )
        else:
            plant = SyntheticLinearPlant(p.phi_true, y0=p.y0)
        r = self.reference
        if r.kind == "square":
            reference = SquareWaveReference(r.amplitude, r.half_period)
        elif r.kind == "constant":
            reference = ConstantReference(r.value)
        else:
            reference = TableReference.from_csv(os.path.join(self.base_dir, r.path))
        cfg = self.mfapc_config()
        e = self.estimator
        try:
            est = EstimatorState.initial(
                e.phi_init,
                eta=e.eta,
                mu=e.mu,
                epsilon=e.epsilon,
                pg_bound=cfg.pg_bound if e.clamp else None,
                n_history=e.forecast_order,
            )
            forecaster = ForecasterState(
                mode=e.forecaster,
                n_p=e.forecast_order,
                ridge=e.forecast_ridge,
                pg_bound=cfg.pg_bound,
            )
            pid = PidConfig(self.controller.kp, self.controller.ti, self.controller.td)
            spec = LoopSpec(
                controller=self.controller.kind,
                mfapc=cfg,
                estimator=est,
                forecaster=forecaster,
                pid=pid if self.controller.kind == "pid" else None,
                preview=self.run.preview,
            )
        except ValueError as exc:
            raise ConfigError("config", str(exc)) from exc
        return plant, reference, spec, self.run.steps


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class _Section:
    def __init__(self, name, items):
        self.name = name
        self._items = dict(items)

    def take(self, key):
        return self._items.pop(key, None)

    def leftover(self):
        return sorted(self._items)


def _to_int(section, key, raw, default):
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None


def _to_float(section, key, raw, default):
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number, got {raw!r}") from None


def _to_bool(section, key, raw, default):
    if raw is None:
        return default
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{section}.{key}", f"expected true/false, got {raw!r}")


def _to_floats(section, key, raw, default):
    if raw is None:
        return default
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number list, got {raw!r}") from None


def _to_choice(section, key, raw, default, choices):
    if raw is None:
        return default
    val = raw.strip().lower()
    if val not in choices:
        raise ConfigError(f"{section}.{key}", f"must be one of {sorted(choices)}, got {raw!r}")
    return val


def parse_config_text(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", f"malformed config: {exc}") from exc

    known = {"controller", "estimator", "plant", "reference", "run"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown section")

    def section(name):
        return _Section(name, cp.items(name) if cp.has_section(name) else [])

    sc = section("controller")
    kind = _to_choice("controller", "kind", sc.take("kind"), "mfapc", set(_CONTROLLER_KEYS))
    ctrl = ControllerSection(
        kind=kind,
        horizon=_to_int("controller", "horizon", sc.take("horizon") if kind == "mfapc" else None, 3),
        control_horizon=_to_int(
            "controller", "control_horizon", sc.take("control_horizon") if kind == "mfapc" else None, 3
        ),
        order=_to_int("controller", "order", sc.take("order") if kind != "pid" else None, 2),
        lam=_to_float("controller", "lambda", sc.take("lambda") if kind != "pid" else None, 0.01),
        rho=_to_floats("controller", "rho", sc.take("rho") if kind != "pid" else None, (0.5, 0.5, 0.5)),
        pg_bound=_to_float("controller", "pg_bound", sc.take("pg_bound") if kind != "pid" else None, 10.0),
        kp=_to_float("controller", "kp", sc.take("kp") if kind == "pid" else None, 0.15),
        ti=_to_float("controller", "ti", sc.take("ti") if kind == "pid" else None, 0.5),
        td=_to_float("controller", "td", sc.take("td") if kind == "pid" else None, 0.0),
    )
    if sc.leftover():
        raise ConfigError(f"controller.{sc.leftover()[0]}", f"unknown key for kind {kind!r}")

    se = section("estimator")
    est = EstimatorSection(
        phi_init=_to_floats("estimator", "phi_init", se.take("phi_init"), (1.0, 0.0)),
        eta=_to_float("estimator", "eta", se.take("eta"), 0.5),
        mu=_to_float("estimator", "mu", se.take("mu"), 2.0),
        epsilon=_to_float("estimator", "epsilon", se.take("epsilon"), 1e-5),
        clamp=_to_bool("estimator", "clamp", se.take("clamp"), True),
        forecaster=_to_choice("estimator", "forecaster", se.take("forecaster"), "hold", {"hold", "ar"}),
        forecast_order=_to_int("estimator", "forecast_order", se.take("forecast_order"), 3),
        forecast_ridge=_to_float("estimator", "forecast_ridge", se.take("forecast_ridge"), 1e-6),
    )
    if se.leftover():
        raise ConfigError(f"estimator.{se.leftover()[0]}", "unknown key")

    sp = section("plant")
    pkind = _to_choice("plant", "kind", sp.take("kind"), "example1", set(_PLANT_KEYS))
    switch_raw = sp.take("switch_k") if pkind == "example1" else None
    if switch_raw is not None and switch_raw.strip().lower() in ("none", "off"):
        switch_k = None
    else:
        switch_k = _to_int("plant", "switch_k", switch_raw, 200)
    plant = PlantSection(
        kind=pkind,
        literal_lags=_to_bool(
            "plant", "literal_lags", sp.take("literal_lags") if pkind == "example1" else None, False
        ),
        switch_k=switch_k,
        noise_std=_to_float("plant", "noise_std", sp.take("noise_std") if pkind == "example1" else None, 0.0),
        phi_true=_to_floats("plant", "phi_true", sp.take("phi_true") if pkind == "linear_pfdl" else None, (1.5, 0.4)),
        y0=_to_float("plant", "y0", sp.take("y0") if pkind == "linear_pfdl" else None, 0.0),
    )
    if sp.leftover():
        raise ConfigError(f"plant.{sp.leftover()[0]}", f"unknown key for kind {pkind!r}")

    sr = section("reference")
    rkind = _to_choice("reference", "kind", sr.take("kind"), "square", set(_REFERENCE_KEYS))
    ref = ReferenceSection(
        kind=rkind,
        amplitude=_to_float("reference", "amplitude", sr.take("amplitude") if rkind == "square" else None, 5.0),
        half_period=_to_int("reference", "half_period", sr.take("half_period") if rkind == "square" else None, 80),
        value=_to_float("reference", "value", sr.take("value") if rkind == "constant" else None, 5.0),
        path=(sr.take("path") or "") if rkind == "table" else "",
    )
    if sr.leftover():
        raise ConfigError(f"reference.{sr.leftover()[0]}", f"unknown key for kind {rkind!r}")

    su = section("run")
    runsec = RunSection(
        label=su.take("label") or "run",
        steps=_to_int("run", "steps", su.take("steps"), 400),
        preview=_to_bool("run", "preview", su.take("preview"), True),
        seed=_to_int("run", "seed", su.take("seed"), 0),
        out_dir=su.take("out_dir") or "",
    )
    if su.leftover():
        raise ConfigError(f"run.{su.leftover()[0]}", "unknown key")

    cfg = ExperimentConfig(ctrl, est, plant, ref, runsec, base_dir=base_dir)
    validate_config(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)))


def validate_config(cfg):
    c, e = cfg.controller, cfg.estimator
    if c.kind in ("mfapc", "mfac"):
        if c.kind == "mfapc":
            if c.horizon < 1:
                raise ConfigError("controller.horizon", f"must be >= 1, got {c.horizon}")
            if not 1 <= c.control_horizon <= c.horizon:
                raise ConfigError(
                    "controller.control_horizon",
                    f"Nu={c.control_horizon} must satisfy 1 <= Nu <= N={c.horizon}",
                )
        if c.order < 1:
            raise ConfigError("controller.order", f"must be >= 1, got {c.order}")
        if c.lam <= 0:
            raise ConfigError("controller.lambda", f"must be > 0, got {c.lam}")
        if len(c.rho) != c.order + 1:
            raise ConfigError(
                "controller.rho", f"need order+1 = {c.order + 1} weights, got {len(c.rho)}"
            )
        if any(not 0 < r <= 1 for r in c.rho):
            raise ConfigError("controller.rho", "weights must lie in (0, 1]")
        if c.pg_bound <= 0:
            raise ConfigError("controller.pg_bound", "must be > 0")
        if len(e.phi_init) != c.order:
            raise ConfigError(
                "estimator.phi_init",
                f"length {len(e.phi_init)} != controller order {c.order}",
            )
    else:
        if c.kp < 0:
            raise ConfigError("controller.kp", "must be >= 0")
        if c.td < 0:
            raise ConfigError("controller.td", "must be >= 0")
    if not 0 < e.eta <= 2:
        raise ConfigError("estimator.eta", f"must be in (0, 2], got {e.eta}")
    if e.mu <= 0:
        raise ConfigError("estimator.mu", f"must be > 0, got {e.mu}")
    if e.epsilon <= 0:
        raise ConfigError("estimator.epsilon", f"must be > 0, got {e.epsilon}")
    if e.forecast_order < 1:
        raise ConfigError("estimator.forecast_order", "must be >= 1")
    if e.forecast_ridge <= 0:
        raise ConfigError("estimator.forecast_ridge", "must be > 0")
    if cfg.plant.kind == "example1" and cfg.plant.noise_std < 0:
        raise ConfigError("plant.noise_std", "must be >= 0")
    if cfg.reference.kind == "square" and cfg.reference.half_period < 1:
        raise ConfigError("reference.half_period", "must be >= 1")
    if cfg.reference.kind == "table" and not cfg.reference.path:
        raise ConfigError("reference.path", "required for table references")
    if cfg.run.steps < 1:
        raise ConfigError("run.steps", f"must be >= 1, got {cfg.run.steps}")


# ---------------------------------------------------------------------------
# sweep parameter overrides
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("lambda", "N", "Nu", "eta", "mu", "rho")


def apply_override(cfg, param, value):
    """Return a new config with one tunable replaced (sweep support).

    ``rho`` sets every weight; ``rho<i>`` (1-based) sets one.  Sweeping N
    clamps Nu to min(Nu, N) so every swept horizon stays feasible.
    """
    c = cfg.controller
    if param == "lambda":
        ctrl = replace(c, lam=float(value))
    elif param == "N":
        n = int(value)
        ctrl = replace(c, horizon=n, control_horizon=min(c.control_horizon, n))
    elif param == "Nu":
        ctrl = replace(c, control_horizon=int(value))
    elif param == "eta":
        return _with_estimator(cfg, replace(cfg.estimator, eta=float(value)))
    elif param == "mu":
        return _with_estimator(cfg, replace(cfg.estimator, mu=float(value)))
    elif param == "rho":
        ctrl = replace(c, rho=(float(value),) * len(c.rho))
    elif param.startswith("rho") and param[3:].isdigit():
        idx = int(param[3:]) - 1
        if not 0 <= idx < len(c.rho):
            raise ConfigError("sweep.param", f"rho index out of range: {param}")
        rho = list(c.rho)
        rho[idx] = float(value)
        ctrl = replace(c, rho=tuple(rho))
    else:
        raise ConfigError(
            "sweep.param", f"unknown parameter {param!r}; expected one of {SWEEP_PARAMS} or rho<i>"
        )
    out = replace(cfg, controller=ctrl)
    validate_config(out)
    return out


def _with_estimator(cfg, est):
    out = replace(cfg, estimator=est)
    validate_config(out)
    return out
