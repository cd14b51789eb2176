"""Closed-loop simulation engine.

Per step k the loop runs: measure y(k); projection-update the PG estimate
from dy(k) and the increment window at k-1; apply the reset rule; feed the
forecaster; assemble the prediction matrices from current + forecast
estimates; compute the control increment (predictive, one-step, or PID
path); apply it; step the plant to y(k+1).  Everything is recorded per step,
including the spectral radius of the increment-window companion matrix and
its first-row-sum sufficient bound.

Steps before ``plant.control_start`` are seed steps: outputs and inputs come
from the plant's initial history and no estimation or control runs.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .controller import (
    MfapcConfig,
    PidConfig,
    PidState,
    mfac_control_increment,
    mfac_prediction_matrices,
    mfapc_apply,
    mfapc_control_increment,
    mfapc_nu1_control_increment,
    pid_step,
)
from .estimator import (
    EstimatorState,
    ForecasterState,
    estimate_pg,
    forecast_pg,
    forecaster_observe,
    reset_condition,
    reset_pg,
)
from .model import assemble_prediction
from .plants import preview_vector

CONTROLLER_KINDS = ("mfapc", "mfac", "pid")


@dataclass
class SimTrace:
    """Per-step record arrays; row i holds step k = ks[i]."""

    ks: np.ndarray
    y: np.ndarray
    y_star: np.ndarray
    e: np.ndarray
    u: np.ndarray
    du: np.ndarray
    phi: np.ndarray
    sigma_a: np.ndarray
    lemma1_bound: np.ndarray
    reset_flag: np.ndarray

    def __len__(self):
        return self.ks.size

    @property
    def order(self):
        return self.phi.shape[1]


@dataclass
class Metrics:
    """Tracking-error summary over the recorded horizon.

    ``e_itae`` is the plain absolute-error sum (the benchmark's headline
    index); ``itae_time_weighted`` is the classical time-weighted variant,
    reported alongside for completeness.
    """

    e_itae: float
    itae_time_weighted: float
    rmse: float
    max_abs_error: float
    final_abs_error: float
    settling: tuple = ()

    def to_dict(self):
        return {
            "e_itae": self.e_itae,
            "itae_time_weighted": self.itae_time_weighted,
            "rmse": self.rmse,
            "max_abs_error": self.max_abs_error,
            "final_abs_error": self.final_abs_error,
            "settling": [
                {"switch_k": int(k), "steps_to_band": (None if s is None else int(s))}
                for k, s in self.settling
            ],
        }


@dataclass
class DiagnosticsReport:
    """Stability-facing per-step quantities and their run-level summary."""

    sigma_a: np.ndarray
    lemma1_bound: np.ndarray
    pg_norm: np.ndarray
    du_window_norm: np.ndarray
    pg_bound: float | None
    pg_bound_violations: int
    max_du_window_norm: float
    max_sigma_a: float
    max_lemma1_bound: float
    lemma1_consistent: bool


@dataclass
class RunResult:
    trace: SimTrace
    metrics: Metrics
    diagnostics: DiagnosticsReport


@dataclass(frozen=True)
class LoopSpec:
    """Everything the loop needs besides the plant and the reference."""

    controller: str
    mfapc: MfapcConfig
    estimator: EstimatorState
    forecaster: ForecasterState
    pid: PidConfig | None = None
    preview: bool = True
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.controller not in CONTROLLER_KINDS:
            raise ValueError(f"controller must be one of {CONTROLLER_KINDS}")
        if self.controller == "pid" and self.pid is None:
            raise ValueError("pid controller selected but no PID gains given")
        if self.estimator.order != self.mfapc.L:
            raise ValueError(
                f"estimator order {self.estimator.order} != controller L={self.mfapc.L}"
            )
        if self.controller == "mfac" and (self.mfapc.N != 1 or self.mfapc.Nu != 1):
            raise ValueError("the one-step controller requires N = Nu = 1")


class SimulationDiverged(RuntimeError):
    """Raised when |y| escapes the divergence guard; carries the partial trace."""

    def __init__(self, step, trace):
        super().__init__(f"simulation diverged at step {step}")
        self.step = step
        self.trace = trace


def stability_diagnostic(pm, lam, rho):
    """(spectral radius, first-row sufficient bound) of the companion matrix.

    Built from the same solve the controller uses: P is the first row of
    [psi~^T psi~ + lam I]^{-1} psi~^T and the companion's first row is
    -rho_{j+1} * P psi_bar_j with a trailing zero.
    """
    rho_arr = np.asarray(rho, dtype=np.float64)
    sigma, bound = K.stability_diag(pm.psi_tilde, pm.psi_bar, float(lam), rho_arr)
    return float(sigma), float(bound)


def _window(du, k, order):
    """Newest-first increment window [du(k), ..., du(k-order+1)]; du(<=0) = 0."""
    out = np.zeros(order)
    for i in range(order):
        j = k - i
        if j >= 1:
            out[i] = du[j]
    return out


def run_closed_loop(plant, reference, spec, steps):
    """Run the loop for ``steps`` steps and return (trace, metrics, diagnostics).

    Raises :class:`SimulationDiverged` (with the partial trace attached) when
    the output magnitude exceeds ``spec.divergence_limit``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if plant.t_max is not None and steps > plant.t_max:
        raise ValueError(f"plant supports at most {plant.t_max} steps")
    cfg = spec.mfapc
    order = cfg.L
    start = max(plant.control_start, order)

    y, u = plant.init_arrays(steps)
    du = np.zeros(steps + 1)
    du[1:] = np.diff(u[: steps + 1])  # seed-era increments (normally zero)

    t = steps
    ks = np.arange(1, t + 1)
    tr_y = np.zeros(t)
    tr_ystar = np.zeros(t)
    tr_u = np.zeros(t)
    tr_du = np.zeros(t)
    tr_phi = np.zeros((t, order))
    tr_sigma = np.zeros(t)
    tr_bound = np.zeros(t)
    tr_reset = np.zeros(t, dtype=np.int64)
    du_window_norm = np.zeros(t)

    es = spec.estimator
    fs = spec.forecaster
    pid_state = PidState(u=float(u[start - 1])) if spec.controller == "pid" else None

    def _trace_upto(n_rows):
        sl = slice(0, n_rows)
        ystar_rows = tr_ystar[sl]
        return SimTrace(
            ks=ks[sl].copy(),
            y=tr_y[sl].copy(),
            y_star=ystar_rows.copy(),
            e=(ystar_rows - tr_y[sl]).copy(),
            u=tr_u[sl].copy(),
            du=tr_du[sl].copy(),
            phi=tr_phi[sl].copy(),
            sigma_a=tr_sigma[sl].copy(),
            lemma1_bound=tr_bound[sl].copy(),
            reset_flag=tr_reset[sl].copy(),
        )

    # seed-era rows: no estimation or control has run yet
    for k in range(1, start):
        i = k - 1
        tr_y[i] = y[k]
        tr_ystar[i] = reference.value(k)
        tr_u[i] = u[k]
        tr_du[i] = du[k]
        tr_phi[i] = es.phi_hat

    for k in range(start, t + 1):
        i = k - 1
        dy = y[k] - y[k - 1]
        w_prev = _window(du, k - 1, order)
        es = estimate_pg(es, dy, w_prev)
        fired = reset_condition(es)
        es = reset_pg(es)
        fs = forecaster_observe(fs, es.phi_hat)
        phi = es.phi_hat

        if spec.controller == "pid":
            e_ctrl = reference.value(k + 1) - y[k]
            u_k = pid_step(spec.pid, e_ctrl, pid_state)
            du_k = u_k - u[k - 1]
            sigma, bound = 0.0, 0.0
        elif spec.controller == "mfac":
            y_star1 = reference.value(k + 1)
            du_k = mfac_control_increment(
                phi, y[k], y_star1, w_prev, cfg.lam, cfg.rho_array
            )
            sigma, bound = stability_diagnostic(
                mfac_prediction_matrices(phi), cfg.lam, cfg.rho_array
            )
        else:
            if cfg.N > 1:
                fore = forecast_pg(fs, es.history, cfg.N - 1)
                phi_seq = np.vstack([phi[None, :], fore])
            else:
                phi_seq = phi[None, :]
            pm = assemble_prediction(phi_seq, cfg.Nu)
            if spec.preview:
                ys = preview_vector(reference, k, cfg.N)
            else:
                ys = np.full(cfg.N, reference.value(k + 1))
            if cfg.Nu == 1:
                du_k = mfapc_nu1_control_increment(cfg, pm, y[k], ys, w_prev)
            else:
                du_vec = mfapc_control_increment(cfg, pm, y[k], ys, w_prev)
                du_k = mfapc_apply(du_vec, u[k - 1]) - u[k - 1]
            sigma, bound = stability_diagnostic(pm, cfg.lam, cfg.rho_array)

        u[k] = u[k - 1] + du_k
        du[k] = du_k

        tr_y[i] = y[k]
        tr_ystar[i] = reference.value(k)
        tr_u[i] = u[k]
        tr_du[i] = du[k]
        tr_phi[i] = phi
        tr_sigma[i] = sigma
        tr_bound[i] = bound
        tr_reset[i] = 1 if fired else 0
        du_window_norm[i] = float(np.linalg.norm(_window(du, k, order)))

        if k < t:
            y_next = plant.output(k + 1, y, u)
            if not np.isfinite(y_next) or abs(y_next) > spec.divergence_limit:
                raise SimulationDiverged(k + 1, _trace_upto(k))
            y[k + 1] = y_next

    trace = _trace_upto(t)
    metrics = compute_metrics(trace)
    diagnostics = _diagnostics(trace, du_window_norm, es.pg_bound)
    return RunResult(trace, metrics, diagnostics)


def _diagnostics(trace, du_window_norm, pg_bound):
    pg_norm = np.linalg.norm(trace.phi, axis=1)
    violations = 0
    if pg_bound is not None:
        violations = int(np.sum(pg_norm > pg_bound + 1e-12))
    below = trace.lemma1_bound < 1.0
    consistent = bool(np.all(trace.sigma_a[below] < 1.0))
    return DiagnosticsReport(
        sigma_a=trace.sigma_a,
        lemma1_bound=trace.lemma1_bound,
        pg_norm=pg_norm,
        du_window_norm=du_window_norm[: len(trace)],
        pg_bound=pg_bound,
        pg_bound_violations=violations,
        max_du_window_norm=float(du_window_norm[: len(trace)].max()),
        max_sigma_a=float(trace.sigma_a.max()),
        max_lemma1_bound=float(trace.lemma1_bound.max()),
        lemma1_consistent=consistent,
    )


def compute_metrics(trace, settle_band_frac=0.05):
    """Error indices over the recorded horizon.

    Settling info: for every reference switch, the number of steps until
    |e| first re-enters a band of ``settle_band_frac`` times the switch
    magnitude (None when it never does before the next switch).
    """
    if len(trace) == 0:
        raise ValueError("cannot compute metrics of an empty trace")
    e = trace.e
    abs_e = np.abs(e)
    settling = []
    switch_idx = np.nonzero(np.diff(trace.y_star) != 0.0)[0] + 1
    boundaries = list(switch_idx) + [len(trace)]
    for pos, idx in enumerate(switch_idx):
        band = settle_band_frac * abs(trace.y_star[idx] - trace.y_star[idx - 1])
        stop = boundaries[pos + 1]
        inside = np.nonzero(abs_e[idx:stop] <= band)[0]
        settling.append(
            (int(trace.ks[idx]), int(inside[0]) if inside.size else None)
        )
    return Metrics(
        e_itae=float(abs_e.sum()),
        itae_time_weighted=float((trace.ks * abs_e).sum()),
        rmse=float(np.sqrt(np.mean(e * e))),
        max_abs_error=float(abs_e.max()),
        final_abs_error=float(abs_e[-1]),
        settling=tuple(settling),
    )


def _fmt(x):
    return repr(float(x))


def write_trace_csv(trace, path):
    """Exact column order: k,y,y_star,e,u,du,phi_1..phi_L,sigma_A,lemma1_bound,reset_flag."""
    order = trace.order
    header = (
        ["k", "y", "y_star", "e", "u", "du"]
        + [f"phi_{j + 1}" for j in range(order)]
        + ["sigma_A", "lemma1_bound", "reset_flag"]
    )
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(trace)):
            row = [str(int(trace.ks[i]))]
            row += [_fmt(v) for v in (trace.y[i], trace.y_star[i], trace.e[i], trace.u[i], trace.du[i])]
            row += [_fmt(trace.phi[i, j]) for j in range(order)]
            row += [_fmt(trace.sigma_a[i]), _fmt(trace.lemma1_bound[i])]
            row.append(str(int(trace.reset_flag[i])))
            fh.write(",".join(row) + "\n")


def write_diagnostics_csv(trace, diagnostics, path):
    header = ["k", "sigma_A", "lemma1_bound", "pg_norm", "du_window_norm"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(trace)):
            row = [
                str(int(trace.ks[i])),
                _fmt(diagnostics.sigma_a[i]),
                _fmt(diagnostics.lemma1_bound[i]),
                _fmt(diagnostics.pg_norm[i]),
                _fmt(diagnostics.du_window_norm[i]),
            ]
            fh.write(",".join(row) + "\n")


def write_metrics_json(metrics, diagnostics, path, extra=None):
    payload = dict(extra or {})
    payload.update(metrics.to_dict())
    payload.update(
        {
            "max_sigma_a": diagnostics.max_sigma_a,
            "max_lemma1_bound": diagnostics.max_lemma1_bound,
            "lemma1_consistent": diagnostics.lemma1_consistent,
            "pg_bound_violations": diagnostics.pg_bound_violations,
            "max_du_window_norm": diagnostics.max_du_window_norm,
        }
    )
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
