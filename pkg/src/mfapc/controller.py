"""Control laws built on the PFDL prediction model.

The receding-horizon law minimizes the squared N-step tracking error plus a
lambda-weighted move penalty; with all tuning weights rho_i = 1 the closed
form below is exactly that minimizer.  The rho weights enter the closed form
as extra degrees of freedom (rho_1 scales the error push, rho_2..rho_{L+1}
scale the contribution of past increments), so optimality is only claimed
for rho = 1.

Degenerate cases: Nu = 1 admits a division-only form (no factorization),
and N = Nu = 1 collapses to the one-step-optimal non-predictive law.
A velocity-form PID is included as the conventional baseline.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .model import PredictionMatrices, _as_float_vector, _phi_values, _window_values


@dataclass(frozen=True)
class MfapcConfig:
    """Horizons and weights of the predictive controller.

    N: prediction horizon, Nu: control horizon, L: window order,
    lam: move-suppression weight, rho: (L+1,) tuning weights in (0, 1],
    pg_bound: gain bound used by estimator clamps and forecast limits.
    """

    N: int = 3
    Nu: int = 3
    L: int = 2
    lam: float = 0.01
    rho: tuple = (0.5, 0.5, 0.5)
    pg_bound: float = 10.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"prediction horizon N must be >= 1, got {self.N}")
        if not 1 <= self.Nu <= self.N:
            raise ValueError(
                f"control horizon Nu={self.Nu} must satisfy 1 <= Nu <= N={self.N}"
            )
        if self.L < 1:
            raise ValueError(f"window order L must be >= 1, got {self.L}")
        if self.lam <= 0.0:
            raise ValueError(f"weight lambda must be > 0, got {self.lam}")
        rho = tuple(float(r) for r in self.rho)
        if len(rho) != self.L + 1:
            raise ValueError(
                f"need L+1 = {self.L + 1} rho weights, got {len(rho)}"
            )
        if any(not 0.0 < r <= 1.0 for r in rho):
            raise ValueError("every rho weight must lie in (0, 1]")
        if self.pg_bound <= 0.0:
            raise ValueError("pg_bound must be > 0")
        object.__setattr__(self, "rho", rho)

    @property
    def rho_array(self):
        return np.asarray(self.rho)


@dataclass(frozen=True)
class ReferencePreview:
    """Desired outputs y*(k+1)..y*(k+N) seen by the controller at step k."""

    y_star: np.ndarray

    def __post_init__(self):
        ys = _as_float_vector(self.y_star, "y_star")
        if ys.size < 1:
            raise ValueError("preview must contain at least one value")
        if not np.all(np.isfinite(ys)):
            raise ValueError("preview values must be finite")
        ys.setflags(write=False)
        object.__setattr__(self, "y_star", ys)

    @classmethod
    def constant(cls, value, horizon):
        return cls(np.full(horizon, float(value)))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def _prepare(cfg, pm, y_k, preview, delta_u_past):
    if pm.horizon != cfg.N or pm.control_horizon != cfg.Nu or pm.order != cfg.L:
        raise ValueError(
            f"prediction matrices ({pm.horizon}x{pm.control_horizon}, order {pm.order}) "
            f"do not match config (N={cfg.N}, Nu={cfg.Nu}, L={cfg.L})"
        )
    ys = preview.y_star if isinstance(preview, ReferencePreview) else _as_float_vector(preview, "preview")
    if ys.size != cfg.N:
        raise ValueError(f"preview length {ys.size} != horizon N={cfg.N}")
    du = np.ascontiguousarray(_window_values(delta_u_past))
    if du.size != cfg.L:
        raise ValueError(f"window length {du.size} != order L={cfg.L}")
    _check_finite("measurement", np.array([y_k]))
    _check_finite("preview", ys)
    _check_finite("increment window", du)
    return np.ascontiguousarray(ys), du


def mfapc_control_increment(cfg, pm, y_k, preview, delta_u_past):
    """Optimal future increment vector dU(k) of length Nu.

    The normal matrix psi~^T psi~ + lam I is symmetric positive definite for
    any lam > 0, so the solve cannot be singular.
    """
    ys, du = _prepare(cfg, pm, y_k, preview, delta_u_past)
    out = K.mfapc_increment(
        pm.psi_tilde, pm.psi_bar, float(y_k), ys, du, cfg.lam, cfg.rho_array
    )
    return np.asarray(out)


def mfapc_nu1_control_increment(cfg, pm, y_k, preview, delta_u_past):
    """Single-move form: same value as the general law at Nu=1, no solve."""
    if cfg.Nu != 1:
        raise ValueError("the division-only form requires Nu == 1")
    ys, du = _prepare(cfg, pm, y_k, preview, delta_u_past)
    return float(
        K.mfapc_increment_nu1(
            pm.psi_tilde, pm.psi_bar, float(y_k), ys, du, cfg.lam, cfg.rho_array
        )
    )


def mfac_control_increment(phi_hat, y_k, y_star, delta_u_past, lam, rho):
    """One-step-optimal increment of the non-predictive controller (N=Nu=1)."""
    phi = _phi_values(phi_hat)
    du = np.ascontiguousarray(_window_values(delta_u_past))
    rho_arr = np.asarray(rho, dtype=np.float64)
    if du.size != phi.size:
        raise ValueError("window length must equal PG order")
    if rho_arr.size != phi.size + 1:
        raise ValueError("need L+1 rho weights")
    if lam <= 0.0:
        raise ValueError("lambda must be > 0")
    return float(
        K.mfac_increment(phi, float(y_k), float(y_star), du, float(lam), rho_arr)
    )


def mfac_prediction_matrices(phi_hat):
    """The N=Nu=1 prediction operators implied by a single PG estimate."""
    phi = _phi_values(phi_hat)
    psi_tilde = np.array([[phi[0]]])
    psi_bar = np.concatenate((phi[1:], [0.0]))[None, :]
    return PredictionMatrices(psi_tilde, np.ascontiguousarray(psi_bar))


def mfapc_apply(delta_u, u_prev):
    """Receding horizon: apply only the first planned increment."""
    du = _as_float_vector(delta_u, "delta_u")
    return float(u_prev) + float(du[0])


@dataclass(frozen=True)
class PidConfig:
    """Velocity-form PID gains; ti <= 0 disables the integral term."""

    kp: float = 0.15
    ti: float = 0.5
    td: float = 0.0

    def __post_init__(self):
        if self.kp < 0.0:
            raise ValueError("kp must be >= 0")
        if self.td < 0.0:
            raise ValueError("td must be >= 0")


@dataclass
class PidState:
    e_prev: float = 0.0
    e_prev2: float = 0.0
    u: float = 0.0


def pid_step(cfg, e_k, state):
    """Advance the incremental PID by one sample; returns and stores u(k)."""
    du = K.pid_increment(
        cfg.kp, cfg.ti, cfg.td, float(e_k), state.e_prev, state.e_prev2
    )
    state.e_prev2 = state.e_prev
    state.e_prev = float(e_k)
    state.u = state.u + float(du)
    return state.u
