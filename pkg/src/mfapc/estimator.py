"""Online pseudo-gradient estimation and short-horizon forecasting.

The PG vector is estimated with the normalized projection algorithm

    phi(k) = phi(k-1) + eta * dU(k-1) * (dy(k) - phi(k-1).dU(k-1))
                         / (mu + ||dU(k-1)||^2)

then optionally clamped to a norm bound and passed through the reset rule:
the estimate snaps back to its initial value whenever its norm collapses
below ``epsilon`` or the sign of its leading component flips.  Forecasts of
the next N-1 PG vectors are produced either by holding the current estimate
or by a per-component ridge-fit AR recursion over recent estimates; both are
bounded linear combinations of past estimates, which is all the predictive
matrices require.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels as K
from .model import _as_float_vector, _window_values


def _sign(x):
    """Sign with sign(0) == +1 so the reset comparison is total."""
    return 1.0 if x >= 0.0 else -1.0


def clamp_norm(vec, bound):
    """Rescale vec onto the ball ||vec|| <= bound (no-op when inside)."""
    if bound is None:
        return vec
    n = float(np.linalg.norm(vec))
    if n <= bound or n == 0.0:
        return vec
    return vec * (bound / n)


@dataclass(frozen=True)
class EstimatorState:
    """Projection-estimator memory.

    ``history`` keeps the last ``n_history`` post-reset estimates
    (newest first) for the forecaster.  ``pg_bound`` (optional) clamps the
    estimate norm, mirroring the data model's gain bound.
    """

    phi_hat: np.ndarray
    phi_init: np.ndarray
    eta: float = 0.5
    mu: float = 2.0
    epsilon: float = 1e-5
    pg_bound: float | None = None
    n_history: int = 3
    history: tuple = ()

    def __post_init__(self):
        phi = _as_float_vector(self.phi_hat, "phi_hat")
        init = _as_float_vector(self.phi_init, "phi_init")
        if phi.size != init.size:
            raise ValueError("phi_hat and phi_init must share the same order")
        if not 0.0 < self.eta <= 2.0:
            raise ValueError(f"step size eta must be in (0, 2], got {self.eta}")
        if self.mu <= 0.0:
            raise ValueError(f"regularizer mu must be > 0, got {self.mu}")
        if self.epsilon <= 0.0:
            raise ValueError(f"reset threshold must be > 0, got {self.epsilon}")
        if np.linalg.norm(init) <= self.epsilon:
            raise ValueError("initial PG vector lies below the reset threshold")
        if self.pg_bound is not None and np.linalg.norm(init) > self.pg_bound:
            raise ValueError("initial PG vector violates the configured norm bound")
        if self.n_history < 1:
            raise ValueError("history depth must be >= 1")
        phi.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "phi_hat", phi)
        object.__setattr__(self, "phi_init", init)

    @property
    def order(self):
        return self.phi_init.size

    @classmethod
    def initial(cls, phi_init, **kw):
        init = _as_float_vector(phi_init, "phi_init")
        return cls(phi_hat=init.copy(), phi_init=init, history=(init.copy(),), **kw)


def estimate_pg(state, delta_y_k, delta_u_window_prev):
    """Projection update from dy(k) and the increment window at k-1.

    A zero window or zero innovation leaves the estimate unchanged exactly;
    mu > 0 keeps the update finite in every case.
    """
    w = np.ascontiguousarray(_window_values(delta_u_window_prev))
    if w.size != state.order:
        raise ValueError(f"window length {w.size} != estimator order {state.order}")
    phi = K.projection_update(state.phi_hat, w, float(delta_y_k), state.eta, state.mu)
    phi = clamp_norm(phi, state.pg_bound)
    history = ((phi,) + state.history)[: state.n_history]
    return replace(state, phi_hat=phi, history=history)


def reset_condition(state):
    """True when the estimate must snap back to its initial value."""
    norm_collapsed = float(np.linalg.norm(state.phi_hat)) <= state.epsilon
    sign_flipped = _sign(state.phi_hat[0]) != _sign(state.phi_init[0])
    return norm_collapsed or sign_flipped


def reset_pg(state):
    """Apply the reset rule; idempotent, returns the state unchanged otherwise."""
    if not reset_condition(state):
        return state
    history = ((state.phi_init.copy(),) + state.history[1:])[: state.n_history]
    return replace(state, phi_hat=state.phi_init.copy(), history=history)


@dataclass(frozen=True)
class ForecasterState:
    """Forecaster memory and fitted AR coefficients.

    mode 'hold' repeats the current estimate; mode 'ar' runs a per-component
    AR(n_p) recursion with ridge-fit weights over the estimates seen so far
    (``series``, oldest first, capped at ``fit_window``).  Every forecast is
    clamped to ||.|| <= pg_bound.
    """

    mode: str = "hold"
    n_p: int = 3
    ridge: float = 1e-6
    pg_bound: float = 10.0
    fit_window: int = 64
    coeffs: np.ndarray | None = None
    series: tuple = ()

    def __post_init__(self):
        if self.mode not in ("hold", "ar"):
            raise ValueError(f"forecaster mode must be 'hold' or 'ar', got {self.mode!r}")
        if self.n_p < 1:
            raise ValueError("forecast order n_p must be >= 1")
        if self.ridge <= 0.0:
            raise ValueError("ridge regularizer must be > 0")
        if self.pg_bound <= 0.0:
            raise ValueError("forecast norm bound must be > 0")


def forecaster_observe(fstate, phi_hat):
    """Record a new PG estimate and refit the AR weights when possible."""
    phi = _as_float_vector(phi_hat, "phi_hat")
    series = (fstate.series + (phi,))[-fstate.fit_window :]
    coeffs = fstate.coeffs
    if fstate.mode == "ar" and len(series) > fstate.n_p:
        data = np.vstack(series)
        coeffs = np.empty((phi.size, fstate.n_p))
        for j in range(phi.size):
            coeffs[j] = K.ar_fit(
                np.ascontiguousarray(data[:, j]), fstate.n_p, fstate.ridge
            )
    return replace(fstate, series=series, coeffs=coeffs)


def forecast_pg(fstate, history, steps):
    """Forecast the next ``steps`` PG vectors from the newest-first history.

    Returns a (steps, L) array; row i is the forecast for k+1+i.  Falls back
    to hold until the AR weights have been fit.
    """
    hist = [_as_float_vector(h, "history entry") for h in history]
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0:
        return np.zeros((0, hist[0].size if hist else 0))
    if not hist:
        raise ValueError("cannot forecast from an empty history")
    order = hist[0].size
    out = np.empty((steps, order))
    if fstate.mode == "hold" or fstate.coeffs is None:
        out[:] = clamp_norm(hist[0], fstate.pg_bound)
        return out
    # newest-first lag buffer, padded by repeating the oldest known estimate
    buf = [hist[min(m, len(hist) - 1)].copy() for m in range(fstate.n_p)]
    for i in range(steps):
        nxt = np.zeros(order)
        for m in range(fstate.n_p):
            nxt += fstate.coeffs[:, m] * buf[m]
        nxt = clamp_norm(nxt, fstate.pg_bound)
        out[i] = nxt
        buf = [nxt] + buf[:-1]
    return out
