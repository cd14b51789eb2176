"""Partial-form dynamic linearization (PFDL) data model.

The incremental data model replaces an unknown nonlinear SISO plant with

    y(k+1) = y(k) + phi^T(k) * dU(k)

where ``phi`` is the length-L pseudo-gradient (PG) vector and ``dU(k)`` the
newest-first window of the last L input increments.  This module holds the
typed containers for that model and assembles the N-step prediction
matrices used by the receding-horizon controller.

Window convention (used everywhere in this package): index 0 is time k,
index 1 is k-1, and so on.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K


def _as_float_vector(values, name):
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _phi_values(phi):
    """Accept a PGVector or any 1-D array-like of gains."""
    if isinstance(phi, PGVector):
        return phi.phi
    return _as_float_vector(phi, "phi")


def _window_values(window):
    if isinstance(window, ControlWindow):
        return window.deltas
    return _as_float_vector(window, "delta-u window")


@dataclass(frozen=True)
class PGVector:
    """Pseudo-gradient vector phi(k): time-varying gains of the data model."""

    phi: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.phi, "phi")
        if arr.size < 1:
            raise ValueError("PG vector needs at least one component")
        if not np.all(np.isfinite(arr)):
            raise ValueError("PG vector entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "phi", arr)

    @property
    def order(self):
        return self.phi.size

    def norm(self):
        return float(np.linalg.norm(self.phi))

    def within_bound(self, bound):
        """True when ||phi|| <= bound (the Lipschitz-style gain bound)."""
        return self.norm() <= bound + 1e-12


@dataclass(frozen=True)
class ControlWindow:
    """Newest-first window of the last L input increments (optionally values)."""

    deltas: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        d = _as_float_vector(self.deltas, "deltas")
        if d.size < 1:
            raise ValueError("control window needs length >= 1")
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)
        if self.values is not None:
            v = _as_float_vector(self.values, "values")
            if v.size != d.size:
                raise ValueError("values window must match delta window length")
            v.setflags(write=False)
            object.__setattr__(self, "values", v)

    @property
    def order(self):
        return self.deltas.size

    def push(self, delta, value=None):
        """Advance one step: drop the oldest entry, insert the newest at 0."""
        deltas = np.concatenate(([float(delta)], self.deltas[:-1]))
        values = None
        if self.values is not None:
            if value is None:
                raise ValueError("window tracks values; push needs one")
            values = np.concatenate(([float(value)], self.values[:-1]))
        return ControlWindow(deltas, values)

    @classmethod
    def zeros(cls, order, with_values=False):
        z = np.zeros(order)
        return cls(z, z.copy() if with_values else None)


@dataclass(frozen=True)
class ShiftPair:
    """Lower-shift matrix A (ones on the first subdiagonal) and basis vector B."""

    a: np.ndarray
    b: np.ndarray

    @property
    def order(self):
        return self.b.size


def build_shift_pair(order):
    """The (A, B) pair that advances a newest-first window one step.

    A @ w shifts w towards older slots; B injects the newest increment.
    A is nilpotent: A**order == 0 exactly.
    """
    if order < 1:
        raise ValueError(f"window order must be >= 1, got {order}")
    a = np.zeros((order, order))
    a[np.arange(1, order), np.arange(order - 1)] = 1.0
    b = np.zeros(order)
    b[0] = 1.0
    a.setflags(write=False)
    b.setflags(write=False)
    return ShiftPair(a, b)


@dataclass(frozen=True)
class PredictionMatrices:
    """N-step prediction operators.

    ``psi_tilde`` (N x Nu) maps future input increments, ``psi_bar`` (N x L)
    maps the pre-existing increment window, and ``e_ones`` carries the
    current output to every horizon step:

        Y(k+1..k+N) = e_ones * y(k) + psi_tilde @ dU_future + psi_bar @ dU(k-1)
    """

    psi_tilde: np.ndarray
    psi_bar: np.ndarray
    e_ones: np.ndarray = field(default=None)

    def __post_init__(self):
        pt = np.ascontiguousarray(self.psi_tilde, dtype=np.float64)
        pb = np.ascontiguousarray(self.psi_bar, dtype=np.float64)
        if pt.ndim != 2 or pb.ndim != 2:
            raise ValueError("prediction operators must be matrices")
        if pt.shape[0] != pb.shape[0]:
            raise ValueError("psi_tilde and psi_bar must share the horizon length")
        e = np.ones(pt.shape[0]) if self.e_ones is None else np.ascontiguousarray(self.e_ones, dtype=np.float64)
        for arr in (pt, pb, e):
            arr.setflags(write=False)
        object.__setattr__(self, "psi_tilde", pt)
        object.__setattr__(self, "psi_bar", pb)
        object.__setattr__(self, "e_ones", e)

    @property
    def horizon(self):
        return self.psi_tilde.shape[0]

    @property
    def control_horizon(self):
        return self.psi_tilde.shape[1]

    @property
    def order(self):
        return self.psi_bar.shape[1]


def pfdl_predict_one(y_k, phi, delta_u_window):
    """One-step prediction y(k+1) = y(k) + phi . dU(k)."""
    p = _phi_values(phi)
    w = _window_values(delta_u_window)
    if p.size != w.size:
        raise ValueError(f"phi has length {p.size} but window has length {w.size}")
    return float(y_k) + float(p @ w)


def assemble_prediction(phi_seq, nu):
    """Stack PG vectors phi(k)..phi(k+N-1) into the prediction operators.

    Future increments beyond the control horizon are fixed to zero, which is
    what truncates psi to N x Nu.  The last column of psi_bar is identically
    zero: window entries older than L-1 steps have left the model by the
    time they could matter.
    """
    rows = [_phi_values(p) for p in phi_seq]
    if not rows:
        raise ValueError("phi_seq must contain at least one PG vector")
    order = rows[0].size
    for r in rows[1:]:
        if r.size != order:
            raise ValueError("all PG vectors must share the same order")
    n = len(rows)
    if not 1 <= nu <= n:
        raise ValueError(f"control horizon Nu={nu} must satisfy 1 <= Nu <= N={n}")
    stacked = np.ascontiguousarray(np.vstack(rows))
    psi_tilde, psi_bar = K.assemble_prediction_arrays(stacked, nu)
    return PredictionMatrices(psi_tilde, psi_bar)


def predict_outputs(y_k, pm, delta_u_future, delta_u_past):
    """Evaluate the N-step prediction for a candidate future increment vector."""
    du_f = _as_float_vector(delta_u_future, "delta_u_future")
    du_p = _window_values(delta_u_past)
    if du_f.size != pm.control_horizon:
        raise ValueError(
            f"expected {pm.control_horizon} future increments, got {du_f.size}"
        )
    if du_p.size != pm.order:
        raise ValueError(f"expected window of length {pm.order}, got {du_p.size}")
    return K.predict_outputs_arrays(
        float(y_k), pm.psi_tilde, pm.psi_bar, du_f, du_p
    )
