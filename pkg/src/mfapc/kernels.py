"""Numeric kernels behind the control/estimation API.

Every kernel exists in two flavours: a vectorized pure-numpy implementation
(``*_np``) and a scalar-loop implementation compiled with numba (``*_nb``).
The active flavour is chosen at import time from the ``MFAPC_NUMBA``
environment variable (``0``/``false`` forces the numpy path; anything else
uses numba when it is importable) and can be switched at runtime with
:func:`use_backend`.  Callers should access kernels as module attributes
(``kernels.mfapc_increment(...)``) so backend switches take effect.

Array conventions: time windows are newest-first, pseudo-gradient sequences
are stacked rows ``phi_seq[i] = phi(k+i)``, and all floats are float64.
Inputs must be C-contiguous (the numba path relies on it).
"""

import os

import numpy as np
import scipy.linalg

_env = os.environ.get("MFAPC_NUMBA", "").strip().lower()
_want_numba = _env not in ("0", "false", "off", "no")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        raise RuntimeError("numba is not available")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def assemble_prediction_np(phi_seq, nu):
    """Build (psi_tilde, psi_bar) from stacked PG vectors.

    ``phi_seq`` is (N, L) with row i holding phi(k+i).  Uses the identity
    phi^T A^m B = phi[m] (0-indexed, zero for m >= L) so no shift-matrix
    powers are materialized:

        psi_tilde[r, c] = sum_{i=c..r} phi_seq[i, i-c]      (c <= min(r, nu-1))
        psi_bar[r, j]   = sum_{i=0..r} phi_seq[i, j+i+1]
    """
    n, order = phi_seq.shape
    pad = np.zeros((n, n + order + 1))
    pad[:, :order] = phi_seq
    ii = np.arange(n)[:, None]
    cc = np.arange(n)[None, :]
    lag = ii - cc
    m = np.where(lag >= 0, pad[ii, np.maximum(lag, 0)], 0.0)
    psi_tilde = np.cumsum(m, axis=0)[:, :nu].copy()
    jj = np.arange(order)[None, :]
    psi_bar = np.cumsum(pad[ii, jj + ii + 1], axis=0)
    return psi_tilde, psi_bar


def predict_outputs_np(y_k, psi_tilde, psi_bar, du_future, du_past):
    return y_k + psi_tilde @ du_future + psi_bar @ du_past


def _rhs_np(psi_bar, y_k, y_star, du_past, rho):
    return rho[0] * (y_star - y_k) - psi_bar @ (rho[1:] * du_past)


def mfapc_increment_np(psi_tilde, psi_bar, y_k, y_star, du_past, lam, rho):
    """Receding-horizon increment vector; SPD solve via Cholesky."""
    nu = psi_tilde.shape[1]
    rhs = _rhs_np(psi_bar, y_k, y_star, du_past, rho)
    m = psi_tilde.T @ psi_tilde + lam * np.eye(nu)
    cf = scipy.linalg.cho_factor(m, lower=True)
    return scipy.linalg.cho_solve(cf, psi_tilde.T @ rhs)


def mfapc_increment_nu1_np(psi_tilde, psi_bar, y_k, y_star, du_past, lam, rho):
    """Single-move special case: no matrix factorization."""
    rhs = _rhs_np(psi_bar, y_k, y_star, du_past, rho)
    col = psi_tilde[:, 0]
    return float(col @ rhs) / (float(col @ col) + lam)


def stability_diag_np(psi_tilde, psi_bar, lam, rho):
    """Spectral radius of the increment-window companion matrix.

    Returns (sigma, bound) where ``bound`` is the first-row absolute sum,
    the sufficient condition for sigma < 1.
    """
    nu = psi_tilde.shape[1]
    order = psi_bar.shape[1]
    if order == 1:
        return 0.0, 0.0
    m = psi_tilde.T @ psi_tilde + lam * np.eye(nu)
    cf = scipy.linalg.cho_factor(m, lower=True)
    p = scipy.linalg.cho_solve(cf, psi_tilde.T)[0]
    first = np.zeros(order)
    first[: order - 1] = -(rho[1:order] * (p @ psi_bar[:, : order - 1]))
    bound = float(np.abs(first).sum())
    comp = np.zeros((order, order))
    comp[0] = first
    comp[np.arange(1, order), np.arange(order - 1)] = 1.0
    sigma = float(np.abs(np.linalg.eigvals(comp)).max())
    return sigma, bound


def projection_update_np(phi, du_prev, dy, eta, mu):
    den = mu + float(du_prev @ du_prev)
    innov = dy - float(phi @ du_prev)
    return phi + (eta * innov / den) * du_prev


def ar_fit_np(series, order, ridge):
    """Ridge-regularized AR(order) coefficients, lag-1 first.

    ``series`` is oldest-first and must have length > order.
    """
    t = series.shape[0]
    rows = t - order
    r = np.empty((rows, order))
    for m in range(order):
        r[:, m] = series[order - 1 - m : t - 1 - m]
    y = series[order:]
    mm = r.T @ r + ridge * np.eye(order)
    cf = scipy.linalg.cho_factor(mm, lower=True)
    return scipy.linalg.cho_solve(cf, r.T @ y)


# Scalar recursions shared verbatim by both backends: the loop bodies are
# numba-compatible as written, so the numba flavour is just njit(same code).

def mfac_increment_np(phi, y_k, y_star, du_past, lam, rho):
    """One-step-optimal increment of the non-predictive controller."""
    den = lam + phi[0] * phi[0]
    s = 0.0
    for j in range(1, phi.shape[0]):
        s += rho[j] * phi[j] * du_past[j - 1]
    return phi[0] * (rho[0] * (y_star - y_k) - s) / den


def example1_output_np(y, u, k, switch_k, literal_lags):
    """Benchmark plant output y(k); history entries before index 0 are 0."""
    y1 = y[k - 1]
    y2 = y[k - 2] if k >= 2 else 0.0
    u1 = u[k - 1]
    u2 = u[k - 2] if k >= 2 else 0.0
    if k <= switch_k:
        return (
            2.5 * y1 * y2 / (1.0 + y1 * y1 + y2 * y2)
            + 1.2 * u1
            + 1.4 * u2
            + 0.7 * np.sin(0.5 * (y1 + y2))
        )
    y3 = y[k - 3] if k >= 3 else 0.0
    u3 = u[k - 3] if k >= 3 else 0.0
    if literal_lags:
        return -0.1 * y1 - 0.2 * y2 - 0.3 * y3 + 0.15 * u1
    return -0.1 * y1 - 0.2 * y2 - 0.3 * y3 + 0.1 * u1 + 0.02 * u2 + 0.03 * u3


def linear_pfdl_output_np(y, u, k, phi_true):
    """Synthetic plant that IS the incremental data model with fixed gains."""
    out = y[k - 1]
    for i in range(phi_true.shape[0]):
        ua = u[k - 1 - i] if k - 1 - i >= 0 else 0.0
        ub = u[k - 2 - i] if k - 2 - i >= 0 else 0.0
        out += phi_true[i] * (ua - ub)
    return out


def pid_increment_np(kp, ti, td, e, e1, e2):
    """Incremental (velocity-form) PID with unit sample time; ti<=0 disables I."""
    out = e - e1
    if ti > 0.0:
        out += e / ti
    out += td * (e - 2.0 * e1 + e2)
    return kp * out


_NUMPY_IMPLS = {
    "assemble_prediction_arrays": assemble_prediction_np,
    "predict_outputs_arrays": predict_outputs_np,
    "mfapc_increment": mfapc_increment_np,
    "mfapc_increment_nu1": mfapc_increment_nu1_np,
    "mfac_increment": mfac_increment_np,
    "stability_diag": stability_diag_np,
    "projection_update": projection_update_np,
    "ar_fit": ar_fit_np,
    "example1_output": example1_output_np,
    "linear_pfdl_output": linear_pfdl_output_np,
    "pid_increment": pid_increment_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_NUMBA_IMPLS = None

if HAVE_NUMBA:

    @njit(cache=True)
    def assemble_prediction_nb(phi_seq, nu):
        n, order = phi_seq.shape
        psi_tilde = np.zeros((n, nu))
        psi_bar = np.zeros((n, order))
        for r in range(n):
            cmax = r if r < nu - 1 else nu - 1
            for c in range(cmax + 1):
                acc = 0.0
                for i in range(c, r + 1):
                    if i - c < order:
                        acc += phi_seq[i, i - c]
                psi_tilde[r, c] = acc
            for j in range(order):
                acc = 0.0
                for i in range(r + 1):
                    m = j + i + 1
                    if m < order:
                        acc += phi_seq[i, m]
                psi_bar[r, j] = acc
        return psi_tilde, psi_bar

    @njit(cache=True)
    def predict_outputs_nb(y_k, psi_tilde, psi_bar, du_future, du_past):
        n, nu = psi_tilde.shape
        order = psi_bar.shape[1]
        out = np.empty(n)
        for r in range(n):
            s = y_k
            for c in range(nu):
                s += psi_tilde[r, c] * du_future[c]
            for j in range(order):
                s += psi_bar[r, j] * du_past[j]
            out[r] = s
        return out

    @njit(cache=True)
    def _chol_solve_nb(m, b):
        c = np.linalg.cholesky(m)
        n = b.shape[0]
        y = np.zeros(n)
        for i in range(n):
            s = b[i]
            for j in range(i):
                s -= c[i, j] * y[j]
            y[i] = s / c[i, i]
        x = np.zeros(n)
        for i in range(n - 1, -1, -1):
            s = y[i]
            for j in range(i + 1, n):
                s -= c[j, i] * x[j]
            x[i] = s / c[i, i]
        return x

    @njit(cache=True)
    def _rhs_nb(psi_bar, y_k, y_star, du_past, rho):
        n, order = psi_bar.shape
        rhs = np.empty(n)
        for r in range(n):
            s = rho[0] * (y_star[r] - y_k)
            for j in range(order):
                s -= psi_bar[r, j] * rho[j + 1] * du_past[j]
            rhs[r] = s
        return rhs

    @njit(cache=True)
    def _normal_matrix_nb(psi_tilde, lam):
        n, nu = psi_tilde.shape
        m = np.empty((nu, nu))
        for a in range(nu):
            for b in range(a, nu):
                s = 0.0
                for r in range(n):
                    s += psi_tilde[r, a] * psi_tilde[r, b]
                m[a, b] = s
                m[b, a] = s
            m[a, a] += lam
        return m

    @njit(cache=True)
    def mfapc_increment_nb(psi_tilde, psi_bar, y_k, y_star, du_past, lam, rho):
        n, nu = psi_tilde.shape
        rhs = _rhs_nb(psi_bar, y_k, y_star, du_past, rho)
        m = _normal_matrix_nb(psi_tilde, lam)
        b = np.empty(nu)
        for a in range(nu):
            s = 0.0
            for r in range(n):
                s += psi_tilde[r, a] * rhs[r]
            b[a] = s
        return _chol_solve_nb(m, b)

    @njit(cache=True)
    def mfapc_increment_nu1_nb(psi_tilde, psi_bar, y_k, y_star, du_past, lam, rho):
        n = psi_tilde.shape[0]
        rhs = _rhs_nb(psi_bar, y_k, y_star, du_past, rho)
        num = 0.0
        den = lam
        for r in range(n):
            num += psi_tilde[r, 0] * rhs[r]
            den += psi_tilde[r, 0] * psi_tilde[r, 0]
        return num / den

    @njit(cache=True)
    def stability_diag_nb(psi_tilde, psi_bar, lam, rho):
        n, nu = psi_tilde.shape
        order = psi_bar.shape[1]
        if order == 1:
            return 0.0, 0.0
        m = _normal_matrix_nb(psi_tilde, lam)
        e0 = np.zeros(nu)
        e0[0] = 1.0
        w0 = _chol_solve_nb(m, e0)
        p = np.empty(n)
        for r in range(n):
            s = 0.0
            for a in range(nu):
                s += psi_tilde[r, a] * w0[a]
            p[r] = s
        first = np.zeros(order)
        bound = 0.0
        for j in range(order - 1):
            s = 0.0
            for r in range(n):
                s += p[r] * psi_bar[r, j]
            v = -rho[j + 1] * s
            first[j] = v
            bound += abs(v)
        # complex dtype: eigvals of a real companion matrix would trip
        # numba's domain-change guard once eigenvalues go complex
        comp = np.zeros((order, order), dtype=np.complex128)
        for j in range(order):
            comp[0, j] = first[j]
        for i in range(1, order):
            comp[i, i - 1] = 1.0
        ev = np.linalg.eigvals(comp)
        sigma = 0.0
        for t in range(ev.shape[0]):
            a = abs(ev[t])
            if a > sigma:
                sigma = a
        return sigma, bound

    @njit(cache=True)
    def projection_update_nb(phi, du_prev, dy, eta, mu):
        order = phi.shape[0]
        den = mu
        pred = 0.0
        for j in range(order):
            den += du_prev[j] * du_prev[j]
            pred += phi[j] * du_prev[j]
        gain = eta * (dy - pred) / den
        out = np.empty(order)
        for j in range(order):
            out[j] = phi[j] + gain * du_prev[j]
        return out

    @njit(cache=True)
    def ar_fit_nb(series, order, ridge):
        t = series.shape[0]
        rows = t - order
        r = np.empty((rows, order))
        for i in range(rows):
            for m in range(order):
                r[i, m] = series[order + i - 1 - m]
        mm = np.empty((order, order))
        for a in range(order):
            for b in range(a, order):
                s = 0.0
                for i in range(rows):
                    s += r[i, a] * r[i, b]
                mm[a, b] = s
                mm[b, a] = s
            mm[a, a] += ridge
        rhs = np.zeros(order)
        for a in range(order):
            s = 0.0
            for i in range(rows):
                s += r[i, a] * series[order + i]
            rhs[a] = s
        return _chol_solve_nb(mm, rhs)

    mfac_increment_nb = njit(cache=True)(mfac_increment_np)
    example1_output_nb = njit(cache=True)(example1_output_np)
    linear_pfdl_output_nb = njit(cache=True)(linear_pfdl_output_np)
    pid_increment_nb = njit(cache=True)(pid_increment_np)

    _NUMBA_IMPLS = {
        "assemble_prediction_arrays": assemble_prediction_nb,
        "predict_outputs_arrays": predict_outputs_nb,
        "mfapc_increment": mfapc_increment_nb,
        "mfapc_increment_nu1": mfapc_increment_nu1_nb,
        "mfac_increment": mfac_increment_nb,
        "stability_diag": stability_diag_nb,
        "projection_update": projection_update_nb,
        "ar_fit": ar_fit_nb,
        "example1_output": example1_output_nb,
        "linear_pfdl_output": linear_pfdl_output_nb,
        "pid_increment": pid_increment_nb,
    }


BACKENDS = {"numpy": _NUMPY_IMPLS}
if _NUMBA_IMPLS is not None:
    BACKENDS["numba"] = _NUMBA_IMPLS

active_backend = "numba" if (_want_numba and HAVE_NUMBA) else "numpy"


def use_backend(name):
    """Bind the module-level kernel names to one backend ('numpy'|'numba')."""
    global active_backend
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(BACKENDS)}")
    globals().update(BACKENDS[name])
    active_backend = name


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    if active_backend != "numba":
        return
    phi_seq = np.array([[1.0, 0.5], [0.8, 0.4]])
    du2 = np.array([0.1, -0.2])
    rho = np.array([0.5, 0.5, 0.5])
    ystar = np.array([1.0, 1.0])
    psi_t, psi_b = assemble_prediction_arrays(phi_seq, 2)
    predict_outputs_arrays(0.0, psi_t, psi_b, du2, du2)
    mfapc_increment(psi_t, psi_b, 0.0, ystar, du2, 0.5, rho)
    mfapc_increment_nu1(psi_t[:, :1].copy(), psi_b, 0.0, ystar, du2, 0.5, rho)
    mfac_increment(phi_seq[0], 0.0, 1.0, du2, 0.5, rho)
    stability_diag(psi_t, psi_b, 0.5, rho)
    projection_update(phi_seq[0], du2, 0.1, 0.5, 2.0)
    ar_fit(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 3, 1e-6)
    hist = np.zeros(8)
    example1_output(hist, hist, 4, 200, False)
    linear_pfdl_output(hist, hist, 4, du2)
    pid_increment(0.15, 0.5, 0.0, 1.0, 0.5, 0.2)


use_backend(active_backend)
