"""Discrete-time SISO plants and reference trajectory generators.

Plants expose three things the simulation loop needs: seeded history arrays,
the first step index at which control may run, and ``output(k, y, u)``
computing y(k) from the histories (entries before index 0 count as zero).
Identical seeds and inputs always reproduce bit-identical traces; optional
measurement noise draws from a seeded generator.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels as K

EXAMPLE1_T_MAX = 400
# first six samples of the benchmark: five seed outputs placed at k=1..5,
# with y(0)=0 (the published list has one fewer value than its index range)
EXAMPLE1_Y_SEED = (0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
EXAMPLE1_U_SEED = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def round_half_away(x):
    """Nearest integer, ties away from zero (numpy's round is ties-to-even)."""
    return math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)


def reference_square(k):
    """The benchmark's +/-5 square wave, argument range (0, 400]."""
    if not 1 <= k <= EXAMPLE1_T_MAX:
        raise ValueError(f"reference step {k} outside [1, {EXAMPLE1_T_MAX}]")
    return 5.0 * (-1.0) ** round_half_away(k / 80.0)


@dataclass(frozen=True)
class SquareWaveReference:
    """Square wave amplitude * (-1)^round(k/half_period), defined for all k >= 1."""

    amplitude: float = 5.0
    half_period: int = 80

    def __post_init__(self):
        if self.half_period < 1:
            raise ValueError("half_period must be >= 1")

    def value(self, k):
        if k < 1:
            raise ValueError(f"reference undefined for step {k}")
        return self.amplitude * (-1.0) ** round_half_away(k / self.half_period)


@dataclass(frozen=True)
class ConstantReference:
    level: float = 5.0

    def value(self, k):
        if k < 1:
            raise ValueError(f"reference undefined for step {k}")
        return float(self.level)


class TableReference:
    """Custom reference from (k, y*) pairs; holds the last value past the end."""

    def __init__(self, steps, values):
        steps = [int(s) for s in steps]
        values = [float(v) for v in values]
        if len(steps) != len(values) or not steps:
            raise ValueError("reference table needs matching, non-empty columns")
        order = np.argsort(steps)
        self._steps = np.asarray(steps)[order]
        self._values = np.asarray(values)[order]
        if self._steps[0] > 1:
            raise ValueError("reference table must start at k <= 1")

    @classmethod
    def from_csv(cls, path):
        steps, values = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    k = float(row[0])
                except ValueError:
                    continue  # header line
                steps.append(int(k))
                values.append(float(row[1]))
        return cls(steps, values)

    def value(self, k):
        if k < 1:
            raise ValueError(f"reference undefined for step {k}")
        idx = np.searchsorted(self._steps, k, side="right") - 1
        return float(self._values[max(idx, 0)])


def preview_vector(reference, k, horizon):
    """y*(k+1)..y*(k+horizon) as an array."""
    return np.array([reference.value(k + i) for i in range(1, horizon + 1)])


class Example1Plant:
    """The structure-varying benchmark plant.

    Smooth nonlinear dynamics up to ``switch_k`` (default 200), then a linear
    regime with much smaller input gains; histories carry across the switch
    unchanged.  ``literal_lags=True`` selects the literal reading of the
    second regime in which all three input terms share lag one (0.15*u(k-1))
    instead of the standard three-lag form.  ``switch_k=None`` keeps the
    first regime for the whole run (useful for constant-setpoint studies).
    """

    def __init__(self, literal_lags=False, switch_k=200, noise_std=0.0, seed=0):
        self.literal_lags = bool(literal_lags)
        self.switch_k = int(switch_k) if switch_k is not None else EXAMPLE1_T_MAX + 1
        self.noise_std = float(noise_std)
        self._rng = np.random.default_rng(seed)
        self.t_max = EXAMPLE1_T_MAX
        self.control_start = 5

    def init_arrays(self, steps):
        if steps < len(EXAMPLE1_Y_SEED) - 1:
            raise ValueError(f"need at least {len(EXAMPLE1_Y_SEED) - 1} steps")
        y = np.zeros(steps + 1)
        u = np.zeros(steps + 1)
        y[: len(EXAMPLE1_Y_SEED)] = EXAMPLE1_Y_SEED
        u[: len(EXAMPLE1_U_SEED)] = EXAMPLE1_U_SEED
        return y, u

    def output(self, k, y, u):
        if not 1 <= k <= self.t_max:
            raise ValueError(f"plant step {k} outside (0, {self.t_max}]")
        out = K.example1_output(y, u, k, self.switch_k, self.literal_lags)
        if self.noise_std > 0.0:
            out += self.noise_std * self._rng.standard_normal()
        return float(out)


class SyntheticLinearPlant:
    """A plant that IS the incremental data model with fixed gains.

    Used as the convergence oracle for the projection estimator: under
    persistent excitation the estimate must recover ``phi_true``.
    """

    def __init__(self, phi_true, y0=0.0):
        phi = np.ascontiguousarray(phi_true, dtype=np.float64)
        if phi.ndim != 1 or phi.size < 1:
            raise ValueError("phi_true must be a non-empty vector")
        self.phi_true = phi
        self.y0 = float(y0)
        self.t_max = None
        self.control_start = phi.size + 1

    def init_arrays(self, steps):
        y = np.zeros(steps + 1)
        u = np.zeros(steps + 1)
        y[: self.control_start] = self.y0
        return y, u

    def output(self, k, y, u):
        if k < 1:
            raise ValueError(f"plant step {k} must be >= 1")
        return float(K.linear_pfdl_output(y, u, k, self.phi_true))
