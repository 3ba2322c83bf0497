"""Running time-averages of observables and the escape (unboundedness) test.

The time integral is discretised with the trapezoidal rule on the fixed step
grid, so after ``n`` steps of size ``h`` the partial average is::

    (h/2 * f_0 + h * f_1 + ... + h * f_{n-1} + h/2 * f_n) / (n h)

All accumulators are batched: one instance tracks one observable along many
trajectories at once.  A trajectory that escapes (or produces a non-finite
value) is frozen and carries no average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EscapedTrajectoryError, InsufficientCheckpointsError

# escape causes
NOT_ESCAPED = 0
THRESHOLD = 1
NON_FINITE = 2
CAUSE_NAMES = {NOT_ESCAPED: None, THRESHOLD: "threshold", NON_FINITE: "non-finite"}


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Named real function of the augmented state ``(m, theta)``."""

    id: str
    evaluate: object

    def __call__(self, state):
        return self.evaluate(np.asarray(state, dtype=float))


def _sin_2delta(state):
    return np.sin(2.0 * state[0])


def _cos_delta(state):
    return np.cos(state[0])


def _first_squared(state):
    return state[0] ** 2


@dataclass(frozen=True)
class TrigPolynomial:
    """``sum_k cos_coeffs[k] cos(k x) + sum_k sin_coeffs[k-1] sin(k x)`` of one coordinate.

    ``cos_coeffs[0]`` is the constant term.
    """

    coordinate: int
    cos_coeffs: tuple = (0.0,)
    sin_coeffs: tuple = ()

    def __call__(self, state):
        x = state[self.coordinate]
        out = np.full(np.shape(x), self.cos_coeffs[0] if self.cos_coeffs else 0.0)
        for k, a in enumerate(self.cos_coeffs[1:], start=1):
            out = out + a * np.cos(k * x)
        for k, b in enumerate(self.sin_coeffs, start=1):
            out = out + b * np.sin(k * x)
        return out


BUILTIN_OBSERVABLES = {
    "sin_2delta": Observable("sin_2delta", _sin_2delta),
    "cos_delta": Observable("cos_delta", _cos_delta),
    "m1_squared": Observable("m1_squared", _first_squared),
    "m_squared": Observable("m_squared", _first_squared),
}


def get_observable(name):
    try:
        return BUILTIN_OBSERVABLES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown observable {name!r}; built-ins are {sorted(BUILTIN_OBSERVABLES)}"
        ) from None


def trig_polynomial(id, coordinate, cos_coeffs=(0.0,), sin_coeffs=()):
    poly = TrigPolynomial(int(coordinate), tuple(float(a) for a in cos_coeffs), tuple(float(b) for b in sin_coeffs))
    return Observable(id, poly)


# ---------------------------------------------------------------------------
# accumulator


class AverageAccumulator:
    """Trapezoidal running integral of one observable along a batch of trajectories.

    Args:
        h: Integration step.
        initial_value: Observable at ``t = 0``; scalar or one value per trajectory.
        stride: Steps between stored checkpoints.  A checkpoint is also taken
            by :meth:`finalize` if the last step is off-stride.
    """

    def __init__(self, h, initial_value, stride=1):
        if not h > 0:
            raise ConfigurationError(f"step must be positive, got {h}")
        if int(stride) < 1:
            raise ConfigurationError(f"checkpoint stride must be >= 1, got {stride}")
        value = np.atleast_1d(np.asarray(initial_value, dtype=float)).copy()
        self.h = float(h)
        self.stride = int(stride)
        self.steps = 0
        self.running_sum = np.zeros_like(value)
        self.previous = value
        self.escaped = ~np.isfinite(value)
        self.cause = np.where(self.escaped, NON_FINITE, NOT_ESCAPED).astype(np.int8)
        self.t_escape = np.where(self.escaped, 0.0, np.nan)
        self.checkpoint_times = []
        self.checkpoint_values = []

    @property
    def size(self):
        return self.previous.size

    @property
    def elapsed(self):
        return self.steps * self.h

    def partial_average(self):
        if self.steps == 0:
            out = self.previous.copy()
        else:
            out = self.running_sum / self.steps
        out[self.escaped] = np.nan
        return out

    def accumulate(self, value, active=None):
        """Advance one step with the observable sampled at the new state.

        Args:
            value: Observable at the end of the step.
            active: Optional mask; trajectories outside it are frozen this
                step (used by drivers that escape members externally).
        """
        value = np.atleast_1d(np.asarray(value, dtype=float))
        live = ~self.escaped if active is None else (~self.escaped & active)
        bad = live & ~np.isfinite(value)
        if bad.any():
            self.mark_escaped(bad, NON_FINITE, (self.steps + 1) * self.h)
            live = live & ~bad
        self.steps += 1
        self.running_sum = np.where(live, self.running_sum + 0.5 * (self.previous + value), self.running_sum)
        self.previous = np.where(live, value, self.previous)
        if self.steps % self.stride == 0:
            self._checkpoint()
        return self

    def mark_escaped(self, mask, cause=THRESHOLD, t=None):
        mask = np.asarray(mask, dtype=bool) & ~self.escaped
        self.escaped = self.escaped | mask
        self.cause[mask] = cause
        self.t_escape[mask] = self.elapsed if t is None else t

    def _checkpoint(self):
        self.checkpoint_times.append(self.elapsed)
        self.checkpoint_values.append(self.partial_average())

    def finalize(self):
        """Ensure the final time is checkpointed."""
        if self.steps and (not self.checkpoint_times or self.checkpoint_times[-1] != self.elapsed):
            self._checkpoint()
        return self

    @property
    def checkpoints(self):
        """``(times, partial averages)`` with shape ``(n,)`` and ``(n, batch)``."""
        if not self.checkpoint_values:
            return np.zeros(0), np.zeros((0, self.size))
        return np.array(self.checkpoint_times), np.stack(self.checkpoint_values)

    def status(self, k=0):
        if not self.escaped[k]:
            return "converging"
        return f"escaped({CAUSE_NAMES[int(self.cause[k])]}, t={self.t_escape[k]:g})"


def accumulate(acc: AverageAccumulator, value, h=None):
    """Functional form of :meth:`AverageAccumulator.accumulate`."""
    if h is not None and h != acc.h:
        raise ConfigurationError(f"step {h} differs from accumulator step {acc.h}")
    if acc.size == 1 and acc.escaped[0]:
        raise EscapedTrajectoryError("cannot accumulate on an escaped trajectory")
    return acc.accumulate(value)


def convergence_gap(acc: AverageAccumulator):
    """Largest deviation of the partial average from its final value over the last quarter of checkpoints.

    Returns a float for a single trajectory and an array for a batch, with
    ``nan`` for escaped members.  A single escaped trajectory is rejected.
    """
    times, values = acc.checkpoints
    if len(times) < 2:
        raise InsufficientCheckpointsError(f"need at least 2 checkpoints, have {len(times)}")
    if acc.size == 1 and acc.escaped[0]:
        raise EscapedTrajectoryError("convergence gap undefined for an escaped trajectory")
    tail = max(2, math.ceil(len(times) / 4))
    window = values[-tail:]
    gap = np.max(np.abs(window - values[-1]), axis=0)
    gap[acc.escaped] = np.nan
    return float(gap[0]) if acc.size == 1 else gap


# ---------------------------------------------------------------------------
# escape


@dataclass(frozen=True)
class EscapePredicate:
    """Escape when ``|state[coordinate]| > threshold`` on ``consecutive_steps`` successive samples.

    The default watches ``omega`` of the swing model: the unforced separatrix
    never exceeds ``|omega| ~ 0.2`` at the standard parameters.
    """

    coordinate: int = 1
    threshold: float = 0.5
    consecutive_steps: int = 10

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigurationError(f"escape threshold must be positive, got {self.threshold}")
        if int(self.consecutive_steps) < 1:
            raise ConfigurationError("consecutive_steps must be >= 1")
        if int(self.coordinate) < 0:
            raise ConfigurationError("escape coordinate must be non-negative")

    def update(self, counter, state):
        """Advance the dwell counters; returns ``(counter, fired)``."""
        over = np.abs(np.asarray(state)[self.coordinate]) > self.threshold
        counter = np.where(over, counter + 1, 0)
        return counter, counter >= self.consecutive_steps

    def describe(self):
        return {
            "coordinate": self.coordinate,
            "threshold": self.threshold,
            "consecutive_steps": self.consecutive_steps,
        }


def check_escape(pred: EscapePredicate, samples):
    """Classify a sequence of sampled states as ``"ok"`` or ``"escaped"``."""
    counter = 0
    for state in samples:
        counter, fired = pred.update(counter, state)
        if np.all(fired):
            return "escaped"
    return "ok"
