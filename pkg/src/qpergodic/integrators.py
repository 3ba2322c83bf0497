"""Fixed-step integration of the augmented (autonomous) systems.

Two schemes are available:

``rk4``
    Classical fourth-order Runge-Kutta on the full state ``(m, theta)``.
``symplectic4``
    Triple-jump composition of leapfrog steps applied to the time-augmented
    Hamiltonian ``Hbar(q0, p0, q, p) = p0 + H(q, p, q0)``, where ``q0`` plays
    the role of time and ``p0`` absorbs the explicit time dependence.  The
    phases are recovered as ``theta = theta0 + Omega * q0``.

:func:`integrate_batch` drives many trajectories at once and feeds the
averaging accumulators; :func:`integrate` is the single-trajectory wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .averaging import (
    CAUSE_NAMES,
    NON_FINITE,
    THRESHOLD,
    AverageAccumulator,
    EscapePredicate,
    convergence_gap,
)
from .errors import ConfigurationError, NonFiniteStateError
from .models import TWO_PI, SystemModel

RK4 = "rk4"
SYMPLECTIC4 = "symplectic4"
SCHEMES = (RK4, SYMPLECTIC4)

# triple-jump weights: w0 + 2 w1 = 1, w0^3 + 2 w1^3 = 0
_CBRT2 = 2.0 ** (1.0 / 3.0)
W1 = 1.0 / (2.0 - _CBRT2)
W0 = -_CBRT2 / (2.0 - _CBRT2)


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = RK4
    h: float = 0.01
    t_ex: float = 1.0
    checkpoint_stride: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigurationError(f"step h must be positive and finite, got {self.h}")
        if not self.t_ex >= self.h:
            raise ConfigurationError(f"horizon T_ex={self.t_ex} shorter than step h={self.h}")
        if int(self.checkpoint_stride) < 1:
            raise ConfigurationError("checkpoint_stride must be >= 1")

    @property
    def n_steps(self):
        return max(1, int(round(self.t_ex / self.h)))

    @classmethod
    def from_periods(cls, model, steps_per_period, periods, scheme=None, checkpoint_stride=None):
        """Step and horizon measured in periods of the first forcing frequency.

        The checkpoint stride defaults to one period of the slowest frequency.
        """
        period = TWO_PI / model.forcing.frequencies[0]
        h = period / steps_per_period
        if checkpoint_stride is None:
            slowest = TWO_PI / min(model.forcing.frequencies)
            checkpoint_stride = max(1, int(round(slowest / h)))
        if scheme is None:
            scheme = SYMPLECTIC4 if model.is_hamiltonian else RK4
        return cls(scheme, h, period * periods, checkpoint_stride)

    def describe(self):
        return {"scheme": self.scheme, "h": self.h, "t_ex": self.t_ex, "checkpoint_stride": self.checkpoint_stride}


# ---------------------------------------------------------------------------
# Runge-Kutta


def rk4_step(model: SystemModel, state, h, step_index=None, check=True):
    """One classical RK4 step of the autonomous augmented vector field."""
    f = model.vector_field
    with np.errstate(all="ignore"):
        k1 = f(state)
        k2 = f(state + 0.5 * h * k1)
        k3 = f(state + 0.5 * h * k2)
        k4 = f(state + h * k3)
        out = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if check and not np.all(np.isfinite(out)):
        raise NonFiniteStateError(step_index)
    return out


# ---------------------------------------------------------------------------
# augmented Hamiltonian


@dataclass
class AugmentedState:
    """Phase point of the time-augmented system.

    ``q0`` (time surrogate) is shared by the batch; ``theta0`` holds the
    initial phases, shape ``(N, batch)`` or ``(N, 1)`` when shared.
    """

    q0: float
    p0: np.ndarray
    q: np.ndarray
    p: np.ndarray
    theta0: np.ndarray

    def copy(self):
        return AugmentedState(self.q0, self.p0.copy(), self.q.copy(), self.p.copy(), self.theta0.copy())


class AugmentedHamiltonianSystem:
    """Autonomous extension ``Hbar = p0 + H(q, p, q0)`` of a time-dependent Hamiltonian model.

    The model's kinetic/potential splitting lifts to ``Tbar = T(p) + p0`` and
    ``Vbar = V(q, q0)``; the ``p0`` kick uses the chain rule through the phases.
    """

    def __init__(self, base: SystemModel):
        self.base = base
        self.splitting = base.splitting
        self.n = base.dim_m // 2
        self.omega = base.forcing.omega[:, None]

    def theta(self, state: AugmentedState):
        return state.theta0 + self.omega * state.q0

    def full_state(self, state: AugmentedState):
        """``(q, p, theta)`` stacked into the model's state layout, phases unreduced."""
        batch = state.q.shape[1:]
        theta = np.broadcast_to(self.theta(state), (self.omega.shape[0],) + batch)
        return np.concatenate([state.q, state.p, theta], axis=0)

    def base_hamiltonian(self, state: AugmentedState):
        return self.base.hamiltonian(self.full_state(state))

    def hamiltonian(self, state: AugmentedState):
        return state.p0 + self.base_hamiltonian(state)

    def initial_state(self, ic, t0=0.0):
        """Lift full states ``(q, p, theta)`` at time ``t0``; ``p0`` is set so that ``Hbar = 0``."""
        ic = np.asarray(ic, dtype=float)
        if ic.ndim == 1:
            ic = ic[:, None]
        n = self.n
        theta0 = ic[2 * n:] - self.omega * t0
        if theta0.shape[1] > 1 and np.all(theta0 == theta0[:, :1]):
            theta0 = theta0[:, :1].copy()
        state = AugmentedState(float(t0), np.zeros(ic.shape[1:]), ic[:n].copy(), ic[n:2 * n].copy(), theta0)
        state.p0 = -self.base_hamiltonian(state)
        return state


def augment_hamiltonian(model: SystemModel) -> AugmentedHamiltonianSystem:
    if not model.is_hamiltonian:
        raise ConfigurationError(f"model {model.name!r} has no Hamiltonian splitting; symplectic4 unavailable")
    return AugmentedHamiltonianSystem(model)


def _leapfrog(aug, s, h):
    sp = aug.splitting
    half = 0.5 * h
    q = s.q + half * sp.kinetic_grad(s.p)
    q0 = s.q0 + half
    theta = s.theta0 + aug.omega * q0
    p = s.p - h * sp.potential_grad_q(q, theta)
    dv_dq0 = np.sum(aug.omega * sp.potential_grad_theta(q, theta), axis=0)
    p0 = s.p0 - h * dv_dq0
    q = q + half * sp.kinetic_grad(p)
    return AugmentedState(q0 + half, p0, q, p, s.theta0)


def symplectic4_step(aug: AugmentedHamiltonianSystem, state: AugmentedState, h, step_index=None, check=True):
    """One fourth-order composition step (weights ``W1, W0, W1``)."""
    t_start = state.q0
    s = state
    for w in (W1, W0, W1):
        s = _leapfrog(aug, s, w * h)
    s.q0 = t_start + h
    if check and not (np.all(np.isfinite(s.q)) and np.all(np.isfinite(s.p))):
        raise NonFiniteStateError(step_index)
    return s


# ---------------------------------------------------------------------------
# driver


@dataclass
class BatchResult:
    """Outcome of integrating a batch of trajectories.

    ``final_state`` is in the model layout with circle coordinates unwrapped;
    use ``model.wrap`` for reduced values and winding counts.
    """

    final_state: np.ndarray
    steps: np.ndarray
    escaped: np.ndarray
    cause: np.ndarray
    t_escape: np.ndarray
    accumulators: dict
    config: IntegratorConfig
    energy: np.ndarray = None

    def averages(self, obs_id):
        acc = self.accumulators[obs_id]
        return acc.partial_average()

    def gaps(self, obs_id):
        acc = self.accumulators[obs_id]
        times, _ = acc.checkpoints
        if len(times) < 2:
            return np.zeros(acc.size)
        return np.atleast_1d(convergence_gap(acc))


def _check_ic(model, ics):
    ics = np.asarray(ics, dtype=float)
    if ics.ndim == 1:
        ics = ics[:, None]
    if ics.shape[0] != model.dim:
        raise ConfigurationError(f"initial state has {ics.shape[0]} components, model {model.name} needs {model.dim}")
    if not np.all(np.isfinite(ics)):
        raise ConfigurationError("initial states must be finite")
    return ics


def integrate_batch(model: SystemModel, ics, config: IntegratorConfig, observables=(), escape: EscapePredicate = None,
                    record_energy=False):
    """Integrate every column of ``ics`` from ``t = 0`` to ``config.t_ex``.

    Trajectories whose escape predicate fires, or that turn non-finite, are
    frozen and flagged; the run stops early once every member is frozen.
    """
    ics = _check_ic(model, ics)
    batch = ics.shape[1]
    if escape is not None and escape.coordinate >= model.dim_m:
        raise ConfigurationError(f"escape coordinate {escape.coordinate} outside model state")
    h = config.h
    symplectic = config.scheme == SYMPLECTIC4
    if symplectic:
        aug = augment_hamiltonian(model)
        state = aug.initial_state(ics)
        full = aug.full_state(state)
    else:
        state = ics.copy()
        full = state

    with np.errstate(all="ignore"):
        accs = {obs.id: AverageAccumulator(h, obs(full), config.checkpoint_stride) for obs in observables}
    escaped = np.zeros(batch, dtype=bool)
    cause = np.zeros(batch, dtype=np.int8)
    t_escape = np.full(batch, np.nan)
    steps = np.zeros(batch, dtype=np.int64)
    counter = np.zeros(batch, dtype=np.int64)
    energy = [] if (record_energy and symplectic) else None
    final = full.copy()

    with np.errstate(all="ignore"):
        for k in range(1, config.n_steps + 1):
            if symplectic:
                state = symplectic4_step(aug, state, h, k, check=False)
                state.q0 = k * h
                full = aug.full_state(state)
            else:
                state = rk4_step(model, state, h, k, check=False)
                full = state
            was_live = ~escaped
            bad = was_live & ~np.all(np.isfinite(full), axis=0)
            if bad.any():
                escaped |= bad
                cause[bad] = NON_FINITE
                t_escape[bad] = k * h
                for acc in accs.values():
                    acc.mark_escaped(bad, NON_FINITE, k * h)
            if escape is not None:
                counter, fired = escape.update(counter, full)
                fired &= ~escaped
                if fired.any():
                    escaped |= fired
                    cause[fired] = THRESHOLD
                    t_escape[fired] = k * h
                    for acc in accs.values():
                        acc.mark_escaped(fired, THRESHOLD, k * h)
            live = ~escaped
            final[:, was_live] = full[:, was_live]
            steps[was_live] = k
            for obs in observables:
                accs[obs.id].accumulate(obs(full), live)
            if energy is not None:
                energy.append(aug.hamiltonian(state))
            if escaped.all():
                break
    for acc in accs.values():
        acc.finalize()
    return BatchResult(final, steps, escaped, cause, t_escape, accs, config,
                       None if energy is None else np.array(energy))


@dataclass
class ObservableAverage:
    value: float
    checkpoints: list
    gap: float


@dataclass
class TrajectoryResult:
    """Single-trajectory summary: wrapped terminal state plus winding counts."""

    state: np.ndarray
    winding: np.ndarray
    t_final: float
    steps: int
    escaped: bool
    cause: str = None
    t_escape: float = None
    averages: dict = field(default_factory=dict)

    @property
    def unwrapped_state(self):
        out = self.state.copy()
        out[: len(self.winding)] += TWO_PI * self.winding
        return out


def integrate(model: SystemModel, ic, config: IntegratorConfig, observables=(), escape: EscapePredicate = None):
    """Integrate one trajectory and summarise its running averages."""
    res = integrate_batch(model, ic, config, observables, escape)
    wrapped, winding = model.wrap(res.final_state[:, 0])
    escaped = bool(res.escaped[0])
    averages = {}
    for obs in observables:
        acc = res.accumulators[obs.id]
        times, values = acc.checkpoints
        if escaped:
            averages[obs.id] = ObservableAverage(math.nan, list(zip(times, values[:, 0])), math.nan)
        else:
            gap = convergence_gap(acc) if len(times) >= 2 else 0.0
            averages[obs.id] = ObservableAverage(float(acc.partial_average()[0]), list(zip(times, values[:, 0])), gap)
    steps = int(res.steps[0])
    return TrajectoryResult(
        state=wrapped,
        winding=winding,
        t_final=steps * config.h,
        steps=steps,
        escaped=escaped,
        cause=CAUSE_NAMES[int(res.cause[0])],
        t_escape=None if not escaped else float(res.t_escape[0]),
        averages=averages,
    )


def hamiltonian_drift(values, times):
    """Secular drift of a conserved quantity: least-squares trend over the run times its duration.

    Bounded oscillation of order ``h**4`` is expected from a symplectic scheme
    and is not drift; see :func:`hamiltonian_excursion` for its amplitude.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    slope = np.polyfit(times - times.mean(), values, 1)[0]
    return np.abs(slope) * (times[-1] - times[0])


def hamiltonian_excursion(values, reference=0.0):
    return np.max(np.abs(np.asarray(values) - reference), axis=0)
