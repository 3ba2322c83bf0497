"""Built-in quasiperiodically forced systems.

Every model acts on the augmented state ``(m, theta)`` where ``m`` lives in the
physical state space and ``theta`` collects the forcing phases.  States are
numpy arrays whose first axis is the coordinate index; any trailing axes are
treated as a batch, so a whole grid of initial conditions can be evaluated in
one call.

Three templates are provided:

* :class:`HarmonicOscillator` -- ``m1' = m2, m2' = -m1 + sum F_i sin(theta_i)``
* :class:`DissipativeSystem`  -- ``m' = -lam m + sum F_i sin(theta_i)``
* :class:`SwingModel`         -- averaged swing dynamics of a loop power grid
  with modal forcing, a time-dependent Hamiltonian system on the cylinder.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ResonanceError, ResonanceWarning

TWO_PI = 2.0 * math.pi

# Integer-relation scan depth and threshold for the near-resonance diagnostic.
K_CHECK = 5
EPS_RES = 1e-9
# Guard for the 1 - Omega^2 and lam^2 + Omega^2 denominators.
EPS_DEN = 1e-12

LINE = "line"
CIRCLE = "circle"


def find_resonances(frequencies, max_order=K_CHECK, tol=EPS_RES):
    """Return integer vectors ``k`` with ``0 < max|k_i| <= max_order`` and ``|k . Omega| <= tol``.

    Only one of ``k`` / ``-k`` is reported.  For many frequencies the scan
    depth is reduced so that at most ~2e6 vectors are enumerated.
    """
    omega = np.asarray(frequencies, dtype=float)
    n = omega.size
    order = max_order
    while order > 1 and (2 * order + 1) ** n > 2_000_000:
        order -= 1
    rng = np.arange(-order, order + 1)
    ks = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64)
    ks = ks[np.any(ks != 0, axis=1)]
    # canonical sign: first nonzero entry positive
    first = ks[np.arange(len(ks)), np.argmax(ks != 0, axis=1)]
    ks = ks[first > 0]
    hits = np.abs(ks @ omega) <= tol
    return [tuple(int(v) for v in k) for k in ks[hits]]


@dataclass(frozen=True)
class QuasiperiodicForcing:
    """Frequencies, amplitudes and initial phases of the torus drive."""

    frequencies: tuple
    amplitudes: tuple
    phases: tuple = None

    def __post_init__(self):
        freqs = tuple(float(w) for w in np.atleast_1d(self.frequencies))
        amps = tuple(float(a) for a in np.atleast_1d(self.amplitudes))
        phases = self.phases
        if phases is None:
            phases = (0.0,) * len(freqs)
        phases = tuple(float(p) % TWO_PI for p in np.atleast_1d(phases))
        if len(freqs) < 1:
            raise ConfigurationError("forcing needs at least one frequency")
        if not (len(freqs) == len(amps) == len(phases)):
            raise ConfigurationError(
                f"frequencies/amplitudes/phases lengths differ: "
                f"{len(freqs)}/{len(amps)}/{len(phases)}"
            )
        if not all(np.isfinite(freqs)) or not all(np.isfinite(amps)):
            raise ConfigurationError("forcing parameters must be finite")
        if any(w <= 0 for w in freqs):
            raise ConfigurationError(f"frequencies must be strictly positive, got {freqs}")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)
        relations = find_resonances(freqs)
        if relations:
            warnings.warn(
                f"forcing frequencies {freqs} are near-resonant, e.g. k={relations[0]}",
                ResonanceWarning,
                stacklevel=3,
            )

    @property
    def count(self):
        return len(self.frequencies)

    @property
    def omega(self):
        return np.array(self.frequencies)

    @property
    def amp(self):
        return np.array(self.amplitudes)

    def with_phases(self, phases):
        return QuasiperiodicForcing(self.frequencies, self.amplitudes, tuple(phases))


def _col(v, like):
    """Reshape a per-frequency vector so it broadcasts against ``like[k:]`` batches."""
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape + (1,) * (np.ndim(like) - 1))


# ---------------------------------------------------------------------------
# harmonic oscillator


def _harmonic_denominators(forcing):
    den = 1.0 - forcing.omega**2
    if np.any(np.abs(den) < EPS_DEN):
        raise ResonanceError(f"forcing frequency equals the natural frequency 1: {forcing.frequencies}")
    return den


def harmonic_rhs(state, params: QuasiperiodicForcing):
    """Vector field of the forced harmonic oscillator on ``(m1, m2, theta_1..theta_N)``."""
    state = np.asarray(state, dtype=float)
    m1, m2, theta = state[0], state[1], state[2:]
    force = np.sum(_col(params.amp, state) * np.sin(theta), axis=0)
    out = np.empty_like(state)
    out[0] = m2
    out[1] = -m1 + force
    out[2:] = _col(params.omega, state)
    return out


def _harmonic_constants(ic, params):
    # free-oscillation coefficients for the sin-forced equation; the forced
    # response is A_i sin(Omega_i t + theta_i0) with A_i = F_i / (1 - Omega_i^2)
    ic = np.asarray(ic, dtype=float)
    den = _col(_harmonic_denominators(params), ic[2:])
    amp, omega = _col(params.amp, ic[2:]), _col(params.omega, ic[2:])
    theta0 = ic[2:]
    c1 = ic[0] - np.sum(amp / den * np.sin(theta0), axis=0)
    c2 = ic[1] - np.sum(amp * omega / den * np.cos(theta0), axis=0)
    return c1, c2


def harmonic_exact_solution(ic, t, params: QuasiperiodicForcing):
    """Closed-form state at time ``t`` from ``ic = (m10, m20, theta_10..theta_N0)``.

    Phases in the returned state are not reduced modulo 2*pi.
    """
    ic = np.asarray(ic, dtype=float)
    if t == 0:
        return ic.copy()
    c1, c2 = _harmonic_constants(ic, params)
    den = _col(_harmonic_denominators(params), ic[2:])
    amp, omega = _col(params.amp, ic[2:]), _col(params.omega, ic[2:])
    phase = omega * t + ic[2:]
    m1 = c1 * np.cos(t) + c2 * np.sin(t) + np.sum(amp / den * np.sin(phase), axis=0)
    m2 = -c1 * np.sin(t) + c2 * np.cos(t) + np.sum(amp * omega / den * np.cos(phase), axis=0)
    return np.concatenate([np.stack([m1, m2]), phase], axis=0)


def harmonic_exact_average(ic, params: QuasiperiodicForcing):
    """Infinite-time average of ``m1**2`` starting from ``ic``."""
    c1, c2 = _harmonic_constants(ic, params)
    den = _harmonic_denominators(params)
    return 0.5 * (c1**2 + c2**2 + np.sum(params.amp**2 / den**2))


def harmonic_level_set_center(params: QuasiperiodicForcing, phases):
    """Center of the circular level sets of the averaged ``m1**2`` in the ``(m10, m20)`` plane.

    Level sets are the circles ``C_1^2 + C_2^2 = const``, centred where both
    free-oscillation coefficients vanish.
    """
    den = _harmonic_denominators(params)
    phases = np.asarray(phases, dtype=float)
    x = np.sum(params.amp * np.sin(phases) / den)
    y = np.sum(params.amp * params.omega * np.cos(phases) / den)
    return float(x), float(y)


# ---------------------------------------------------------------------------
# dissipative system


def _check_decay(decay):
    if not decay > 0:
        raise ConfigurationError(f"decay rate must be positive, got {decay}")


def dissipative_rhs(state, decay, params: QuasiperiodicForcing):
    """Vector field ``(-lam m + sum F_i sin theta_i, Omega_1..Omega_N)``."""
    _check_decay(decay)
    state = np.asarray(state, dtype=float)
    out = np.empty_like(state)
    out[0] = -decay * state[0] + np.sum(_col(params.amp, state) * np.sin(state[1:]), axis=0)
    out[1:] = _col(params.omega, state)
    return out


def dissipative_exact_solution(ic, t, decay, params: QuasiperiodicForcing):
    _check_decay(decay)
    ic = np.asarray(ic, dtype=float)
    den = decay**2 + params.omega**2
    if np.any(den < EPS_DEN):
        raise ResonanceError("vanishing denominator lam^2 + Omega^2")
    k = _col(params.amp / den, ic[1:])
    omega = _col(params.omega, ic[1:])
    theta0 = ic[1:]
    c = ic[0] - np.sum(k * (decay * np.sin(theta0) - omega * np.cos(theta0)), axis=0)
    phase = omega * t + theta0
    m = c * np.exp(-decay * t) + np.sum(k * (decay * np.sin(phase) - omega * np.cos(phase)), axis=0)
    return np.concatenate([m[None], phase], axis=0)


def dissipative_exact_average(decay, params: QuasiperiodicForcing):
    """Average of ``m**2``; the same for every initial condition."""
    _check_decay(decay)
    den = decay**2 + params.omega**2
    if np.any(den < EPS_DEN):
        raise ResonanceError("vanishing denominator lam^2 + Omega^2")
    return float(0.5 * np.sum(params.amp**2 / den))


# ---------------------------------------------------------------------------
# swing model


@dataclass(frozen=True)
class SwingParameters:
    """Parameters of the averaged loop-grid swing equation.

    ``amplitudes`` defaults to an equal split ``1.5 / sqrt(len(modes))`` so that
    the root-sum-square of the modal amplitudes is 1.5.
    """

    p_m: float = 0.95
    b: float = 1.0
    b_int: float = 100.0
    n_generators: int = 20
    modes: tuple = (1,)
    amplitudes: tuple = None

    def __post_init__(self):
        modes = tuple(int(j) for j in np.atleast_1d(self.modes))
        if int(self.n_generators) != self.n_generators or self.n_generators < 1:
            raise ConfigurationError(f"generator count must be a positive integer, got {self.n_generators}")
        object.__setattr__(self, "n_generators", int(self.n_generators))
        if not modes:
            raise ConfigurationError("mode set must be non-empty")
        if len(set(modes)) != len(modes):
            raise ConfigurationError(f"duplicate modes in {modes}")
        for j in modes:
            if not 1 <= j <= self.n_generators - 1:
                raise ConfigurationError(
                    f"mode index {j} outside 1..{self.n_generators - 1} (zero frequency or out of range)"
                )
        amps = self.amplitudes
        if amps is None:
            amps = (1.5 / math.sqrt(len(modes)),) * len(modes)
        amps = tuple(float(a) for a in np.atleast_1d(amps))
        if len(amps) != len(modes):
            raise ConfigurationError(f"{len(amps)} amplitudes for {len(modes)} modes")
        for name in ("p_m", "b", "b_int"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "amplitudes", amps)


def mode_frequency(j, params: SwingParameters):
    """Eigenfrequency ``2 sqrt|b_int| |sin(pi j / N_G)|`` of loop mode ``j``."""
    ng = params.n_generators
    if not 1 <= j <= ng - 1:
        raise ConfigurationError(f"mode index {j} outside 1..{ng - 1}")
    return 2.0 * math.sqrt(abs(params.b_int)) * abs(math.sin(math.pi * j / ng))


def mode_shape(i, j, params: SwingParameters):
    """Modal amplitude of generator ``i`` in mode ``j``."""
    ng = params.n_generators
    if not 1 <= i <= ng:
        raise ConfigurationError(f"generator index {i} outside 1..{ng}")
    if not 1 <= j <= ng - 1:
        raise ConfigurationError(f"mode index {j} outside 1..{ng - 1}")
    return math.sqrt(2.0 / ng) * math.cos(2.0 * math.pi * i * j / ng + math.pi / 4.0)


def swing_forcing(params: SwingParameters, phases=None):
    freqs = [mode_frequency(j, params) for j in params.modes]
    return QuasiperiodicForcing(tuple(freqs), params.amplitudes, phases)


def _mode_matrix(params):
    return np.array([[mode_shape(i, j, params) for j in params.modes] for i in range(1, params.n_generators + 1)])


class _SwingTerms:
    """Precomputed modal coupling for the swing model.

    The generator sum ``sum_i sin(a_i + delta)`` is evaluated through
    ``cos(delta) sum_i sin(a_i) + sin(delta) sum_i cos(a_i)`` which needs two
    trig calls per state instead of ``N_G``.
    """

    def __init__(self, params):
        self.params = params
        self.e = _mode_matrix(params)  # (N_G, J)
        self.c = np.array(params.amplitudes)
        self.scale = params.b / params.n_generators

    def phase_sums(self, theta):
        """Return ``a`` sums: (sum sin a, sum cos a, e^T sin a, e^T cos a) for modal offsets ``a``."""
        theta = np.asarray(theta, dtype=float)
        flat = theta.reshape(theta.shape[0], -1)
        a = self.e @ (self.c[:, None] * np.cos(flat))  # (N_G, B)
        sa, ca = np.sin(a), np.cos(a)
        bshape = theta.shape[1:]
        return sa, ca, bshape

    def sin_sum(self, delta, theta):
        sa, ca, bshape = self.phase_sums(theta)
        s = sa.sum(axis=0).reshape(bshape)
        c = ca.sum(axis=0).reshape(bshape)
        return np.cos(delta) * s + np.sin(delta) * c

    def cos_sum(self, delta, theta):
        sa, ca, bshape = self.phase_sums(theta)
        s = sa.sum(axis=0).reshape(bshape)
        c = ca.sum(axis=0).reshape(bshape)
        return np.cos(delta) * c - np.sin(delta) * s

    def theta_gradient(self, delta, theta):
        """d/dtheta_j of ``-scale * sum_i cos(a_i + delta)``; shape ``theta.shape``."""
        theta = np.asarray(theta, dtype=float)
        sa, ca, bshape = self.phase_sums(theta)
        es = (self.e.T @ sa).reshape(theta.shape)
        ec = (self.e.T @ ca).reshape(theta.shape)
        # sum_i e_ij sin(a_i + delta)
        proj = np.cos(delta) * es + np.sin(delta) * ec
        return -self.scale * _col(self.c, theta) * np.sin(theta) * proj


def swing_rhs(state, params: SwingParameters, _terms=None):
    """Vector field on ``(delta, omega, theta_j for j in modes)``; delta is reduced mod 2*pi."""
    terms = _terms or _SwingTerms(params)
    state = np.asarray(state, dtype=float)
    delta = np.mod(state[0], TWO_PI)
    out = np.empty_like(state)
    out[0] = state[1]
    out[1] = params.p_m - terms.scale * terms.sin_sum(delta, state[2:])
    out[2:] = _col([mode_frequency(j, params) for j in params.modes], state)
    return out


def swing_hamiltonian(state, params: SwingParameters, _terms=None):
    """Time-dependent energy; ``delta`` must be the unwrapped angle (secular ``-p_m delta`` term)."""
    terms = _terms or _SwingTerms(params)
    state = np.asarray(state, dtype=float)
    delta, omega = state[0], state[1]
    return 0.5 * omega**2 - params.p_m * delta - terms.scale * terms.cos_sum(delta, state[2:])


# ---------------------------------------------------------------------------
# model objects


@dataclass(frozen=True)
class Splitting:
    """Separable decomposition ``H(q, p, theta) = T(p) + V(q, theta)``.

    Gradients are analytic; ``potential_grad_theta`` returns one row per phase.
    """

    kinetic: object
    kinetic_grad: object
    potential: object
    potential_grad_q: object
    potential_grad_theta: object


class SystemModel:
    """Common interface of the built-in models.

    Subclasses set ``name``, ``dim_m``, ``topology`` and ``forcing`` and
    implement :meth:`vector_field`.  Hamiltonian models also provide
    :meth:`hamiltonian` and :attr:`splitting`.
    """

    name = "abstract"
    dim_m = 0
    topology = ()
    coordinate_names = ()
    forcing: QuasiperiodicForcing = None
    splitting = None

    def vector_field(self, state):
        raise NotImplementedError

    def hamiltonian(self, state):
        return None

    @property
    def is_hamiltonian(self):
        return self.splitting is not None

    @property
    def dim(self):
        return self.dim_m + self.forcing.count

    def coordinate_index(self, name):
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.dim_m:
                raise ConfigurationError(f"coordinate index {name} out of range for {self.name}")
            return int(name)
        try:
            return self.coordinate_names.index(name)
        except ValueError:
            raise ConfigurationError(
                f"unknown coordinate {name!r} for model {self.name}; expected one of {self.coordinate_names}"
            ) from None

    @property
    def state_names(self):
        """Coordinate names followed by ``theta1..thetaN``."""
        return tuple(self.coordinate_names) + tuple(f"theta{i + 1}" for i in range(self.forcing.count))

    def axis_index(self, name):
        """Index of a scan-axis coordinate; unlike :meth:`coordinate_index` this also accepts phases."""
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.dim:
                raise ConfigurationError(f"axis coordinate {name} out of range for {self.name}")
            return int(name)
        try:
            return self.state_names.index(name)
        except ValueError:
            raise ConfigurationError(
                f"unknown coordinate {name!r} for model {self.name}; expected one of {self.state_names}"
            ) from None

    def axis_topology(self, c):
        return self.topology[c] if c < self.dim_m else CIRCLE

    def wrap(self, state):
        """Reduce circular coordinates to [0, 2*pi); returns (wrapped, winding counts)."""
        state = np.array(state, dtype=float)
        winding = np.zeros((self.dim_m,) + state.shape[1:], dtype=np.int64)
        for k, topo in enumerate(self.topology):
            if topo == CIRCLE:
                winding[k] = np.floor_divide(state[k], TWO_PI).astype(np.int64)
                state[k] = np.mod(state[k], TWO_PI)
        state[self.dim_m:] = np.mod(state[self.dim_m:], TWO_PI)
        return state, winding

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"

    def describe(self):
        return {}


class HarmonicOscillator(SystemModel):
    name = "harmonic"
    dim_m = 2
    topology = (LINE, LINE)
    coordinate_names = ("m1", "m2")

    def __init__(self, forcing: QuasiperiodicForcing):
        self.forcing = forcing

    def vector_field(self, state):
        return harmonic_rhs(state, self.forcing)

    def exact_solution(self, ic, t):
        return harmonic_exact_solution(ic, t, self.forcing)

    def exact_average(self, ic):
        return harmonic_exact_average(ic, self.forcing)

    def level_set_center(self, phases):
        return harmonic_level_set_center(self.forcing, phases)

    def describe(self):
        return {"frequencies": list(self.forcing.frequencies), "amplitudes": list(self.forcing.amplitudes)}


class DissipativeSystem(SystemModel):
    name = "dissipative"
    dim_m = 1
    topology = (LINE,)
    coordinate_names = ("m",)

    def __init__(self, forcing: QuasiperiodicForcing, decay: float = 1.0):
        _check_decay(decay)
        self.forcing = forcing
        self.decay = float(decay)

    def vector_field(self, state):
        return dissipative_rhs(state, self.decay, self.forcing)

    def exact_solution(self, ic, t):
        return dissipative_exact_solution(ic, t, self.decay, self.forcing)

    def exact_average(self, ic=None):
        return dissipative_exact_average(self.decay, self.forcing)

    def describe(self):
        return {
            "decay": self.decay,
            "frequencies": list(self.forcing.frequencies),
            "amplitudes": list(self.forcing.amplitudes),
        }


class SwingModel(SystemModel):
    """Averaged swing dynamics ``(delta, omega)`` on the cylinder with modal forcing."""

    name = "swing"
    dim_m = 2
    topology = (CIRCLE, LINE)
    coordinate_names = ("delta", "omega")

    def __init__(self, params: SwingParameters = None):
        self.params = params or SwingParameters()
        self.forcing = swing_forcing(self.params)
        self._terms = _SwingTerms(self.params)
        p_m, terms = self.params.p_m, self._terms
        self.splitting = Splitting(
            kinetic=lambda p: 0.5 * p**2,
            kinetic_grad=lambda p: p,
            potential=lambda q, theta: -p_m * q - terms.scale * terms.cos_sum(q, theta),
            potential_grad_q=lambda q, theta: -p_m + terms.scale * terms.sin_sum(q, theta),
            potential_grad_theta=terms.theta_gradient,
        )

    # lambdas above are rebuilt on unpickle
    def __getstate__(self):
        return {"params": self.params}

    def __setstate__(self, state):
        self.__init__(state["params"])

    def vector_field(self, state):
        return swing_rhs(state, self.params, self._terms)

    def hamiltonian(self, state):
        return swing_hamiltonian(state, self.params, self._terms)

    def equilibrium(self):
        """Stable equilibrium ``delta = arcsin(p_m / b)`` of the unforced system."""
        return math.asin(self.params.p_m / self.params.b)

    def describe(self):
        p = self.params
        return {
            "p_m": p.p_m,
            "b": p.b,
            "b_int": p.b_int,
            "n_generators": p.n_generators,
            "modes": list(p.modes),
            "amplitudes": list(p.amplitudes),
        }
