"""Self-checks against closed forms, order conditions and conservation.

Each suite returns a list of :class:`Check` records; ``verify`` on the command
line prints them and exits non-zero when any fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .averaging import EscapePredicate, get_observable
from .integrators import (
    SYMPLECTIC4,
    W0,
    W1,
    IntegratorConfig,
    augment_hamiltonian,
    hamiltonian_drift,
    integrate_batch,
    symplectic4_step,
)
from .models import (
    DissipativeSystem,
    HarmonicOscillator,
    QuasiperiodicForcing,
    SwingModel,
    SwingParameters,
    dissipative_exact_average,
    harmonic_exact_average,
)

SEED = 20191101

REFERENCE_HARMONIC = QuasiperiodicForcing((math.pi / 3, 1.1), (0.2, 0.2))
DISSIPATIVE_CASE = QuasiperiodicForcing((math.sqrt(2.0),), (1.0,))


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{flag}  {self.name}: measured {self.measured:.6g}, tolerance {self.tolerance:.6g}{extra}"


def _upper(name, measured, tol, detail=""):
    return Check(name, float(measured), tol, bool(measured < tol), detail)


def _band(name, measured, lo, hi, detail=""):
    return Check(name, float(measured), hi, bool(lo <= measured <= hi), f"accepted band [{lo}, {hi}]" + (
        f"; {detail}" if detail else ""))


# ---------------------------------------------------------------------------
# studies reused by the suites and the tests


def dissipative_average_study(n_ic=20, t_ex=5000.0, h=0.1, m_range=1.0, seed=SEED):
    """Numerical averages of ``m**2`` for random ``(m0, theta0)``; returns ``(averages, exact)``."""
    model = DissipativeSystem(DISSIPATIVE_CASE, 1.0)
    rng = np.random.default_rng(seed)
    ics = np.stack([rng.uniform(-m_range, m_range, n_ic), rng.uniform(0, 2 * math.pi, n_ic)])
    cfg = IntegratorConfig("rk4", h, t_ex, max(1, int(round(2 * math.pi / math.sqrt(2) / h))))
    res = integrate_batch(model, ics, cfg, [get_observable("m_squared")])
    return res.averages("m_squared"), dissipative_exact_average(1.0, DISSIPATIVE_CASE)


def harmonic_average_study(n_ic=10, t_ex=2000 * 2 * math.pi, steps_per_period=64, m_range=5.0, seed=SEED):
    """Numerical vs closed-form averages of ``m1**2`` at the reference forcing; returns ``(numeric, exact)``."""
    model = HarmonicOscillator(REFERENCE_HARMONIC)
    rng = np.random.default_rng(seed)
    ics = np.vstack([rng.uniform(-m_range, m_range, (2, n_ic)), rng.uniform(0, 2 * math.pi, (2, n_ic))])
    h = 2 * math.pi / REFERENCE_HARMONIC.frequencies[0] / steps_per_period
    cfg = IntegratorConfig("rk4", h, t_ex, steps_per_period)
    res = integrate_batch(model, ics, cfg, [get_observable("m1_squared")])
    return res.averages("m1_squared"), np.array([harmonic_exact_average(ics[:, k], REFERENCE_HARMONIC) for k in range(n_ic)])


def rk4_order_study(h=0.1, t_ex=20.0):
    """Global error of RK4 on the forced oscillator at ``h`` and ``h/2``; returns ``(e_h, e_h2)``."""
    model = HarmonicOscillator(REFERENCE_HARMONIC)
    ic = np.array([1.0, -0.5, 0.3, 1.2])
    exact = model.exact_solution(ic, t_ex)[:2]
    errs = []
    for step in (h, h / 2):
        res = integrate_batch(model, ic, IntegratorConfig("rk4", step, t_ex))
        errs.append(float(np.max(np.abs(res.final_state[:2, 0] - exact))))
    return tuple(errs)


def unforced_swing():
    return SwingModel(SwingParameters(modes=(1,), amplitudes=(0.0,)))


def symplectic_order_study(h=0.2, t_ex=20.0, ic=(1.4, 0.05)):
    """Global error of symplectic4 on the unforced swing model against an ``h/64`` reference."""
    model = unforced_swing()
    ic = np.array([ic[0], ic[1], 0.0])
    ref = integrate_batch(model, ic, IntegratorConfig(SYMPLECTIC4, h / 64, t_ex)).final_state[:2, 0]
    errs = []
    for step in (h, h / 2):
        res = integrate_batch(model, ic, IntegratorConfig(SYMPLECTIC4, step, t_ex))
        errs.append(float(np.max(np.abs(res.final_state[:2, 0] - ref))))
    return tuple(errs)


def hamiltonian_conservation_study(periods=200, steps_per_period=16, modes=(1,), ic=None):
    """``Hbar`` along a forced swing trajectory; returns ``(drift, max excursion)``."""
    model = SwingModel(SwingParameters(modes=modes))
    cfg = IntegratorConfig.from_periods(model, steps_per_period, periods, SYMPLECTIC4)
    if ic is None:
        ic = (model.equilibrium() + 0.05, 0.02)
    state = np.array([ic[0], ic[1]] + [0.0] * len(modes))
    res = integrate_batch(model, state, cfg, (), EscapePredicate(), record_energy=True)
    if res.escaped[0]:
        raise RuntimeError("conservation study trajectory escaped; choose a bounded initial condition")
    times = cfg.h * np.arange(1, len(res.energy) + 1)
    hbar = res.energy[:, 0]
    return float(hamiltonian_drift(hbar, times)), float(np.max(np.abs(hbar)))


def reversibility_study(n=1000, h=0.01, ic=(1.4, 0.05)):
    aug = augment_hamiltonian(unforced_swing())
    s0 = aug.initial_state(np.array([ic[0], ic[1], 0.0]))
    s = s0.copy()
    for _ in range(n):
        s = symplectic4_step(aug, s, h)
    for _ in range(n):
        s = symplectic4_step(aug, s, -h)
    return float(max(np.max(np.abs(s.q - s0.q)), np.max(np.abs(s.p - s0.p))))


# ---------------------------------------------------------------------------
# suites


def verify_dissipative():
    avg, exact = dissipative_average_study()
    err = np.abs(avg - exact)
    checks = [
        _upper("dissipative: max |<m^2> - 1/6| over 20 initial conditions", err.max(), 2e-3,
               f"lam=1, F=1, Omega=sqrt(2), exact {exact:.6f}"),
        _upper("dissipative: std of <m^2> across initial conditions", np.std(avg, ddof=1), 1e-3),
    ]
    model = DissipativeSystem(DISSIPATIVE_CASE, 1.0)
    ic = np.array([2.0, 0.7])
    t = 10 * 2 * math.pi / math.sqrt(2)
    res = integrate_batch(model, ic, IntegratorConfig("rk4", 1e-3, t))
    t_run = res.steps[0] * 1e-3
    e = np.max(np.abs(res.final_state[:1, 0] - model.exact_solution(ic, t_run)[:1]))
    checks.append(_upper("dissipative: trajectory vs closed form, h=1e-3, 10 periods", e, 1e-6))
    return checks


def verify_harmonic():
    num, exact = harmonic_average_study()
    rel = np.max(np.abs(num - exact) / np.abs(exact))
    checks = [_upper("harmonic: max relative error of <m1^2> vs closed form (10 ic, T=2000*2pi)", rel, 1e-2)]
    model = HarmonicOscillator(REFERENCE_HARMONIC)
    ic = np.array([1.0, 0.5, 0.0, 0.0])
    t = 10 * 2 * math.pi / REFERENCE_HARMONIC.frequencies[0]
    res = integrate_batch(model, ic, IntegratorConfig("rk4", 1e-3, t))
    t_run = res.steps[0] * 1e-3
    e = np.max(np.abs(res.final_state[:2, 0] - model.exact_solution(ic, t_run)[:2]))
    checks.append(_upper("harmonic: trajectory vs closed form, h=1e-3, 10 periods", e, 1e-6))
    return checks


def verify_integrator():
    checks = [
        _upper("triple-jump consistency |w0 + 2 w1 - 1|", abs(W0 + 2 * W1 - 1), 1e-15),
        _upper("triple-jump order |w0^3 + 2 w1^3|", abs(W0**3 + 2 * W1**3), 1e-14),
    ]
    e1, e2 = rk4_order_study()
    checks.append(_band("rk4 order ratio (harmonic, h=0.1 -> 0.05)", e1 / e2, 14, 18))
    e1, e2 = symplectic_order_study()
    checks.append(_band("symplectic4 order ratio (unforced swing, h=0.2 -> 0.1)", e1 / e2, 14, 18))
    drift, excursion = hamiltonian_conservation_study()
    checks.append(_upper("symplectic4 Hbar secular drift, 200 periods, N=16", drift, 1e-8,
                         f"bounded oscillation amplitude {excursion:.3g}"))
    checks.append(_upper("symplectic4 time reversibility, n=1000, h=0.01", reversibility_study(), 1e-10))
    return checks


SUITES = {"harmonic": verify_harmonic, "dissipative": verify_dissipative, "integrator": verify_integrator}
