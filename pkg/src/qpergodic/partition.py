"""Grid sweeps, joint level sets of time-averages and boundedness verdicts.

A sweep integrates every vertex of a 2-D slice of initial conditions taken
at a fixed initial phase and records the time-average of each observable.
Binning the averages and taking the common refinement over observables gives
a finite-resolution picture of the ergodic partition restricted to the slice.
A label whose cells stay clear of every non-periodic edge of the window is
reported as a bounded slice; by the slice-to-torus argument the invariant set
it belongs to is then uniformly bounded over all phases.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .averaging import EscapePredicate
from .errors import ConfigurationError, DomainMismatchError
from .integrators import IntegratorConfig, integrate_batch
from .models import CIRCLE, LINE, TWO_PI, SystemModel

VALUE = 0
ESCAPED = 1
NONCONVERGENT = 2
CELL_STATES = {VALUE: "value", ESCAPED: "escaped", NONCONVERGENT: "non-convergent"}

BOUNDED = "bounded-slice"
UNBOUNDED = "unbounded"
INCONCLUSIVE = "inconclusive-touches-boundary"

CERTIFICATION = (
    "subset certified bounded in M at theta_0 => corresponding invariant subset "
    "uniformly bounded in M x T^N"
)

DEFAULT_BINS = 32
GAP_FRACTION = 0.05
GAP_FLOOR = 1e-3
CHUNK_CELLS = 2048


@dataclass(frozen=True)
class Axis:
    coordinate: int
    lo: float
    hi: float
    n: int
    topology: str = LINE

    def __post_init__(self):
        if int(self.n) < 2:
            raise ConfigurationError(f"axis resolution must be >= 2, got {self.n}")
        if not self.lo < self.hi:
            raise ConfigurationError(f"axis range must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.topology not in (LINE, CIRCLE):
            raise ConfigurationError(f"axis topology must be {LINE!r} or {CIRCLE!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    def points(self):
        # vertex sampled: both endpoints included
        return self.lo + np.arange(self.n) * ((self.hi - self.lo) / (self.n - 1))

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.n - 1)

    def describe(self):
        return {"coordinate": self.coordinate, "lo": self.lo, "hi": self.hi, "n": self.n, "topology": self.topology}


@dataclass(frozen=True)
class ScanDomain:
    """Two-axis slice of ``M`` at initial phase ``theta0``; other ``m`` components held at ``fixed``."""

    axes: tuple
    theta0: tuple
    fixed: tuple = ()

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ConfigurationError("scan domain needs exactly two axes")
        if self.axes[0].coordinate == self.axes[1].coordinate:
            raise ConfigurationError("scan axes must be distinct coordinates")
        object.__setattr__(self, "theta0", tuple(float(t) for t in self.theta0))
        object.__setattr__(self, "fixed", tuple((int(c), float(v)) for c, v in self.fixed))

    @classmethod
    def for_model(cls, model: SystemModel, ranges, resolution, theta0, fixed=None):
        """Build a domain over coordinates named by ``ranges`` (``{name: (lo, hi)}``), topology from the model."""
        axes = []
        for (name, (lo, hi)), n in zip(ranges.items(), resolution):
            c = model.axis_index(name)
            axes.append(Axis(c, lo, hi, n, model.axis_topology(c)))
        fixed = tuple((model.coordinate_index(k), v) for k, v in (fixed or {}).items())
        return cls(tuple(axes), tuple(theta0), fixed)

    @property
    def shape(self):
        return (self.axes[0].n, self.axes[1].n)

    def validate(self, model: SystemModel):
        for a in self.axes:
            if not 0 <= a.coordinate < model.dim:
                raise ConfigurationError(f"axis coordinate {a.coordinate} outside model {model.name} state")
        for c, _ in self.fixed:
            if not 0 <= c < model.dim_m:
                raise ConfigurationError(f"fixed coordinate {c} outside model {model.name} state")
        axes_m = [a.coordinate for a in self.axes if a.coordinate < model.dim_m]
        fixed_c = [c for c, _ in self.fixed]
        if set(axes_m) & set(fixed_c) or len(set(fixed_c)) != len(fixed_c):
            raise ConfigurationError("a coordinate is both scanned and fixed")
        if set(axes_m) | set(fixed_c) != set(range(model.dim_m)):
            raise ConfigurationError(
                f"domain must set every state coordinate of {model.name}: "
                f"axes+fixed cover {sorted(set(axes_m) | set(fixed_c))}"
            )
        if len(self.theta0) != model.forcing.count:
            raise ConfigurationError(
                f"theta0 has {len(self.theta0)} phases, model {model.name} has {model.forcing.count} frequencies"
            )

    def grid_states(self, model: SystemModel, rows=None):
        """Initial states for the given first-axis rows (default all), shape ``(dim, rows * n2)``, row-major."""
        a0, a1 = self.axes
        rows = np.arange(a0.n) if rows is None else np.asarray(rows)
        x0 = a0.points()[rows]
        x1 = a1.points()
        g0, g1 = np.meshgrid(x0, x1, indexing="ij")
        out = np.empty((model.dim, g0.size))
        out[model.dim_m:] = np.asarray(self.theta0)[:, None]
        for c, v in self.fixed:
            out[c] = v
        # a phase axis overrides the matching theta0 entry
        out[a0.coordinate] = g0.ravel()
        out[a1.coordinate] = g1.ravel()
        return out

    def describe(self):
        return {
            "axes": [a.describe() for a in self.axes],
            "theta0": list(self.theta0),
            "fixed": [list(f) for f in self.fixed],
        }

    @classmethod
    def from_description(cls, d):
        return cls(tuple(Axis(**a) for a in d["axes"]), tuple(d["theta0"]), tuple(tuple(f) for f in d["fixed"]))


@dataclass
class TimeAverageField:
    """Time-average of one observable over a scan domain.

    ``values`` is ``nan`` wherever ``states`` is ``ESCAPED``; ``NONCONVERGENT``
    cells keep their value.
    """

    domain: ScanDomain
    observable_id: str
    values: np.ndarray
    states: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    @property
    def escaped(self):
        return self.states == ESCAPED

    def value_range(self):
        finite = self.values[~self.escaped]
        if finite.size == 0:
            return math.nan, math.nan
        return float(finite.min()), float(finite.max())


# ---------------------------------------------------------------------------
# sweep


def _run_chunk(args):
    model, domain, rows, observables, config, escape = args
    ics = domain.grid_states(model, rows)
    res = integrate_batch(model, ics, config, observables, escape)
    out = {"escaped": res.escaped, "t_escape": res.t_escape}
    for obs in observables:
        out[obs.id] = (res.averages(obs.id), res.gaps(obs.id))
    return out


def _chunks(domain):
    n0, n1 = domain.shape
    per = max(1, CHUNK_CELLS // n1)
    return [np.arange(r, min(r + per, n0)) for r in range(0, n0, per)]


def sweep(model: SystemModel, domain: ScanDomain, observables, config: IntegratorConfig,
          escape: EscapePredicate = None, workers=1, progress=None):
    """Integrate every grid vertex and return one :class:`TimeAverageField` per observable.

    The grid is cut into fixed row blocks that depend only on the domain, so
    the result is bitwise independent of ``workers``.  ``progress`` is called
    with ``(rows_done, rows_total)`` after each block.
    """
    observables = list(observables)
    if not observables:
        raise ConfigurationError("sweep needs at least one observable")
    ids = [o.id for o in observables]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate observable ids {ids}")
    domain.validate(model)
    if escape is not None and escape.coordinate >= model.dim_m:
        raise ConfigurationError(f"escape coordinate {escape.coordinate} outside model state")

    chunks = _chunks(domain)
    tasks = [(model, domain, rows, observables, config, escape) for rows in chunks]
    n0 = domain.shape[0]
    results = []
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rows, r in zip(chunks, pool.map(_run_chunk, tasks)):
                results.append(r)
                if progress:
                    progress(int(rows[-1]) + 1, n0)
    else:
        for rows, task in zip(chunks, tasks):
            results.append(_run_chunk(task))
            if progress:
                progress(int(rows[-1]) + 1, n0)

    shape = domain.shape
    escaped = np.concatenate([r["escaped"] for r in results]).reshape(shape)
    fields = []
    for obs in observables:
        values = np.concatenate([r[obs.id][0] for r in results]).reshape(shape)
        gaps = np.concatenate([r[obs.id][1] for r in results]).reshape(shape)
        values = np.where(escaped, np.nan, values)
        states = np.where(escaped, ESCAPED, VALUE).astype(np.uint8)
        finite = values[~escaped]
        span = float(finite.max() - finite.min()) if finite.size else 0.0
        tol = max(GAP_FRACTION * span, GAP_FLOOR)
        states[(~escaped) & (gaps > tol)] = NONCONVERGENT
        live_gaps = gaps[~escaped]
        meta = {
            "model": {"name": model.name, **model.describe()},
            "integrator": config.describe(),
            "escape": None if escape is None else escape.describe(),
            "escape_criterion": (
                "none" if escape is None
                else f"|{model.coordinate_names[escape.coordinate]}| > {escape.threshold:g} "
                     f"for {escape.consecutive_steps} consecutive steps"
            ),
            "convergence": {
                "max_gap": float(live_gaps.max()) if live_gaps.size else 0.0,
                "tolerance": tol,
                "nonconvergent_cells": int((states == NONCONVERGENT).sum()),
            },
        }
        fields.append(TimeAverageField(domain, obs.id, values, states, meta))
    return fields


# ---------------------------------------------------------------------------
# joint level sets


@dataclass
class PartitionField:
    """Joint bin tuple per cell; ``bins[f]`` is the bin of field ``f``, escaped cells flagged separately."""

    domain: ScanDomain
    bins: np.ndarray
    escaped: np.ndarray
    binning: list

    @property
    def shape(self):
        return self.escaped.shape

    def labels(self):
        """Return ``(label_index grid, list of label tuples)``; escaped cells get index -1.

        Labels are ordered lexicographically by their bin tuple.
        """
        flat = self.bins.reshape(self.bins.shape[0], -1).T
        live = ~self.escaped.ravel()
        index = np.full(flat.shape[0], -1, dtype=np.int64)
        if live.any():
            uniq, inv = np.unique(flat[live], axis=0, return_inverse=True)
            index[live] = inv.ravel()
            tuples = [tuple(int(v) for v in row) for row in uniq]
        else:
            tuples = []
        return index.reshape(self.shape), tuples

    def label_at(self, i, k):
        if self.escaped[i, k]:
            return "escaped"
        return tuple(int(v) for v in self.bins[:, i, k])


def default_bin_width(field: TimeAverageField, bins=DEFAULT_BINS):
    lo, hi = field.value_range()
    if not math.isfinite(lo) or hi <= lo:
        return 1.0
    return (hi - lo) / bins


def joint_level_sets(fields, eps=None):
    """Common refinement of the binned fields: ``floor((value - origin) / eps_f)`` per field.

    Args:
        fields: Fields over one domain.
        eps: Per-field bin widths (a sequence, a scalar, or ``None`` entries
            for the default ``range / 32``).  Origins sit at each field's minimum.
    """
    fields = list(fields)
    if not fields:
        raise ConfigurationError("need at least one field")
    dom = fields[0].domain
    for f in fields[1:]:
        if f.domain != dom or f.shape != fields[0].shape:
            raise DomainMismatchError(f"field {f.observable_id!r} is on a different domain")
    if eps is None or np.isscalar(eps):
        eps = [eps] * len(fields)
    if len(eps) != len(fields):
        raise ConfigurationError(f"{len(eps)} bin widths for {len(fields)} fields")
    escaped = np.zeros(fields[0].shape, dtype=bool)
    for f in fields:
        escaped |= f.escaped
    bins = np.zeros((len(fields),) + fields[0].shape, dtype=np.int64)
    binning = []
    for k, (f, e) in enumerate(zip(fields, eps)):
        e = default_bin_width(f) if e is None else float(e)
        if not (e > 0 and math.isfinite(e)):
            raise ConfigurationError(f"bin width must be positive, got {e}")
        lo, _ = f.value_range()
        origin = 0.0 if not math.isfinite(lo) else lo
        vals = np.where(f.escaped, origin, f.values)
        bins[k] = np.floor((vals - origin) / e).astype(np.int64)
        binning.append({"observable": f.observable_id, "eps": e, "origin": origin})
    bins[:, escaped] = 0
    return PartitionField(dom, bins, escaped, binning)


# ---------------------------------------------------------------------------
# boundedness


@dataclass
class LabelVerdict:
    label: object
    count: int
    index_box: tuple
    bounding_box: tuple
    verdict: str
    statement: str = None


@dataclass
class BoundednessReport:
    domain: ScanDomain
    entries: list
    notes: list = field(default_factory=list)

    def by_verdict(self, verdict):
        return [e for e in self.entries if e.verdict == verdict]

    def bounded_fraction(self):
        total = sum(e.count for e in self.entries)
        return sum(e.count for e in self.by_verdict(BOUNDED)) / total if total else 0.0


def boundedness_report(part: PartitionField, notes=()):
    """Verdict per label: escaped cells are unbounded; other labels touching a
    non-periodic window edge are inconclusive; the rest are bounded slices."""
    index, tuples = part.labels()
    n0, n1 = part.shape
    a0, a1 = part.domain.axes
    edge = np.zeros(part.shape, dtype=bool)
    if a0.topology != CIRCLE:
        edge[0, :] = edge[-1, :] = True
    if a1.topology != CIRCLE:
        edge[:, 0] = edge[:, -1] = True
    p0, p1 = a0.points(), a1.points()

    def boxes(mask):
        ii, kk = np.nonzero(mask)
        ibox = ((int(ii.min()), int(ii.max())), (int(kk.min()), int(kk.max())))
        bbox = ((float(p0[ii.min()]), float(p0[ii.max()])), (float(p1[kk.min()]), float(p1[kk.max()])))
        return ibox, bbox

    entries = []
    if part.escaped.any():
        ibox, bbox = boxes(part.escaped)
        entries.append(LabelVerdict("escaped", int(part.escaped.sum()), ibox, bbox, UNBOUNDED))
    for k, lab in enumerate(tuples):
        mask = index == k
        ibox, bbox = boxes(mask)
        if (mask & edge).any():
            entries.append(LabelVerdict(lab, int(mask.sum()), ibox, bbox, INCONCLUSIVE))
        else:
            entries.append(LabelVerdict(lab, int(mask.sum()), ibox, bbox, BOUNDED, CERTIFICATION))
    return BoundednessReport(part.domain, entries, list(notes))


def label_geometry(part: PartitionField, center):
    """Mean radius and angular coverage (fraction of 16 sectors hit) of each label about ``center``.

    ``center`` is a grid index pair; radii are in cells.  Used to recognise
    nested annular bands.
    """
    index, tuples = part.labels()
    ii, kk = np.indices(part.shape)
    di, dk = ii - center[0], kk - center[1]
    radius = np.hypot(di, dk)
    sector = (np.floor((np.arctan2(dk, di) + math.pi) / (TWO_PI / 16)).astype(int)) % 16
    out = {}
    for k, lab in enumerate(tuples):
        mask = index == k
        out[lab] = {
            "mean_radius": float(radius[mask].mean()),
            "coverage": len(np.unique(sector[mask & (radius > 0)])) / 16.0,
            "count": int(mask.sum()),
        }
    return out


# ---------------------------------------------------------------------------
# phase comparison


def figure_phases(model: SystemModel, k):
    """Initial phases ``(2 pi k Omega_1 / Omega_2, 0, ...)`` of the phase-shift experiment."""
    omega = model.forcing.frequencies
    if len(omega) < 2:
        return (0.0,) * len(omega)
    return ((TWO_PI * k * omega[0] / omega[1]) % TWO_PI,) + (0.0,) * (len(omega) - 1)


@dataclass
class PhaseComparison:
    phases: list
    bounded_fraction: list
    escaped_fraction: list
    label_count: list
    overlap: np.ndarray
    fields: list

    def rows(self):
        return list(zip(self.phases, self.bounded_fraction, self.escaped_fraction, self.label_count))


def phase_shift_comparison(model: SystemModel, domain: ScanDomain, observable, config: IntegratorConfig, phases,
                           escape: EscapePredicate = None, eps=None, workers=1, progress=None):
    """Sweep the same window at several initial phases and compare boundedness.

    ``overlap[a, b]`` is the intersection-over-union of the non-escaped masks
    (1.0 when both are empty).
    """
    phases = [tuple(float(t) for t in p) for p in phases]
    if len(phases) < 2:
        raise ConfigurationError("phase comparison needs at least two phases")
    return compare_phases(model, domain, observable, config, phases, escape, eps, workers, progress)


def compare_phases(model, domain, observable, config, phases, escape=None, eps=None, workers=1, progress=None):
    """Unchecked form of :func:`phase_shift_comparison`; accepts a single phase."""
    phases = [tuple(float(t) for t in p) for p in phases]
    fields, bounded, esc, nlab = [], [], [], []
    for ph in phases:
        dom = ScanDomain(domain.axes, ph, domain.fixed)
        (f,) = sweep(model, dom, [observable], config, escape, workers, progress)
        part = joint_level_sets([f], eps)
        rep = boundedness_report(part)
        fields.append(f)
        bounded.append(rep.bounded_fraction())
        esc.append(float(f.escaped.mean()))
        nlab.append(len(part.labels()[1]))
    n = len(phases)
    overlap = np.ones((n, n))
    for a, b in itertools.combinations(range(n), 2):
        ma, mb = ~fields[a].escaped, ~fields[b].escaped
        union = (ma | mb).sum()
        overlap[a, b] = overlap[b, a] = (ma & mb).sum() / union if union else 1.0
    return PhaseComparison(phases, bounded, esc, nlab, overlap, fields)
