"""Run configuration documents (JSON) and their translation to library objects."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import averaging, models
from .errors import ConfigurationError
from .integrators import IntegratorConfig
from .partition import Axis, ScanDomain, figure_phases


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HarmonicBlock(_Block):
    name: Literal["harmonic"]
    frequencies: List[float]
    amplitudes: List[float]


class DissipativeBlock(_Block):
    name: Literal["dissipative"]
    decay: float = 1.0
    frequencies: List[float]
    amplitudes: List[float]


class SwingBlock(_Block):
    name: Literal["swing"]
    p_m: float = 0.95
    b: float = 1.0
    b_int: float = 100.0
    n_generators: int = 20
    modes: List[int] = [1]
    amplitudes: Optional[List[float]] = None


ModelBlock = Annotated[Union[HarmonicBlock, DissipativeBlock, SwingBlock], Field(discriminator="name")]


class IntegratorBlock(_Block):
    scheme: Optional[Literal["rk4", "symplectic4"]] = None
    steps_per_period: Optional[int] = 16
    h: Optional[float] = None
    periods: Optional[float] = 200.0
    t_ex: Optional[float] = None
    checkpoint_stride: Optional[int] = None


class AxisBlock(_Block):
    coordinate: Union[str, int]
    lo: float
    hi: float
    n: int
    topology: Optional[Literal["line", "circle"]] = None


class DomainBlock(_Block):
    axes: List[AxisBlock]
    theta0: Optional[List[float]] = None
    phase_k: Optional[int] = None
    fixed: dict = {}

    @model_validator(mode="after")
    def _one_phase_source(self):
        if self.theta0 is not None and self.phase_k is not None:
            raise ValueError("give either theta0 or phase_k, not both")
        return self


class TrigPolyBlock(_Block):
    coordinate: Union[str, int]
    cos: List[float] = [0.0]
    sin: List[float] = []


class CustomObservable(_Block):
    id: str
    trig_poly: TrigPolyBlock


class EscapeBlock(_Block):
    coordinate: Union[str, int] = "omega"
    threshold: float = 0.5
    consecutive_steps: int = 10


class OutputBlock(_Block):
    directory: str = "out"
    colormap: Literal["viridis"] = "viridis"
    render: bool = False
    figures: bool = False


class RunConfiguration(_Block):
    name: str = "run"
    model: ModelBlock
    integrator: IntegratorBlock = IntegratorBlock()
    domain: DomainBlock
    observables: List[Union[str, CustomObservable]]
    escape: Optional[EscapeBlock] = None
    output: OutputBlock = OutputBlock()

    # -- serialisation

    def to_dict(self):
        return self.model_dump(mode="json")

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # -- construction of library objects

    def build_model(self):
        m = self.model
        if isinstance(m, HarmonicBlock):
            return models.HarmonicOscillator(models.QuasiperiodicForcing(tuple(m.frequencies), tuple(m.amplitudes)))
        if isinstance(m, DissipativeBlock):
            return models.DissipativeSystem(
                models.QuasiperiodicForcing(tuple(m.frequencies), tuple(m.amplitudes)), m.decay
            )
        params = models.SwingParameters(
            p_m=m.p_m, b=m.b, b_int=m.b_int, n_generators=m.n_generators, modes=tuple(m.modes),
            amplitudes=None if m.amplitudes is None else tuple(m.amplitudes),
        )
        return models.SwingModel(params)

    def build_integrator(self, model):
        b = self.integrator
        period = 2 * math.pi / model.forcing.frequencies[0]
        if b.h is not None:
            h = b.h
        elif b.steps_per_period:
            h = period / b.steps_per_period
        else:
            raise ConfigurationError("integrator needs h or steps_per_period")
        if b.t_ex is not None:
            t_ex = b.t_ex
        elif b.periods:
            t_ex = period * b.periods
        else:
            raise ConfigurationError("integrator needs t_ex or periods")
        stride = b.checkpoint_stride
        if stride is None:
            stride = max(1, int(round(2 * math.pi / min(model.forcing.frequencies) / h)))
        scheme = b.scheme or ("symplectic4" if model.is_hamiltonian else "rk4")
        if scheme == "symplectic4" and not model.is_hamiltonian:
            raise ConfigurationError(f"symplectic4 requires a Hamiltonian model, {model.name} is not")
        return IntegratorConfig(scheme, h, t_ex, stride)

    def theta0(self, model, k=None):
        d = self.domain
        if k is not None:
            return figure_phases(model, k)
        if d.phase_k is not None:
            return figure_phases(model, d.phase_k)
        if d.theta0 is None:
            return (0.0,) * model.forcing.count
        return tuple(d.theta0)

    def build_domain(self, model, k=None):
        axes = []
        for a in self.domain.axes:
            c = model.axis_index(a.coordinate)
            axes.append(Axis(c, a.lo, a.hi, a.n, a.topology or model.axis_topology(c)))
        fixed = tuple((model.coordinate_index(name), v) for name, v in self.domain.fixed.items())
        dom = ScanDomain(tuple(axes), self.theta0(model, k), fixed)
        dom.validate(model)
        return dom

    def build_observables(self, model):
        out = []
        for o in self.observables:
            if isinstance(o, str):
                out.append(averaging.get_observable(o))
            else:
                c = model.coordinate_index(o.trig_poly.coordinate)
                out.append(averaging.trig_polynomial(o.id, c, o.trig_poly.cos, o.trig_poly.sin))
        if not out:
            raise ConfigurationError("at least one observable is required")
        return out

    def build_escape(self, model):
        if self.escape is None:
            return None
        e = self.escape
        return averaging.EscapePredicate(model.coordinate_index(e.coordinate), e.threshold, e.consecutive_steps)

    def build(self, k=None):
        """Validate every block and return ``(model, domain, observables, integrator, escape)``."""
        model = self.build_model()
        return (
            model,
            self.build_domain(model, k),
            self.build_observables(model),
            self.build_integrator(model),
            self.build_escape(model),
        )


def parse_config(data) -> RunConfiguration:
    try:
        cfg = RunConfiguration.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from None
    cfg.build()
    return cfg


def preset_names():
    root = resources.files("qpergodic") / "data" / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _preset_path(name):
    wanted = name.replace("_", "")
    for p in preset_names():
        if p == name or p.replace("_", "") == wanted:
            return resources.files("qpergodic") / "data" / "presets" / f"{p}.json"
    return None


def load_config(source) -> RunConfiguration:
    """Load a configuration from a path or a bundled preset name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        preset = _preset_path(str(source))
        if preset is None:
            raise ConfigurationError(f"no configuration file or preset named {source!r}")
        text = preset.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"configuration is not valid JSON: {exc}") from None
    return parse_config(data)
