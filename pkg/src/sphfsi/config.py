"""Run configuration: strict JSON schema with a lossless round trip.

Unknown keys are rejected at every level so typos fail fast.  ``to_dict``
followed by ``from_dict`` reproduces the configuration exactly, and the run
manifest embeds the resolved dictionary so any run can be repeated.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .adapter import ForceMode
from .coupling import AcceleratorKind, SchemeKind
from .errors import ConfigurationError
from .mapping import MappingConstraint, MappingMethod, MappingSpec, RbfBasis
from .scenarios import build_scenario, scenario_names


def _check_keys(d: dict, allowed: set, context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in {context}; allowed: {sorted(allowed)}")


def _enum(value, enum_cls, context):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigurationError(f"{context}: {value!r} is not one of {choices}") from None


@dataclass
class FluidConfig:
    alpha_av: float = 0.05
    nu0: float = 1.0e-6
    gamma: float = 7.0
    c0: float | None = None          # None: 10 sqrt(2 g H) from the scenario
    h_factor: float = 1.3
    cfl: float = 0.25
    hydrostatic_init: bool = False

    KEYS = {"alpha_av", "nu0", "gamma", "c0", "h_factor", "cfl", "hydrostatic_init"}

    @classmethod
    def from_dict(cls, d: dict) -> "FluidConfig":
        _check_keys(d, cls.KEYS, "fluid")
        return cls(**d)

    def to_dict(self) -> dict:
        return {"alpha_av": self.alpha_av, "nu0": self.nu0, "gamma": self.gamma,
                "c0": self.c0, "h_factor": self.h_factor, "cfl": self.cfl,
                "hydrostatic_init": self.hydrostatic_init}


@dataclass
class ContactConfig:
    theta: float | None = None       # absolute threshold in metres
    h_multiple: float | None = None  # alternative: multiple of h

    @classmethod
    def from_dict(cls, d: dict) -> "ContactConfig":
        _check_keys(d, {"theta", "h_multiple"}, "contact")
        cfg = cls(**d)
        if cfg.theta is not None and cfg.h_multiple is not None:
            raise ConfigurationError("contact: give either theta or h_multiple, not both")
        return cfg

    def to_dict(self) -> dict:
        return {"theta": self.theta, "h_multiple": self.h_multiple}

    def resolve(self, default_theta: float, h: float) -> float:
        if self.theta is not None:
            return self.theta
        if self.h_multiple is not None:
            return self.h_multiple * h
        return default_theta


def mapping_spec_from_dict(d: dict, context: str) -> MappingSpec:
    _check_keys(d, {"method", "constraint", "basis", "shape_parameter"}, context)
    method = _enum(d.get("method", "nearest-neighbor"), MappingMethod, context)
    constraint = _enum(d.get("constraint", "consistent"), MappingConstraint, context)
    basis = _enum(d.get("basis", "gaussian"), RbfBasis, context)
    return MappingSpec(method=method, constraint=constraint, rbf_basis=basis,
                       shape_parameter=d.get("shape_parameter"))


def mapping_spec_to_dict(spec: MappingSpec) -> dict:
    return {"method": spec.method.value, "constraint": spec.constraint.value,
            "basis": spec.rbf_basis.value, "shape_parameter": spec.shape_parameter}


@dataclass
class CouplingConfig:
    # constant underrelaxation never extrapolates, so a noisy impact window
    # cannot hand the fluid an interface position no solver ever produced;
    # adaptive Aitken stays available behind the accelerator switch
    scheme: SchemeKind = SchemeKind.SERIAL_IMPLICIT
    window_dt: float | None = None   # None: scenario default
    tolerance: float = 1.0e-3
    max_iterations: int = 30
    accelerator: AcceleratorKind = AcceleratorKind.CONSTANT
    omega0: float = 0.5
    residual_field: str | None = None
    mappings: dict = field(default_factory=lambda: {
        "Forces": MappingSpec(MappingMethod.NEAREST_NEIGHBOR, MappingConstraint.CONSERVATIVE),
        "Displacements": MappingSpec(MappingMethod.NEAREST_NEIGHBOR, MappingConstraint.CONSISTENT),
    })

    KEYS = {"scheme", "window_dt", "tolerance", "max_iterations", "accelerator",
            "omega0", "residual_field", "mappings"}

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingConfig":
        _check_keys(d, cls.KEYS, "coupling")
        out = cls()
        if "scheme" in d:
            out.scheme = _enum(d["scheme"], SchemeKind, "coupling.scheme")
        if "accelerator" in d:
            out.accelerator = _enum(d["accelerator"], AcceleratorKind, "coupling.accelerator")
        for key in ("window_dt", "tolerance", "max_iterations", "omega0", "residual_field"):
            if key in d:
                setattr(out, key, d[key])
        if "mappings" in d:
            _check_keys(d["mappings"], {"Forces", "Displacements"}, "coupling.mappings")
            for name, spec in d["mappings"].items():
                out.mappings[name] = mapping_spec_from_dict(spec, f"coupling.mappings.{name}")
        return out

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "window_dt": self.window_dt,
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "accelerator": self.accelerator.value,
            "omega0": self.omega0,
            "residual_field": self.residual_field,
            "mappings": {k: mapping_spec_to_dict(v) for k, v in self.mappings.items()},
        }


@dataclass
class OutputConfig:
    directory: str = "out"
    write_interval: float = 0.02

    @classmethod
    def from_dict(cls, d: dict) -> "OutputConfig":
        _check_keys(d, {"directory", "write_interval"}, "output")
        return cls(**d)

    def to_dict(self) -> dict:
        return {"directory": self.directory, "write_interval": self.write_interval}


@dataclass
class RunConfig:
    scenario: str = "dam-break-elastic-plate"
    spacing: float | None = None     # None: scenario default
    end_time: float | None = None
    seed: int | None = None          # lattice jitter; None disables it
    workers: int | None = None       # None: available parallelism
    force_mode: ForceMode = ForceMode.PRESSURE_INTEGRAL
    wall_layers: int = 3
    fluid: FluidConfig = field(default_factory=FluidConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    KEYS = {"scenario", "spacing", "end_time", "seed", "workers", "force_mode",
            "wall_layers", "fluid", "contact", "coupling", "output"}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, cls.KEYS, "run configuration")
        out = cls()
        if "scenario" in d:
            if d["scenario"] not in scenario_names():
                raise ConfigurationError(
                    f"unknown scenario {d['scenario']!r}; known: {', '.join(scenario_names())}")
            out.scenario = d["scenario"]
        for key in ("spacing", "end_time", "seed", "workers", "wall_layers"):
            if key in d:
                setattr(out, key, d[key])
        if "force_mode" in d:
            mode = d["force_mode"]
            aliases = {"newton": ForceMode.NEWTON_SECOND_LAW,
                       "pressure": ForceMode.PRESSURE_INTEGRAL}
            if mode not in aliases:
                raise ConfigurationError(f"force_mode must be 'newton' or 'pressure', got {mode!r}")
            out.force_mode = aliases[mode]
        if "fluid" in d:
            out.fluid = FluidConfig.from_dict(d["fluid"])
        if "contact" in d:
            out.contact = ContactConfig.from_dict(d["contact"])
        if "coupling" in d:
            out.coupling = CouplingConfig.from_dict(d["coupling"])
        if "output" in d:
            out.output = OutputConfig.from_dict(d["output"])
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "spacing": self.spacing,
            "end_time": self.end_time,
            "seed": self.seed,
            "workers": self.workers,
            "force_mode": "newton" if self.force_mode is ForceMode.NEWTON_SECOND_LAW else "pressure",
            "wall_layers": self.wall_layers,
            "fluid": self.fluid.to_dict(),
            "contact": self.contact.to_dict(),
            "coupling": self.coupling.to_dict(),
            "output": self.output.to_dict(),
        }

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("run configuration must be a JSON object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())
