"""Scenario configuration: dataclasses, YAML parsing and emission.

A scenario file is a YAML mapping. Every block maps onto a dataclass
with documented defaults, so an empty file is a valid all-defaults
scenario. Unknown keys, wrong types and invariant violations are
reported with the line of the offending node.
"""

import math
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .collision import OrientedRect, overlaps
from .driver_control import ControlGains, DispositionMap
from .errors import ConfigError
from .game import GameSettings
from .vehicle_dynamics import VehicleParams

KMH_TO_MPS = 1.0 / 3.6

MIXES = (
    "attentive",
    "inattentive75",
    "aggr_aggr",
    "aggr_timid",
    "timid_timid",
    "normal",
    "props",
)


class VehicleKind(Enum):
    DECISION = "decision"  # plays the lane-choice game
    PROP = "prop"  # scripted path at a set speed


@dataclass(frozen=True)
class VehicleSpec:
    """Initial placement of one vehicle; speeds are in the scenario's speed unit."""

    x0: float
    y0: float
    v0: float
    q: float = 0.5
    kind: VehicleKind = VehicleKind.DECISION
    desired_speed: Optional[float] = None

    def validate(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")
        if self.desired_speed is not None and self.desired_speed <= 0:
            raise ValueError("desired_speed must be positive")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        if self.desired_speed is None:
            del data["desired_speed"]
        return data


@dataclass(frozen=True)
class PerceptionSettings:
    visibility: float = 100.0  # d_v, m
    sigma_distance: float = 0.5  # m, at d = d_v and q = 0
    sigma_velocity: float = 0.1  # m/s, at d = d_v and q = 0
    kappa: float = 1.0
    magnification: float = 0.2

    def validate(self) -> None:
        if self.visibility <= 0:
            raise ValueError("perception.visibility must be positive")
        for name in ("sigma_distance", "sigma_velocity", "kappa", "magnification"):
            if getattr(self, name) < 0:
                raise ValueError(f"perception.{name} must be non-negative")


@dataclass(frozen=True)
class CollisionSettings:
    scale: float = 1.0  # lambda, 1/m
    broad_phase: float = 20.0  # pairs farther apart than this score 0

    def validate(self) -> None:
        if self.scale <= 0 or self.broad_phase <= 0:
            raise ValueError(
                "collision.scale and collision.broad_phase must be positive"
            )


@dataclass(frozen=True)
class EventSettings:
    near_threshold: float = 0.5
    release_threshold: float = 0.4

    def validate(self) -> None:
        if not 0.0 < self.release_threshold <= self.near_threshold < 1.0:
            raise ValueError("events need 0 < release_threshold <= near_threshold < 1")


@dataclass(frozen=True)
class PropSettings:
    """Scripted boundary vehicles ahead of the decision vehicles."""

    enabled: bool = True
    lead_distance: float = 35.0  # m ahead of Vehicle 1, lanes 1 and 2
    lane3_offset: float = 10.0  # extra lead of the lane-3 prop, m
    speed: float = 100.0  # speed unit

    def validate(self) -> None:
        if self.lead_distance <= 0 or self.speed <= 0:
            raise ValueError("props.lead_distance and props.speed must be positive")


@dataclass(frozen=True)
class SectionSettings:
    """Density-maintained highway section."""

    length: float = 200.0  # m
    density: int = 6  # vehicles per section
    nominal_speed: float = 100.0  # speed unit
    speed_spread: float = 10.0  # speed unit
    mix: str = "attentive"
    min_entry_gap: float = 15.0  # m
    attentive_q: float = 0.25
    inattentive_q: float = 0.75
    duration: float = 600.0  # s per run

    def validate(self) -> None:
        if self.length <= 0:
            raise ValueError("section.length must be positive")
        if self.density < 1:
            raise ValueError("section.density must be at least 1")
        if self.mix not in MIXES:
            raise ValueError(f"section.mix must be one of {', '.join(MIXES)}")
        if self.speed_spread < 0 or self.speed_spread >= self.nominal_speed:
            raise ValueError("section.speed_spread must lie in [0, nominal_speed)")
        if self.min_entry_gap <= 0 or self.duration <= 0:
            raise ValueError(
                "section.min_entry_gap and section.duration must be positive"
            )
        for name in ("attentive_q", "inattentive_q"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"section.{name} must lie in [0, 1]")


BLOCKS = {
    "vehicle": VehicleParams,
    "disposition": DispositionMap,
    "gains": ControlGains,
    "perception": PerceptionSettings,
    "game": GameSettings,
    "collision": CollisionSettings,
    "events": EventSettings,
    "props": PropSettings,
    "section": SectionSettings,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs besides the command line."""

    seed: int = 0
    dt: float = 0.01
    duration: float = 20.0
    decision_epoch: float = 0.5
    speed_unit: str = "kmh"
    lane_width: float = 3.3
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    disposition: DispositionMap = field(default_factory=DispositionMap)
    gains: ControlGains = field(default_factory=ControlGains)
    perception: PerceptionSettings = field(default_factory=PerceptionSettings)
    game: GameSettings = field(default_factory=GameSettings)
    collision: CollisionSettings = field(default_factory=CollisionSettings)
    events: EventSettings = field(default_factory=EventSettings)
    props: PropSettings = field(default_factory=PropSettings)
    section: SectionSettings = field(default_factory=SectionSettings)
    vehicles: Tuple[VehicleSpec, ...] = ()

    def speed(self, value: float) -> float:
        """Convert a configured speed to m/s."""
        return value * KMH_TO_MPS if self.speed_unit == "kmh" else value

    def validate(self) -> None:
        if self.dt <= 0 or self.duration <= 0:
            raise ValueError("dt and duration must be positive")
        if self.decision_epoch < self.dt:
            raise ValueError("decision_epoch must be at least dt")
        if self.speed_unit not in ("kmh", "mps"):
            raise ValueError("speed_unit must be 'kmh' or 'mps'")
        if self.lane_width <= self.vehicle.width:
            raise ValueError("lane_width must exceed the vehicle width")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "seed": self.seed,
            "dt": self.dt,
            "duration": self.duration,
            "decision_epoch": self.decision_epoch,
            "speed_unit": self.speed_unit,
            "lane_width": self.lane_width,
        }
        for name in BLOCKS:
            block = getattr(self, name)
            data[name] = block.to_dict() if hasattr(block, "to_dict") else asdict(block)
        data["vehicles"] = [v.to_dict() for v in self.vehicles]
        return data


Path_ = Tuple[Union[str, int], ...]


def _line_index(node: yaml.Node, path: Path_, index: Dict[Path_, int]) -> None:
    index.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            index[path + (key.value,)] = key.start_mark.line + 1
            _line_index(value, path + (key.value,), index)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, path + (i,), index)


class _Reader:
    """Builds dataclasses from loaded YAML, raising ConfigError with line numbers."""

    def __init__(self, index: Dict[Path_, int], source: Optional[str]):
        self.index = index
        self.source = source

    def error(self, message: str, path: Path_) -> ConfigError:
        while path and path not in self.index:
            path = path[:-1]
        dotted = ".".join(str(p) for p in path)
        text = f"{dotted}: {message}" if dotted else message
        return ConfigError(text, line=self.index.get(path), path=self.source)

    def scalar(self, value: Any, kind: Any, path: Path_) -> Any:
        if isinstance(kind, type) and issubclass(kind, Enum):
            try:
                return kind(value)
            except ValueError:
                allowed = ", ".join(str(m.value) for m in kind)
                raise self.error(f"expected one of {allowed}, got {value!r}", path)
        if kind is bool:
            if not isinstance(value, bool):
                raise self.error(f"expected true or false, got {value!r}", path)
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise self.error(f"expected an integer, got {value!r}", path)
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise self.error(f"expected a number, got {value!r}", path)
            value = float(value)
            if not math.isfinite(value):
                raise self.error("expected a finite number", path)
            return value
        if kind is str:
            if not isinstance(value, str):
                raise self.error(f"expected a string, got {value!r}", path)
            return value
        if kind == Optional[float]:
            return None if value is None else self.scalar(value, float, path)
        raise self.error(f"unsupported value {value!r}", path)

    def block(self, cls: Any, data: Any, path: Path_) -> Any:
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise self.error("expected a mapping", path)
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, value in data.items():
            if key not in known:
                raise self.error(f"unknown key {key!r}", path + (key,))
            values[key] = self.scalar(value, known[key].type, path + (key,))
        missing = [
            f.name
            for f in known.values()
            if f.name not in values
            and f.default is MISSING
            and f.default_factory is MISSING
        ]
        if missing:
            raise self.error(f"missing required key(s) {', '.join(missing)}", path)
        instance = cls(**values)
        try:
            instance.validate()
        except ValueError as e:
            raise self.error(str(e), path)
        return instance


def _build(data: Any, index: Dict[Path_, int], source: Optional[str]) -> ScenarioConfig:
    reader = _Reader(index, source)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise reader.error("scenario file must be a mapping", ())

    top = {f.name: f for f in fields(ScenarioConfig)}
    values: Dict[str, Any] = {}
    for key, value in data.items():
        if key not in top:
            raise reader.error(f"unknown key {key!r}", (key,))
        if key in BLOCKS:
            values[key] = reader.block(BLOCKS[key], value, (key,))
        elif key == "vehicles":
            if value is None:
                value = []
            if not isinstance(value, list):
                raise reader.error("expected a list of vehicles", (key,))
            values[key] = tuple(
                reader.block(VehicleSpec, item, (key, i))
                for i, item in enumerate(value)
            )
        else:
            values[key] = reader.scalar(value, top[key].type, (key,))

    config = ScenarioConfig(**values)
    try:
        config.validate()
    except ValueError as e:
        raise reader.error(str(e), ())
    _check_placements(config, reader)
    return config


def _check_placements(config: ScenarioConfig, reader: _Reader) -> None:
    params = config.vehicle
    rects = [
        OrientedRect((v.x0, v.y0), math.pi / 2, params.length, params.width)
        for v in config.vehicles
    ]
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if overlaps(rects[i], rects[j]):
                raise reader.error(
                    f"initial placement overlaps vehicle {i}", ("vehicles", j)
                )


def loads_config(text: str, source: Optional[str] = None) -> ScenarioConfig:
    """Parse scenario YAML text."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", e)
        raise ConfigError(f"invalid YAML: {problem}", line=line, path=source)
    index: Dict[Path_, int] = {}
    if node is not None:
        _line_index(node, (), index)
    return _build(data, index, source)


def parse_config(path: Union[str, Path]) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises:
        ConfigError: if the file is missing or invalid
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file: {e.strerror}", path=str(path))
    return loads_config(text, source=str(path))


def config_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Validate an already-loaded mapping, e.g. one embedded in a run manifest."""
    return _build(data, {}, None)


def emit_config(config: ScenarioConfig) -> str:
    """YAML text that parse_config reads back to an equal config."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def packaged_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(__file__).parent / "scenarios" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no packaged scenario named {name!r}")
    return path


def replace_vehicles(
    config: ScenarioConfig, vehicles: List[VehicleSpec]
) -> ScenarioConfig:
    """Copy of config with a different vehicle table."""
    return replace(config, vehicles=tuple(vehicles))
