"""
Run configs: frozen dataclasses loaded from JSON (or TOML) and the numerical presets
shared by the experiment families.
"""
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import numpy as np
from CFOIE.core.errors import ConfigError, GeometryError, InvalidParameterError
from CFOIE.core.geometry.surfaces import TWO_TORI_MINOR, SurfaceSpec, two_tori
from CFOIE.core.incident.sources import DIPOLE_KINDS, DipoleSource, PlaneWave
from CFOIE.core.operators.formulations import Formulation
from CFOIE.core.post.fields import TARGET_COUNT, TARGET_RADIUS
from CFOIE.core.quadrature.nystrom import QuadConfig
from CFOIE.core.solve.solver import SolveConfig
from util.file import config_hash

# Presets

LOWFREQ_XI = np.pi * 1e4
MIE_MIN_KA = 1e-3                      # below this k*radius the Mie reference is skipped
DEFAULT_LAMBDA_OVER_D = (1e16, 1e8, 1e4, 1e2, 1e1, 1e0)
DEFAULT_K_OVER_PI = (1e-8, 1e-1, 1.0)
DEFAULT_REFINEMENTS = (1, 2, 3)
DEFAULT_ORDERS = (6,)
CONFIG_KINDS = ("sphere", "torus", "flower", "two_tori")
TWO_TORI_CONFIGURATIONS = ("interlocking", "adjacent")
INCIDENT_TYPES = ("planewave", "dipole")


@dataclass(frozen=True)
class SurfaceConfig:
    kind: str = "sphere"
    radius: float = 1.0
    major: float = 1.0
    minor: float = None                # None -> 1/2 for a torus, 1/2.1 for two tori
    configuration: str = "interlocking"

    def __post_init__(self):
        if self.kind not in CONFIG_KINDS:
            raise ConfigError(f"surface.kind must be one of {CONFIG_KINDS}, got {self.kind!r}")
        if self.kind == "two_tori" and self.configuration not in TWO_TORI_CONFIGURATIONS:
            raise ConfigError(f"surface.configuration must be one of {TWO_TORI_CONFIGURATIONS}")

    def spec(self) -> SurfaceSpec:
        try:
            if self.kind == "sphere":
                return SurfaceSpec.sphere(self.radius)
            if self.kind == "torus":
                return SurfaceSpec.torus(self.major, 0.5 if self.minor is None else self.minor)
            if self.kind == "flower":
                return SurfaceSpec.flower()
            return two_tori(self.configuration, TWO_TORI_MINOR if self.minor is None else self.minor)
        except GeometryError as e:
            raise ConfigError(f"Invalid surface: {e}") from e


@dataclass(frozen=True)
class IncidentConfig:
    type: str = "planewave"
    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    location: tuple = None             # dipole only; None -> a point inside component 1
    moment: tuple = (0.0, 0.0, 1.0)
    dipole: str = "electric"

    def __post_init__(self):
        if self.type not in INCIDENT_TYPES:
            raise ConfigError(f"incident.type must be one of {INCIDENT_TYPES}, got {self.type!r}")
        if self.dipole not in DIPOLE_KINDS:
            raise ConfigError(f"incident.dipole must be one of {DIPOLE_KINDS}, got {self.dipole!r}")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.linalg.norm(d) > 0:
            raise ConfigError("incident.direction must be a nonzero 3-vector")
        object.__setattr__(self, "direction", tuple(float(v) for v in d / np.linalg.norm(d)))

    @property
    def regular(self):
        return self.type == "planewave"

    def build(self, k, surface: SurfaceSpec):
        """PlaneWave or DipoleSource at wavenumber k."""
        try:
            if self.type == "planewave":
                return PlaneWave(tuple(self.polarization), self.direction, float(k))
            location = self.location if self.location is not None else surface.interior_points()[0]
            return DipoleSource(tuple(float(v) for v in location), tuple(self.moment), self.dipole, float(k))
        except InvalidParameterError as e:
            raise ConfigError(f"Invalid incident field: {e}") from e


@dataclass(frozen=True)
class TargetConfig:
    count: int = TARGET_COUNT
    radius: float = TARGET_RADIUS

    def __post_init__(self):
        if self.count < 1 or not self.radius > 0:
            raise ConfigError("targets need count >= 1 and a positive radius")


@dataclass(frozen=True)
class SliceConfig:
    """Planar slice through the origin; axes default to the incident (d, p) plane."""
    extent: float = 3.0
    resolution: int = 61
    axes: tuple = None

    def __post_init__(self):
        if not self.extent > 0 or self.resolution < 2:
            raise ConfigError("slice needs a positive extent and resolution >= 2")
        if self.axes is not None and np.shape(self.axes) != (2, 3):
            raise ConfigError("slice.axes must be two 3-vectors")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = None
    dump_matrices: bool = False


@dataclass(frozen=True)
class CheckConfig:
    """Pass thresholds for the verify subcommand."""
    k0_rowsum: float = 1e-4
    s0_rowsum: float = 1e-4
    greens_exterior: float = 1e-5
    greens_interior: float = 1e-5
    calderon: float = 5e-3
    mie_pec: float = 1e-8
    dipole_error: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    formulations: tuple = ("DE", "RDE", "DM", "RDM")
    incident: IncidentConfig = field(default_factory=IncidentConfig)
    k: float = np.pi
    refinements: tuple = DEFAULT_REFINEMENTS
    orders: tuple = DEFAULT_ORDERS
    lambda_over_d: tuple = DEFAULT_LAMBDA_OVER_D
    k_over_pi: tuple = DEFAULT_K_OVER_PI
    eta: float = None                  # None -> default_eta(k) at every sweep point
    xi: tuple = (0.0,)
    solver: SolveConfig = field(default_factory=SolveConfig)
    quadrature: QuadConfig = field(default_factory=QuadConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    slice: SliceConfig = field(default_factory=SliceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    threads: int = None
    seed: int = 0
    checks: CheckConfig = field(default_factory=CheckConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "formulations", tuple(Formulation(f).value for f in self.formulations))
        except ValueError as e:
            raise ConfigError(f"Unknown formulation in {self.formulations}") from e
        if not self.formulations:
            raise ConfigError("At least one formulation is required")
        if not self.k > 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if self.eta is not None and self.eta == 0:
            raise ConfigError("eta must be nonzero")
        if not all(isinstance(n, int) for n in self.refinements + self.orders):
            raise ConfigError("refinements and orders must be integers")
        if not self.refinements or any(n < 1 for n in self.refinements):
            raise ConfigError("refinements must be a non-empty list of integers >= 1")
        if not self.orders or any(p < 3 for p in self.orders):
            raise ConfigError("orders must be a non-empty list of integers >= 3")
        if any(not v > 0 for v in self.lambda_over_d + self.k_over_pi):
            raise ConfigError("lambda_over_d and k_over_pi entries must be positive")
        if not self.xi:
            raise ConfigError("xi needs at least one value")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @property
    def resolution(self):
        """(refinement, order) of the fixed grid used by the single-grid families."""
        return self.refinements[-1], self.orders[-1]

    def to_dict(self):
        return asdict(self)

    @property
    def hash(self):
        return config_hash(self.to_dict())

    def xi_for(self, formulation):
        """xi values that apply to a formulation; magnetic runs always use 0."""
        return self.xi if Formulation(formulation).family == "electric" else (0.0,)


def _check_type(value, expected, where):
    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif expected is str:
        ok = isinstance(value, str)
    elif expected is tuple:
        ok = isinstance(value, (list, tuple))
        value = tuple(tuple(v) if isinstance(v, list) else v for v in value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: expected {expected.__name__}, got {type(value).__name__}")
    return value


def from_dict(cls, data, where="config"):
    """Build a (nested) config dataclass, rejecting unknown keys and wrong types."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")

    kwargs = {}
    for name, value in data.items():
        f = known[name]
        key = f"{where}.{name}"
        if value is None:
            if f.default is not None:
                raise ConfigError(f"{key}: null is not allowed")
            kwargs[name] = None
        elif is_dataclass(f.type):
            kwargs[name] = from_dict(f.type, value, key)
        else:
            kwargs[name] = _check_type(value, f.type, key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def load_config(path, seed=None) -> RunConfig:
    """Read a JSON (or .toml) run config; `seed` overrides the config's seed."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        else:
            with open(path, "r") as f:
                data = json.load(f)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e
    cfg = from_dict(RunConfig, data)
    if seed is not None:
        cfg = from_dict(RunConfig, {**data, "seed": int(seed)})
    return cfg


