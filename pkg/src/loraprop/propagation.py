"""Multi-wall log-distance path-loss prediction with log-normal shadowing.

Two model variants are implemented: the structural baseline (distance plus
per-material wall penalties) and the extended form that adds a fixed
frequency term, linear environmental covariates and an SNR term.  Predictions
return the deterministic part only; the random shadowing term is sampled or
evaluated separately so fitting can target the deterministic component and
estimate the shadowing spread from residuals.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidConfigError, InvalidDataError

#: dB-to-natural-log conversion constant, 10 / ln 10.
XI = 10.0 / math.log(10.0)

#: Wall materials the multi-wall term distinguishes.  The mapping-based
#: model keeps other materials possible without touching the predictors.
WALL_TYPES = ("brick", "wood")

#: Canonical ordering of the environmental covariates, used for coefficient
#: vectors and design matrices everywhere in the package.
ENV_FIELDS = ("temperature", "humidity", "pressure", "pm25", "co2")


class ModelVariant(str, enum.Enum):
    MW = "mw"
    MW_EP = "mw-ep"


@dataclass(frozen=True)
class WallCounts:
    """Number of walls of each material crossed by the direct path."""

    brick: int = 0
    wood: int = 0

    def __post_init__(self) -> None:
        if self.brick < 0 or self.wood < 0:
            raise InvalidConfigError("wall counts must be >= 0")


@dataclass(frozen=True)
class EnvVector:
    """Environmental covariates attached to one observation."""

    temperature_c: float
    humidity_pct: float
    pressure_hpa: float
    pm25_ugm3: float
    co2_ppm: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise InvalidConfigError(
                f"humidity_pct must be in [0, 100], got {self.humidity_pct}"
            )
        # co2 >= 0 rather than > 0: the all-zero vector is the canonical way
        # to switch the covariate block off when exercising the intercept.
        if self.co2_ppm < 0:
            raise InvalidConfigError(f"co2_ppm must be >= 0, got {self.co2_ppm}")
        if self.pm25_ugm3 < 0:
            raise InvalidConfigError(f"pm25_ugm3 must be >= 0, got {self.pm25_ugm3}")

    def as_dict(self) -> dict[str, float]:
        """Values keyed by canonical covariate name (see :data:`ENV_FIELDS`)."""
        return {
            "temperature": self.temperature_c,
            "humidity": self.humidity_pct,
            "pressure": self.pressure_hpa,
            "pm25": self.pm25_ugm3,
            "co2": self.co2_ppm,
        }


@dataclass(frozen=True)
class PathLossModel:
    """Coefficient set for either model variant.

    ``intercept_db`` absorbs the loss at the reference distance; for the
    extended variant it also absorbs whatever constant share the frequency
    term contributes, because frequency enters in MHz.  Intercepts of the
    two variants are therefore not comparable across unit conventions.
    """

    variant: ModelVariant
    intercept_db: float
    path_loss_exponent: float
    wall_loss_db: Mapping[str, float]
    env_coeffs: Mapping[str, float] = field(default_factory=dict)
    snr_coeff: float | None = None
    shadowing_sigma_db: float = 0.0
    reference_distance_m: float = 1.0

    def __post_init__(self) -> None:
        if self.path_loss_exponent <= 0:
            raise InvalidConfigError("path_loss_exponent must be positive")
        if self.shadowing_sigma_db < 0:
            raise InvalidConfigError("shadowing_sigma_db must be >= 0")
        if self.reference_distance_m <= 0:
            raise InvalidConfigError("reference_distance_m must be positive")
        if self.variant is ModelVariant.MW and (self.env_coeffs or self.snr_coeff is not None):
            raise InvalidConfigError(
                "the structural variant takes no environmental or SNR coefficients"
            )
        unknown = set(self.env_coeffs) - set(ENV_FIELDS)
        if unknown:
            raise InvalidConfigError(f"unknown environmental coefficients: {sorted(unknown)}")


@dataclass(frozen=True)
class ShadowingSpec:
    """dB-domain Gaussian shadowing: zero-mean by default, spread sigma."""

    sigma_db: float
    mean_db: float = 0.0

    xi = XI

    def __post_init__(self) -> None:
        if self.sigma_db <= 0:
            raise InvalidConfigError(f"sigma_db must be positive, got {self.sigma_db}")


def _wall_term(model: PathLossModel, walls: WallCounts) -> float:
    return walls.brick * model.wall_loss_db.get("brick", 0.0) + walls.wood * model.wall_loss_db.get("wood", 0.0)


def _distance_term(model: PathLossModel, distance_m: float) -> float:
    if distance_m < model.reference_distance_m:
        raise InvalidConfigError(
            f"distance {distance_m} m is below the reference distance "
            f"{model.reference_distance_m} m"
        )
    return 10.0 * model.path_loss_exponent * math.log10(
        distance_m / model.reference_distance_m
    )


def predict_mw(model: PathLossModel, distance_m: float, walls: WallCounts) -> float:
    """Deterministic path loss of the structural variant, in dB."""
    if model.variant is not ModelVariant.MW:
        raise InvalidConfigError(f"expected an '{ModelVariant.MW.value}' model")
    return model.intercept_db + _distance_term(model, distance_m) + _wall_term(model, walls)


def predict_mw_ep(
    model: PathLossModel,
    distance_m: float,
    walls: WallCounts,
    freq_mhz: float,
    env: EnvVector,
    snr_db: float,
) -> float:
    """Deterministic path loss of the extended variant, in dB.

    Adds 20*log10(frequency in MHz), the linear covariate terms and the SNR
    term on top of the structural part.
    """
    if model.variant is not ModelVariant.MW_EP:
        raise InvalidConfigError(f"expected an '{ModelVariant.MW_EP.value}' model")
    if freq_mhz <= 0:
        raise InvalidConfigError(f"frequency must be positive, got {freq_mhz} MHz")
    env_values = env.as_dict()
    env_term = sum(
        model.env_coeffs.get(name, 0.0) * env_values[name] for name in ENV_FIELDS
    )
    snr_term = (model.snr_coeff or 0.0) * snr_db
    return (
        model.intercept_db
        + _distance_term(model, distance_m)
        + 20.0 * math.log10(freq_mhz)
        + _wall_term(model, walls)
        + env_term
        + snr_term
    )


def shadowing_pdf(spec: ShadowingSpec, eps_linear):
    """Density of the linear-scale shadowing factor.

    This is the change-of-variables transform of the dB-domain Gaussian:
    ``xi / (sqrt(2 pi) sigma eps) * exp(-(10 log10 eps - mu)^2 / (2 sigma^2))``
    for ``eps > 0``.  Accepts scalars or arrays.
    """
    eps = np.asarray(eps_linear, dtype=float)
    if np.any(eps <= 0):
        raise InvalidDataError("the linear shadowing factor must be positive")
    z = (10.0 * np.log10(eps) - spec.mean_db) / spec.sigma_db
    density = XI / (math.sqrt(2.0 * math.pi) * spec.sigma_db * eps) * np.exp(-0.5 * z * z)
    return float(density) if np.isscalar(eps_linear) else density


def sample_shadowing(spec: ShadowingSpec, seed: int, count: int) -> np.ndarray:
    """Draw ``count`` dB-domain shadowing values; deterministic per seed."""
    if count < 0:
        raise InvalidDataError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    return rng.normal(spec.mean_db, spec.sigma_db, size=count)


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic single-corridor scene for simulation sweeps.

    Walls are placed at independent uniform spacings and each wall draws an
    independent uniform penetration loss and a material label.  Distances
    sweep linearly from the reference distance to ``max_distance_m``.
    """

    max_distance_m: float
    num_points: int = 200
    reference_distance_m: float = 1.0
    reference_loss_db: float = 40.0
    path_loss_exponent: float = 3.5
    shadowing_sigma_db: float = 9.0
    wall_spacing_m: tuple[float, float] = (4.0, 10.0)
    wall_loss_db: tuple[float, float] = (5.0, 12.0)

    def __post_init__(self) -> None:
        if self.max_distance_m <= self.reference_distance_m:
            raise InvalidConfigError(
                "max_distance_m must exceed the reference distance"
            )
        if self.num_points < 1:
            raise InvalidConfigError("num_points must be >= 1")
        if self.shadowing_sigma_db < 0:
            raise InvalidConfigError("shadowing_sigma_db must be >= 0")
        lo, hi = self.wall_spacing_m
        if not 0 < lo <= hi:
            raise InvalidConfigError("wall_spacing_m must satisfy 0 < low <= high")
        lo, hi = self.wall_loss_db
        if lo > hi:
            raise InvalidConfigError("wall_loss_db low bound exceeds high bound")


@dataclass(frozen=True)
class SceneSample:
    distance_m: float
    walls: WallCounts
    true_path_loss_db: float
    noisy_path_loss_db: float


def simulate_scene(spec: SceneSpec, seed: int) -> list[SceneSample]:
    """Evaluate the structural model along a distance sweep through a random
    wall layout, with shadowing added on top of the deterministic loss.

    Draw order is fixed (wall positions, materials, losses, then the per-point
    shadowing), so a seed pins the whole scene.
    """
    rng = np.random.default_rng(seed)

    positions: list[float] = []
    pos = 0.0
    while True:
        pos += rng.uniform(*spec.wall_spacing_m)
        if pos > spec.max_distance_m:
            break
        positions.append(pos)
    materials = [WALL_TYPES[rng.integers(len(WALL_TYPES))] for _ in positions]
    losses = [rng.uniform(*spec.wall_loss_db) for _ in positions]

    distances = np.linspace(spec.reference_distance_m, spec.max_distance_m, spec.num_points)
    if spec.shadowing_sigma_db > 0:
        noise = rng.normal(0.0, spec.shadowing_sigma_db, size=spec.num_points)
    else:
        noise = np.zeros(spec.num_points)

    samples: list[SceneSample] = []
    for d, eps in zip(distances, noise):
        crossed = [i for i, p in enumerate(positions) if p <= d]
        walls = WallCounts(
            brick=sum(1 for i in crossed if materials[i] == "brick"),
            wood=sum(1 for i in crossed if materials[i] == "wood"),
        )
        true_pl = (
            spec.reference_loss_db
            + 10.0 * spec.path_loss_exponent * math.log10(d / spec.reference_distance_m)
            + sum(losses[i] for i in crossed)
        )
        samples.append(
            SceneSample(
                distance_m=float(d),
                walls=walls,
                true_path_loss_db=float(true_pl),
                noisy_path_loss_db=float(true_pl + eps),
            )
        )
    return samples


@dataclass(frozen=True)
class DevicePlacement:
    """Fixed node position relative to the gateway."""

    device_id: str
    distance_m: float
    walls: WallCounts


#: Geometry of the six-node office deployment the bundled presets describe:
#: gateway-relative distances and wall obstructions per device.
DEPLOYMENT_GEOMETRY: tuple[DevicePlacement, ...] = (
    DevicePlacement("ed0", 10.0, WallCounts(brick=0, wood=0)),
    DevicePlacement("ed1", 8.0, WallCounts(brick=1, wood=0)),
    DevicePlacement("ed2", 25.0, WallCounts(brick=0, wood=2)),
    DevicePlacement("ed3", 18.0, WallCounts(brick=1, wood=2)),
    DevicePlacement("ed4", 37.0, WallCounts(brick=0, wood=5)),
    DevicePlacement("ed5", 40.0, WallCounts(brick=2, wood=2)),
)


def model_to_dict(model: PathLossModel) -> dict:
    """JSON-ready representation of a model."""
    payload = {
        "variant": model.variant.value,
        "intercept_db": model.intercept_db,
        "path_loss_exponent": model.path_loss_exponent,
        "wall_loss_db": dict(model.wall_loss_db),
        "shadowing_sigma_db": model.shadowing_sigma_db,
        "reference_distance_m": model.reference_distance_m,
    }
    if model.variant is ModelVariant.MW_EP:
        payload["env_coeffs"] = dict(model.env_coeffs)
        payload["snr_coeff"] = model.snr_coeff
    return payload


def model_from_dict(payload: Mapping) -> PathLossModel:
    try:
        variant = ModelVariant(payload["variant"])
        return PathLossModel(
            variant=variant,
            intercept_db=float(payload["intercept_db"]),
            path_loss_exponent=float(payload["path_loss_exponent"]),
            wall_loss_db={k: float(v) for k, v in payload["wall_loss_db"].items()},
            env_coeffs={k: float(v) for k, v in payload.get("env_coeffs", {}).items()},
            snr_coeff=(
                float(payload["snr_coeff"])
                if payload.get("snr_coeff") is not None
                else None
            ),
            shadowing_sigma_db=float(payload.get("shadowing_sigma_db", 0.0)),
            reference_distance_m=float(payload.get("reference_distance_m", 1.0)),
        )
    except InvalidConfigError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InvalidConfigError(f"invalid model description: {exc}") from exc


def save_model(model: PathLossModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> PathLossModel:
    return model_from_dict(json.loads(Path(path).read_text()))
