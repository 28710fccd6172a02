"""Least-squares estimation of path-loss coefficients via Levenberg-Marquardt.

Both model variants are linear in their coefficients, so the Jacobian is
closed-form and the damped normal-equations iteration converges to the global
optimum; the machinery still runs the full damped loop so the estimator
matches its stated contract (damping schedule, iteration cap, residual-based
shadowing spread) rather than special-casing linearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FitError, InvalidConfigError, InvalidDataError
from .propagation import ENV_FIELDS, ModelVariant, PathLossModel
from .records import ObservationRecord

_STRUCTURAL_PARAMS = (
    "intercept_db",
    "path_loss_exponent",
    "wall_brick_db",
    "wall_wood_db",
)
_ENV_PARAMS = tuple(f"env_{name}" for name in ENV_FIELDS)

PARAM_NAMES: dict[ModelVariant, tuple[str, ...]] = {
    ModelVariant.MW: _STRUCTURAL_PARAMS,
    ModelVariant.MW_EP: _STRUCTURAL_PARAMS + _ENV_PARAMS + ("snr_coeff",),
}

#: Structural starting point: the simulation presets (40 dB reference loss,
#: exponent 3.5, 9 dB brick, 3 dB wood); covariate coefficients start at zero
#: and the SNR coefficient at -1 (path loss moves against SNR).
_INITIAL_STRUCTURAL = (40.0, 3.5, 9.0, 3.0)


def default_initial_params(variant: ModelVariant) -> np.ndarray:
    if variant is ModelVariant.MW:
        return np.array(_INITIAL_STRUCTURAL)
    return np.array(_INITIAL_STRUCTURAL + (0.0,) * len(ENV_FIELDS) + (-1.0,))


@dataclass(frozen=True)
class FitConfig:
    """Damping schedule and stopping rules for the iterative fit."""

    initial_params: tuple[float, ...] | None = None
    max_iterations: int = 100_000
    rss_tolerance: float = 1e-10
    damping_initial: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    reference_distance_m: float = 1.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise InvalidConfigError("max_iterations must be >= 1")
        if self.rss_tolerance <= 0:
            raise InvalidConfigError("rss_tolerance must be positive")
        if self.damping_initial <= 0:
            raise InvalidConfigError("damping_initial must be positive")
        if self.damping_up <= 1.0:
            raise InvalidConfigError("damping_up must exceed 1")
        if not 0.0 < self.damping_down < 1.0:
            raise InvalidConfigError("damping_down must lie in (0, 1)")
        if self.reference_distance_m <= 0:
            raise InvalidConfigError("reference_distance_m must be positive")


@dataclass(frozen=True)
class FitReport:
    """Outcome of one fit: coefficients, fit quality and residual spread."""

    variant: ModelVariant
    param_names: tuple[str, ...]
    params: np.ndarray
    rss: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    shadowing_sigma_db: float
    reference_distance_m: float

    def params_by_name(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.param_names, self.params)}

    def to_model(self) -> PathLossModel:
        return model_from_params(
            self.variant,
            self.params,
            shadowing_sigma_db=self.shadowing_sigma_db,
            reference_distance_m=self.reference_distance_m,
        )


def design_matrix(
    observations: Sequence[ObservationRecord],
    variant: ModelVariant,
    reference_distance_m: float = 1.0,
) -> np.ndarray:
    """N x p matrix of partial predictors, one column per coefficient.

    Columns: all-ones intercept, ``10 log10(d/d0)``, brick count, wood count
    and, for the extended variant, the five covariates and the SNR.
    """
    if not observations:
        raise InvalidDataError("no observations")
    n = len(observations)
    columns = [
        np.ones(n),
        np.array(
            [10.0 * math.log10(r.distance_m / reference_distance_m) for r in observations]
        ),
        np.array([float(r.c_walls) for r in observations]),
        np.array([float(r.w_walls) for r in observations]),
    ]
    if variant is ModelVariant.MW_EP:
        columns.append(np.array([r.temperature_c for r in observations]))
        columns.append(np.array([r.humidity_pct for r in observations]))
        columns.append(np.array([r.pressure_hpa for r in observations]))
        columns.append(np.array([r.pm25_ugm3 for r in observations]))
        columns.append(np.array([r.co2_ppm for r in observations]))
        columns.append(np.array([r.snr_db for r in observations]))
    return np.column_stack(columns)


def fixed_offsets(
    observations: Sequence[ObservationRecord], variant: ModelVariant
) -> np.ndarray:
    """Per-observation additive terms with no free coefficient.

    The extended variant carries the 20*log10(f/MHz) frequency term with a
    fixed coefficient of 20; the structural variant has none.
    """
    if variant is ModelVariant.MW_EP:
        return np.array([20.0 * math.log10(r.frequency_mhz) for r in observations])
    return np.zeros(len(observations))


def _check_params(params: np.ndarray, variant: ModelVariant) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    expected = len(PARAM_NAMES[variant])
    if params.shape != (expected,):
        raise InvalidDataError(
            f"parameter vector has shape {params.shape}, expected ({expected},)"
        )
    return params


def predictions(
    params: np.ndarray,
    observations: Sequence[ObservationRecord],
    variant: ModelVariant,
    reference_distance_m: float = 1.0,
) -> np.ndarray:
    """Predicted path loss per observation for a coefficient vector."""
    params = _check_params(params, variant)
    x = design_matrix(observations, variant, reference_distance_m)
    return x @ params + fixed_offsets(observations, variant)


def rss(
    params: np.ndarray,
    observations: Sequence[ObservationRecord],
    variant: ModelVariant,
    reference_distance_m: float = 1.0,
) -> float:
    """Residual sum of squares of measured minus predicted path loss."""
    if not observations:
        raise InvalidDataError("no observations")
    measured = np.array([r.exp_pl_db for r in observations])
    residual = measured - predictions(params, observations, variant, reference_distance_m)
    return float(residual @ residual)


def jacobian(
    params: np.ndarray,
    observations: Sequence[ObservationRecord],
    variant: ModelVariant,
    reference_distance_m: float = 1.0,
) -> np.ndarray:
    """Partial derivatives of the prediction w.r.t. each coefficient.

    The models are linear in their coefficients, so this equals the design
    matrix for any parameter value; the vector is validated to keep the
    calling contract uniform with nonlinear extensions.
    """
    _check_params(params, variant)
    return design_matrix(observations, variant, reference_distance_m)


def fit(
    observations: Sequence[ObservationRecord],
    variant: ModelVariant,
    config: FitConfig | None = None,
) -> FitReport:
    """Damped least squares over the coefficient vector.

    The damping factor shrinks on every accepted step and grows when a trial
    step fails to reduce the RSS; iteration stops on a sub-tolerance relative
    RSS change or at the iteration cap (reported via ``converged``, not an
    error).  Rank-deficient designs are rejected up front.
    """
    config = config or FitConfig()
    names = PARAM_NAMES[variant]
    p = len(names)
    if len(observations) < p + 1:
        raise FitError(
            f"underdetermined: {len(observations)} observations for {p} coefficients"
        )

    x = design_matrix(observations, variant, config.reference_distance_m)
    y = np.array([r.exp_pl_db for r in observations]) - fixed_offsets(observations, variant)
    if np.linalg.matrix_rank(x) < p:
        raise FitError(
            "singular normal equations: the design is rank-deficient "
            "(e.g. all observations at a single distance)"
        )

    if config.initial_params is not None:
        alpha = _check_params(np.array(config.initial_params), variant)
    else:
        alpha = default_initial_params(variant)

    xtx = x.T @ x
    identity = np.eye(p)
    residual = y - x @ alpha
    current_rss = float(residual @ residual)
    damping = config.damping_initial
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        step = np.linalg.solve(xtx + damping * identity, x.T @ residual)
        candidate = alpha + step
        candidate_residual = y - x @ candidate
        candidate_rss = float(candidate_residual @ candidate_residual)
        if candidate_rss <= current_rss:
            relative_drop = (
                (current_rss - candidate_rss) / current_rss if current_rss > 0 else 0.0
            )
            alpha, residual, current_rss = candidate, candidate_residual, candidate_rss
            damping *= config.damping_down
            if current_rss == 0.0 or relative_drop < config.rss_tolerance:
                converged = True
                break
        else:
            damping *= config.damping_up

    sigma = float(np.std(residual))
    return FitReport(
        variant=variant,
        param_names=names,
        params=alpha,
        rss=current_rss,
        iterations=iterations,
        converged=converged,
        residuals=residual,
        shadowing_sigma_db=sigma,
        reference_distance_m=config.reference_distance_m,
    )


def standard_errors(
    report: FitReport, observations: Sequence[ObservationRecord]
) -> np.ndarray:
    """Conventional coefficient standard errors, sqrt(diag((X'X)^-1 s^2)).

    ``s^2`` is the residual variance with the degrees-of-freedom correction
    ``rss / (N - p)``.
    """
    x = design_matrix(observations, report.variant, report.reference_distance_m)
    n, p = x.shape
    if n <= p:
        raise FitError("standard errors need more observations than coefficients")
    s2 = report.rss / (n - p)
    covariance = np.linalg.inv(x.T @ x) * s2
    return np.sqrt(np.diag(covariance))


def params_from_model(model: PathLossModel) -> np.ndarray:
    """Coefficient vector of a model, in canonical parameter order."""
    values = [
        model.intercept_db,
        model.path_loss_exponent,
        model.wall_loss_db.get("brick", 0.0),
        model.wall_loss_db.get("wood", 0.0),
    ]
    if model.variant is ModelVariant.MW_EP:
        values.extend(model.env_coeffs.get(name, 0.0) for name in ENV_FIELDS)
        values.append(model.snr_coeff or 0.0)
    return np.array(values)


def model_from_params(
    variant: ModelVariant,
    params: np.ndarray,
    shadowing_sigma_db: float = 0.0,
    reference_distance_m: float = 1.0,
) -> PathLossModel:
    params = _check_params(params, variant)
    wall_loss = {"brick": float(params[2]), "wood": float(params[3])}
    if variant is ModelVariant.MW:
        return PathLossModel(
            variant=variant,
            intercept_db=float(params[0]),
            path_loss_exponent=float(params[1]),
            wall_loss_db=wall_loss,
            shadowing_sigma_db=shadowing_sigma_db,
            reference_distance_m=reference_distance_m,
        )
    env = {name: float(v) for name, v in zip(ENV_FIELDS, params[4:9])}
    return PathLossModel(
        variant=variant,
        intercept_db=float(params[0]),
        path_loss_exponent=float(params[1]),
        wall_loss_db=wall_loss,
        env_coeffs=env,
        snr_coeff=float(params[9]),
        shadowing_sigma_db=shadowing_sigma_db,
        reference_distance_m=reference_distance_m,
    )
