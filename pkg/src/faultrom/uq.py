"""Multi-query analysis: error metrics, Monte Carlo sensitivity, inversion.

The Sobol first-order estimator is the pick-freeze (Saltelli) scheme with
paired sample matrices; the density estimate uses a Gaussian kernel with
Scott's bandwidth; the inverse problem wraps a bounded differential
evolution search over the surrogate's quantity of interest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import differential_evolution as _scipy_de

from .errors import ConfigError
from .snapshots import ParameterSpace


@dataclass
class ErrorReport:
    e_max: float
    e_min: float
    e_ave: float
    per_sample: np.ndarray

    def as_dict(self) -> dict:
        return {"e_max": self.e_max, "e_min": self.e_min, "e_ave": self.e_ave}


def errors(reference: np.ndarray, approximation: np.ndarray) -> ErrorReport:
    """Relative 2-norm error statistics over test columns.

    Both arguments are (N, J) matrices of full-order and surrogate
    solutions at the same parameter points.
    """
    U = np.asarray(reference, dtype=float)
    V = np.asarray(approximation, dtype=float)
    if U.shape != V.shape:
        raise ConfigError(f"shape mismatch {U.shape} vs {V.shape}")
    norms = np.linalg.norm(U, axis=0)
    if np.any(norms == 0):
        raise ConfigError("zero-norm reference snapshot")
    rel = np.linalg.norm(U - V, axis=0) / norms
    return ErrorReport(e_max=float(rel.max()), e_min=float(rel.min()),
                       e_ave=float(rel.mean()), per_sample=rel)


# ---------------------------------------------------------------------------
# Sobol sensitivity

@dataclass
class SobolResult:
    qoi_mean: float
    qoi_std: float
    first_order: np.ndarray
    sample_count: int
    degenerate: bool = False


def _evaluate(qoi, points: np.ndarray) -> np.ndarray:
    out = qoi(points)
    return np.asarray(out, dtype=float).reshape(len(points))


def sobol_first_order(qoi, space: ParameterSpace, n_base: int,
                      seed: int) -> SobolResult:
    """First-order indices by the pick-freeze estimator with paired
    matrices A and B; mean and deviation come from the pooled samples."""
    rng = np.random.default_rng(seed)
    e = space.e
    unit_a = rng.random((n_base, e))
    unit_b = rng.random((n_base, e))
    return _sobol_from_units(qoi, space, unit_a, unit_b)


def _sobol_from_units(qoi, space, unit_a, unit_b) -> SobolResult:
    n_base, e = unit_a.shape
    y_a = _evaluate(qoi, space.from_unit(unit_a))
    y_b = _evaluate(qoi, space.from_unit(unit_b))
    pooled = np.concatenate([y_a, y_b])
    mean = float(pooled.mean())
    var = float(pooled.var(ddof=1)) if len(pooled) > 1 else 0.0
    first = np.zeros(e)
    degenerate = var <= 0
    if degenerate:
        warnings.warn("QoI variance is zero; Sobol indices reported as 0",
                      stacklevel=2)
    else:
        for i in range(e):
            unit_ab = unit_a.copy()
            unit_ab[:, i] = unit_b[:, i]
            y_i = _evaluate(qoi, space.from_unit(unit_ab))
            first[i] = np.mean(y_b * (y_i - y_a)) / var
    return SobolResult(qoi_mean=mean, qoi_std=float(np.sqrt(max(var, 0.0))),
                       first_order=first, sample_count=n_base,
                       degenerate=degenerate)


def convergence_study(qoi, space: ParameterSpace, counts, seed: int) -> list:
    """Statistics at growing sample counts with common random numbers."""
    counts = list(counts)
    if any(b <= a for a, b in zip(counts[:-1], counts[1:])):
        raise ConfigError("counts must be strictly increasing")
    rng = np.random.default_rng(seed)
    n_max = counts[-1]
    unit_a = rng.random((n_max, space.e))
    unit_b = rng.random((n_max, space.e))
    out = []
    for c in counts:
        res = _sobol_from_units(qoi, space, unit_a[:c], unit_b[:c])
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# kernel density estimate

def kde(samples, grid) -> np.ndarray:
    """Gaussian kernel density with Scott bandwidth sigma * m**(-1/5)."""
    x = np.asarray(samples, dtype=float).ravel()
    g = np.asarray(grid, dtype=float).ravel()
    m = len(x)
    if m < 2:
        raise ConfigError("kernel density estimate needs at least 2 samples")
    sig = x.std(ddof=1)
    if sig <= 0:
        raise ConfigError("degenerate zero-variance samples")
    h = sig * m ** (-0.2)
    z = (g[:, None] - x[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (m * h * np.sqrt(2 * np.pi))


# ---------------------------------------------------------------------------
# differential evolution

@dataclass
class DeConfig:
    bounds: list                 # [(lo, hi)] per axis
    popsize: int = 15            # population = popsize * dimensions
    mutation: tuple = (0.5, 1.0)
    recombination: float = 0.7
    tol: float = 1e-3
    atol: float = 1e-10
    max_iterations: int = 1000
    seed: int = 0
    polish: bool = True

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ConfigError(f"invalid bounds ({lo}, {hi})")
        if not (self.tol > 0 and self.atol > 0):
            raise ConfigError("tol and atol must be positive")


@dataclass
class DeResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool
    message: str


def differential_evolution(objective, config: DeConfig) -> DeResult:
    """Bounded best1bin differential evolution, deterministic per seed.

    Convergence: population energy spread <= atol + tol * |mean energy|.
    Hitting the iteration cap returns the best point found with the
    converged flag cleared.
    """
    res = _scipy_de(objective, bounds=config.bounds,
                    strategy="best1bin", popsize=config.popsize,
                    mutation=config.mutation,
                    recombination=config.recombination,
                    tol=config.tol, atol=config.atol,
                    maxiter=config.max_iterations, seed=config.seed,
                    polish=config.polish, init="latinhypercube",
                    updating="immediate")
    return DeResult(x=np.asarray(res.x), fun=float(res.fun),
                    nfev=int(res.nfev), nit=int(res.nit),
                    converged=bool(res.success), message=str(res.message))


@dataclass
class InversionResult:
    mu: np.ndarray
    qoi_rom: float
    qoi_fom: float
    objective: float
    nfev: int
    converged: bool


def invert_delta_p(surrogate_qoi, target: float, config: DeConfig,
                   fom_qoi=None) -> InversionResult:
    """Find mu minimizing (qoi(mu) - target)^2 on the surrogate.

    One full-order verification solve runs at the optimum when a FOM QoI
    callback is supplied; every search evaluation stays on the surrogate.
    """
    def objective(mu):
        return (float(surrogate_qoi(mu)) - target) ** 2

    res = differential_evolution(objective, config)
    qoi_rom = float(surrogate_qoi(res.x))
    qoi_fom = float(fom_qoi(res.x)) if fom_qoi is not None else np.nan
    return InversionResult(mu=res.x, qoi_rom=qoi_rom, qoi_fom=qoi_fom,
                           objective=res.fun, nfev=res.nfev,
                           converged=res.converged)
