"""Model correlation integrals and their slow-time expansion.

With T = log t, the surviving part of the correlation of two observables
is the Laplace-type integral

    I(T) = ∫_U A(ω) e^{−T (1 − ν₀(ω))} dω,

whose phase v = ν₀ − 1 vanishes quadratically at the trivial character
with Hessian 2 D²λ₀(0).  Everything here is parameterized by T directly;
t = e^T is never formed, so T up to 10⁶ stays exact in floating point.
The leading coefficient admits two closed forms,

    (2π)^{d/2} A(0) / √det H   =   ((g−1)/2)^{d/2} σ A(0),

identical by the normalization σ = det(G)^{−1/2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .errors import DomainError, ModelValidityError
from .laplace import (
    ExpansionCoefficients,
    PhaseProblem,
    fit_expansion,
    laplace_quadrature,
)
from .spectral_model import LAMBDA_MAX, SpectralModel


@dataclass
class MixingProblem:
    """Spectral model plus the amplitude A(ω) standing in for the
    observable pairing; ``amplitude=None`` selects the constant model
    A ≡ vol_product."""

    model: SpectralModel
    amplitude: object = None
    vol_product: float = 1.0

    def amplitude_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.amplitude is None:
            return np.full(pts.shape[0], self.vol_product)
        return np.asarray(self.amplitude(pts), dtype=float)

    def a0(self) -> float:
        return float(self.amplitude_at(np.zeros((1, self.model.rank_d)))[0])

    def validate(self) -> None:
        if self.amplitude is not None:
            a0 = self.a0()
            if not math.isfinite(a0):
                raise ModelValidityError("amplitude must be finite at 0")


def induced_phase_problem(problem: MixingProblem) -> PhaseProblem:
    """The Laplace problem with v = ν₀ − 1 on the model's working box."""
    model = problem.model

    def v(pts):
        lam = model.lambda0_batch(pts)
        if np.any(lam >= LAMBDA_MAX):
            raise ModelValidityError("lambda0 reaches 1/4 inside the box")
        return np.sqrt(1.0 - 4.0 * lam) - 1.0

    return PhaseProblem(
        dim=model.rank_d,
        v=v,
        a=problem.amplitude_at,
        box=model.domain_u,
        hessian=model.mixing_hessian(),
        morse=None,
    )


def correlation_integral(
    problem: MixingProblem, t_log: float, rel_tol: float = 1e-10
) -> float:
    """∫_U A(ω) e^{−T(1−ν₀(ω))} dω at T = t_log.

    Runs the shared panel engine under a different panel layout than
    :func:`horomix.laplace.laplace_quadrature` defaults, so agreement of
    the two routes is a meaningful cross-check rather than a tautology.
    """
    if t_log < 0.0:
        raise DomainError("t_log must be nonnegative")
    induced = induced_phase_problem(problem)
    return laplace_quadrature(
        induced, t_log, rel_tol=rel_tol, nodes=32, panel_ratio=1.6
    )


def leading_constant(model: SpectralModel, a0: float) -> float:
    """((g−1)/2)^{d/2} · σ · a0, the closed-form leading coefficient."""
    return (
        ((model.genus - 1) / 2.0) ** (model.rank_d / 2.0)
        * model.sigma_constant()
        * a0
    )


def sample_correlation(
    problem: MixingProblem, t_log_grid: np.ndarray, rel_tol: float = 1e-10
) -> np.ndarray:
    """Correlation integral over a T grid, data-parallel in index order."""
    t_log_grid = np.asarray(t_log_grid, dtype=float)
    vals = parallel_map(
        lambda T: correlation_integral(problem, T, rel_tol=rel_tol), t_log_grid
    )
    return np.asarray(vals, dtype=float)


def mixing_expansion(
    problem: MixingProblem,
    t_log_grid: np.ndarray,
    order_n: int,
    rel_tol: float = 1e-10,
    values: np.ndarray | None = None,
) -> tuple[ExpansionCoefficients, dict]:
    """Fit the (log t)^(−j−d/2) expansion of the correlation integral.

    Samples the integral over the T grid (or reuses ``values``), extracts
    coefficients with :func:`fit_expansion`, and returns a verdict
    comparing the fitted leading coefficient with both closed forms of
    the leading constant.
    """
    t_log_grid = np.asarray(t_log_grid, dtype=float)
    vals = (
        sample_correlation(problem, t_log_grid, rel_tol)
        if values is None
        else np.asarray(values, dtype=float)
    )
    samples = np.column_stack([t_log_grid, vals])
    fit = fit_expansion(samples, problem.model.rank_d, order_n)

    model = problem.model
    a0 = problem.a0()
    closed = leading_constant(model, a0)
    hess = model.mixing_hessian()
    closed_hessian_form = (
        (2.0 * math.pi) ** (model.rank_d / 2.0)
        * a0
        / math.sqrt(float(np.linalg.det(hess)))
    )
    denom = abs(closed) if closed != 0.0 else 1.0
    verdict = {
        "c0_fit": float(fit.c[0]),
        "c0_closed_form": closed,
        "c0_hessian_form": closed_hessian_form,
        "rel_dev": abs(fit.c[0] - closed) / denom,
        "sigma": model.sigma_constant(),
        "det_gram": float(np.linalg.det(model.gram)),
    }
    return fit, verdict
