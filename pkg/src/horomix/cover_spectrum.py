"""Spectral measures of the eigenvalue branch over finite character lattices.

A finite Abelian cover with cyclic orders (N₁, …, N_d) contributes the
rational character lattice (1/N₁)Z/Z × ⋯ × (1/N_d)Z/Z.  Averages of a
test function over the branch values λ₀(ω) at those points converge, as
min Nᵢ → ∞, to ∫ f(x) ρ(x) dx against the pushforward density of
Lebesgue measure under λ₀, which factors as ρ(x) = x^(d/2−1)·ζ̃(x) with
ζ̃ bounded near 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from ._parallel import ordered_sum, parallel_map
from .errors import DomainError, LatticeSizeError, ModelValidityError
from .spectral_model import SpectralModel

_DEFAULT_CAP = 100_000_000
_BLOCK = 8192


@dataclass(frozen=True)
class CharacterLattice:
    orders: tuple

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        object.__setattr__(self, "orders", orders)
        if not orders or any(n <= 0 for n in orders):
            raise DomainError(f"lattice orders must be positive, got {orders}")

    @property
    def size(self) -> int:
        return math.prod(self.orders)


def _centered_axis(n: int) -> np.ndarray:
    """Representatives a/n shifted into [−1/2, 1/2), sorted ascending."""
    vals = np.arange(n, dtype=float) / n
    vals[vals >= 0.5] -= 1.0
    return np.sort(vals)


def enumerate_characters(
    lattice: CharacterLattice, cap: int = _DEFAULT_CAP
) -> np.ndarray:
    """All lattice characters as centered torus points, lex-ordered.

    Centered representatives keep sublevel sets of λ₀ near 0 away from
    the fundamental-domain boundary.
    """
    if lattice.size > cap:
        raise LatticeSizeError(
            f"lattice has {lattice.size} points, above the cap {cap}"
        )
    axes = [_centered_axis(n) for n in lattice.orders]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass
class SpectralHistogram:
    epsilon: float
    values: np.ndarray         # branch values <= epsilon, sorted
    weight: float              # 1/|lattice|
    count: int
    mass: float
    moments: tuple             # (first, second) weighted moments


def build_histogram(
    model: SpectralModel, lattice: CharacterLattice, epsilon: float
) -> SpectralHistogram:
    lam = _branch_values(model, lattice, epsilon)
    w = 1.0 / lattice.size
    vals = np.sort(lam)
    return SpectralHistogram(
        epsilon=epsilon,
        values=vals,
        weight=w,
        count=vals.size,
        mass=vals.size * w,
        moments=(float(vals.sum() * w), float((vals**2).sum() * w)),
    )


def _branch_values(
    model: SpectralModel, lattice: CharacterLattice, epsilon: float
) -> np.ndarray:
    """λ₀ at all lattice points with λ₀ ≤ ε, evaluated in fixed blocks."""
    if not 0.0 < epsilon <= model.gap_delta:
        raise DomainError(
            f"epsilon must lie in (0, gap_delta = {model.gap_delta}], got {epsilon}"
        )
    pts = enumerate_characters(lattice)
    blocks = [pts[i : i + _BLOCK] for i in range(0, pts.shape[0], _BLOCK)]

    def work(block):
        lam = model.lambda0_batch(block)
        keep = lam <= epsilon
        return lam[keep], block[keep]

    kept_lam, kept_pts = [], []
    for lam, p in parallel_map(work, blocks):
        kept_lam.append(lam)
        kept_pts.append(p)
    lam = np.concatenate(kept_lam) if kept_lam else np.empty(0)
    sel = np.concatenate(kept_pts) if kept_pts else np.empty((0, model.rank_d))
    if sel.size and np.any(np.abs(sel) > model.domain_u + 1e-12):
        raise ModelValidityError(
            "epsilon sublevel set leaves the working box U; the branch model "
            "does not control those characters"
        )
    return lam


def spectral_average(
    model: SpectralModel,
    lattice: CharacterLattice,
    f,
    epsilon: float,
) -> float:
    """(1/∏Nᵢ) Σ_{λ₀(ω) ≤ ε} f(λ₀(ω)) over the character lattice.

    ``f`` must be vectorized on arrays of branch values and supported in
    [0, ε); ε may not exceed the branch gap, above which unmodeled
    eigenvalue branches would contribute.
    """
    lam = _branch_values(model, lattice, epsilon)
    if lam.size == 0:
        return 0.0
    vals = np.asarray(f(lam), dtype=float)
    return ordered_sum(vals.tolist()) / lattice.size


# ---------------------------------------------------------------------------
# limiting density
# ---------------------------------------------------------------------------


@dataclass
class DensityTable:
    x: np.ndarray
    density: np.ndarray        # full pushforward density rho(x)
    zeta_tilde: np.ndarray     # rho(x) / x^(d/2 - 1)
    exponent: float            # d/2 - 1
    epsilon: float


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _radial_phi(model: SpectralModel):
    """λ₀ = φ(q) with q the quadratic part, if the model is radial."""
    if model.perturbation is None:
        return (lambda q: q), (lambda q: np.ones_like(np.asarray(q, float)))
    phi = model.perturbation.radial_phi()
    if phi is not None:
        phi_p = model.perturbation.radial_phi_prime()
        return phi, phi_p
    if model.rank_d == 1 and model.perturbation.name == "quartic":
        # coeff·omega^4 = (coeff/qc^2)·q^2 in one dimension
        c = model.perturbation.coeff / model.quad_coeff**2
        return (lambda q: q + c * q * q), (lambda q: 1.0 + 2.0 * c * q)
    return None, None


def _sublevel_volume_and_density(model: SpectralModel, x: float):
    """(Vol{λ₀ ≤ x}, ρ(x)) for radial-class models, exact reduction."""
    d = model.rank_d
    det_m = float(np.linalg.det(model.quad_coeff * model.gram))
    vd = _unit_ball_volume(d)
    phi, phi_p = _radial_phi(model)
    if phi is None:
        return None
    if x == 0.0:
        return 0.0, (math.inf if d == 1 else (vd / math.sqrt(det_m) if d == 2 else 0.0))
    hi = max(x, 1.0)
    while phi(hi) < x:
        hi *= 2.0
    qstar = brentq(lambda q: phi(q) - x, 0.0, hi, xtol=1e-16, rtol=8.9e-16)
    vol = qstar ** (d / 2.0) * vd / math.sqrt(det_m)
    rho = (
        (d / 2.0)
        * qstar ** (d / 2.0 - 1.0)
        * vd
        / math.sqrt(det_m)
        / float(phi_p(qstar))
    )
    return vol, rho


def _angular_density_2d(model: SpectralModel, x: float, n_angles: int = 64) -> float:
    """ρ(x) = ∫ r·(∂λ₀/∂r)⁻¹ dφ on the level curve, general 2-d models."""
    nodes, weights = leggauss(n_angles)
    phis = math.pi * (nodes + 1.0)        # map [-1,1] -> [0, 2pi]
    wts = math.pi * weights
    total = 0.0
    rmax = float(np.min(model.domain_u))
    for phi_ang, w in zip(phis, wts):
        direction = np.array([math.cos(phi_ang), math.sin(phi_ang)])

        def lam_r(r):
            return float(model.lambda0_batch(r * direction))

        if lam_r(rmax) <= x:
            raise DomainError(
                "level set touches the working box; reduce epsilon"
            )
        r_root = brentq(lambda r: lam_r(r) - x, 0.0, rmax, xtol=1e-15, rtol=8.9e-16)
        h = max(1e-7, 1e-7 * r_root)
        dlam = (lam_r(r_root + h) - lam_r(max(r_root - h, 0.0))) / (
            h + min(h, r_root)
        )
        total += w * r_root / dlam
    return total


def limit_density(
    model: SpectralModel, epsilon: float, grid: np.ndarray
) -> DensityTable:
    """Pushforward density of torus Lebesgue measure under λ₀ on [0, ε].

    Radial-class models (pure quadratic, radial quartic, any 1-d
    perturbation of the supported presets) reduce exactly to one
    dimension; other 2-d models integrate over level curves numerically.
    The x^(d/2−1) factor is split off into ``zeta_tilde``, which stays
    bounded near 0.
    """
    if not 0.0 < epsilon <= model.gap_delta:
        raise DomainError("epsilon must lie in (0, gap_delta]")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0.0) or np.any(grid > epsilon):
        raise DomainError("density grid must lie inside [0, epsilon]")
    d = model.rank_d
    expo = d / 2.0 - 1.0
    rho = np.empty(grid.size)
    phi, _ = _radial_phi(model)
    for i, x in enumerate(grid):
        if phi is not None:
            rho[i] = _sublevel_volume_and_density(model, float(x))[1]
        elif d == 2:
            rho[i] = (
                _angular_density_2d(model, float(x))
                if x > 0.0
                else _angular_density_2d(model, 1e-12 * epsilon)
            )
        else:
            raise DomainError(
                "general non-radial models are supported only in dimension 2"
            )
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(grid > 0.0, grid, 1.0)
        zt = np.where(grid > 0.0, rho * safe ** (-expo), np.nan)
    if grid.size and grid[0] == 0.0:
        # small-x limit from the Hessian: (d/2) V_d / sqrt(det M)
        det_m = float(np.linalg.det(model.quad_coeff * model.gram))
        zt[0] = (d / 2.0) * _unit_ball_volume(d) / math.sqrt(det_m)
    return DensityTable(
        x=grid, density=rho, zeta_tilde=zt, exponent=expo, epsilon=epsilon
    )


def limit_integral(model: SpectralModel, f, epsilon: float, n_nodes: int = 200) -> float:
    """∫₀^ε f(x) ρ(x) dx via the substitution x = s² (regular integrand)."""
    nodes, weights = leggauss(n_nodes)
    s_hi = math.sqrt(epsilon)
    s = 0.5 * s_hi * (nodes + 1.0)
    w = 0.5 * s_hi * weights
    x = s * s
    table = limit_density(model, epsilon, x)
    vals = np.asarray(f(x), dtype=float) * table.density * 2.0 * s
    return float(np.dot(w, vals))


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    min_n: int
    empirical: float
    limit: float
    abs_err: float


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    fitted_exponent: float = float("nan")
    limit_value: float = float("nan")


def convergence_study(
    model: SpectralModel,
    f,
    epsilon: float,
    order_sequence,
) -> ConvergenceReport:
    """Empirical-vs-limit errors along a sequence of growing lattices.

    The fitted decay exponent of |error| against min Nᵢ is reported, not
    asserted; zero errors are excluded from the fit.
    """
    seq = [tuple(int(n) for n in entry) for entry in order_sequence]
    mins = [min(entry) for entry in seq]
    if any(b <= a for a, b in zip(mins, mins[1:])):
        raise DomainError("order sequence must strictly increase in min N")
    limit = limit_integral(model, f, epsilon)
    report = ConvergenceReport(limit_value=limit)
    for orders, mn in zip(seq, mins):
        emp = spectral_average(model, CharacterLattice(orders), f, epsilon)
        report.rows.append(
            ConvergenceRow(
                min_n=mn, empirical=emp, limit=limit, abs_err=abs(emp - limit)
            )
        )
    errs = np.array([r.abs_err for r in report.rows])
    ns = np.array([r.min_n for r in report.rows], dtype=float)
    good = errs > 0.0
    if np.count_nonzero(good) >= 2:
        report.fitted_exponent = float(
            -np.polyfit(np.log(ns[good]), np.log(errs[good]), 1)[0]
        )
    return report


# -- CLI test functions -------------------------------------------------------


def make_test_function(name: str, epsilon: float):
    """Named test functions supported on [0, ε)."""
    if name == "one":
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if name == "linear":
        return lambda x: np.maximum(epsilon - np.asarray(x, dtype=float), 0.0)
    if name == "bump":

        def bump(x):
            x = np.asarray(x, dtype=float)
            inside = x < epsilon
            out = np.zeros_like(x)
            with np.errstate(divide="ignore", over="ignore"):
                out[inside] = np.exp(1.0 - epsilon / (epsilon - x[inside]))
            return out

        return bump
    raise DomainError(f"unknown test function {name!r}")
