"""Lowest eigenvalue branch of a family of twisted Laplacians.

The model is parametrized by a genus g ≥ 2, a rank d, and a symmetric
positive-definite Gram matrix G of pairings of a harmonic-form basis.  The
branch is the quadratic form

    λ₀(ω) = (π/(g−1)) ωᵀ G ω  +  p(ω),

where p is an optional perturbation vanishing to second order at 0, so the
Hessian of λ₀ at the origin is exactly (2π/(g−1)) G.  The branch must stay
inside [0, 1/4) on its working box U; the Casimir parameter ν = √(1−4λ)
then lies in (0, 1] and the mixing Hessian 2 D²λ₀(0) = (4π/(g−1)) G is
positive definite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError, DomainError, ModelValidityError

LAMBDA_MAX = 0.25


def nu_of_lambda(lam: float) -> float:
    """Casimir parameter ν = √(1 − 4λ) on the branch 0 ≤ λ < 1/4."""
    if not 0.0 <= lam < LAMBDA_MAX:
        raise DomainError(f"lambda must lie in [0, 1/4), got {lam}")
    return math.sqrt(1.0 - 4.0 * lam)


def lambda_of_nu(nu: float) -> float:
    """Inverse map λ(ν) = (1 − ν²)/4 for ν in (0, 1]."""
    if not 0.0 < nu <= 1.0:
        raise DomainError(f"nu must lie in (0, 1], got {nu}")
    return (1.0 - nu * nu) / 4.0


@dataclass(frozen=True)
class CasimirPoint:
    """A (λ, ν) pair with λ = (1 − ν²)/4."""

    lam: float
    nu: float

    @classmethod
    def from_lambda(cls, lam: float) -> "CasimirPoint":
        return cls(lam=float(lam), nu=nu_of_lambda(lam))

    @classmethod
    def from_nu(cls, nu: float) -> "CasimirPoint":
        return cls(lam=lambda_of_nu(nu), nu=float(nu))


class Perturbation:
    """Named perturbation added to the quadratic eigenvalue model.

    Presets:
      quartic        coeff * sum_i ω_i⁴
      radial_quartic coeff * q(ω)² with q the model's quadratic part
    Both vanish to second order at 0.  ``radial_quartic`` keeps the model
    in the radial Morse class, which downstream density and expansion
    code can exploit exactly.
    """

    PRESETS = ("quartic", "radial_quartic")

    def __init__(self, name: str, coeff: float):
        if name not in self.PRESETS:
            raise ConfigError(f"unknown perturbation preset {name!r}")
        self.name = name
        self.coeff = float(coeff)

    def __call__(self, pts: np.ndarray, quad_form: np.ndarray) -> np.ndarray:
        # pts: (..., d); quad_form: the values q(ω) at the same points.
        if self.name == "quartic":
            return self.coeff * np.sum(pts**4, axis=-1)
        return self.coeff * quad_form**2

    def radial_phi(self):
        """λ₀ = φ(q) if the perturbed model is still a function of q alone."""
        if self.name != "radial_quartic":
            return None
        c = self.coeff
        return lambda q: q + c * q * q

    def radial_phi_prime(self):
        if self.name != "radial_quartic":
            return None
        c = self.coeff
        return lambda q: 1.0 + 2.0 * c * q

    def to_json(self) -> dict:
        return {"name": self.name, "params": {"coeff": self.coeff}}

    @classmethod
    def from_json(cls, doc: dict) -> "Perturbation":
        try:
            return cls(doc["name"], doc["params"]["coeff"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad perturbation document: {doc!r}") from exc


def _default_domain(genus: int, gram: np.ndarray, margin: float = 0.9) -> np.ndarray:
    """Largest centered box on which the quadratic part stays below 1/4,
    shrunk by a 10% margin and capped at the torus half-width 1/2."""
    d = gram.shape[0]
    coeff = math.pi / (genus - 1)
    if d <= 16:
        # The quadratic form is convex: its max over the box sits at a vertex.
        m = max(s @ gram @ s for s in product((-1.0, 1.0), repeat=d))
    else:
        m = float(np.linalg.eigvalsh(gram)[-1]) * d
    u = margin * math.sqrt(LAMBDA_MAX / (coeff * m))
    return np.full(d, min(u, 0.5))


@dataclass(frozen=True)
class SpectralModel:
    """Immutable eigenvalue-branch model; all operations are pure."""

    genus: int
    rank_d: int
    gram: np.ndarray
    perturbation: Perturbation | None = None
    gap_delta: float = 0.2
    domain_u: np.ndarray = field(default=None)  # box half-widths

    def __post_init__(self):
        gram = np.atleast_2d(np.asarray(self.gram, dtype=float))
        object.__setattr__(self, "gram", gram)
        self._check_structure()
        if self.domain_u is None:
            object.__setattr__(self, "domain_u", _default_domain(self.genus, gram))
        else:
            object.__setattr__(
                self, "domain_u", np.asarray(self.domain_u, dtype=float)
            )
        if self.domain_u.shape != (self.rank_d,) or np.any(self.domain_u <= 0):
            raise ModelValidityError("domain_u must be positive half-widths")
        gram.setflags(write=False)
        self.domain_u.setflags(write=False)

    # -- structure ---------------------------------------------------------

    def _check_structure(self):
        if self.genus < 2:
            raise ModelValidityError(f"genus must be >= 2, got {self.genus}")
        if not 1 <= self.rank_d <= 2 * self.genus:
            raise ModelValidityError(
                f"rank_d must lie in [1, {2 * self.genus}], got {self.rank_d}"
            )
        if self.gram.shape != (self.rank_d, self.rank_d):
            raise ModelValidityError(
                f"gram must be {self.rank_d}x{self.rank_d}, got {self.gram.shape}"
            )
        if not np.allclose(self.gram, self.gram.T, rtol=0, atol=1e-12):
            raise ModelValidityError("gram not symmetric")
        if np.linalg.eigvalsh(self.gram)[0] <= 0:
            raise ModelValidityError("gram not positive definite")
        if self.gap_delta <= 0:
            raise ModelValidityError("gap_delta must be positive")

    @property
    def quad_coeff(self) -> float:
        """Coefficient π/(g−1) of the quadratic form ωᵀGω in λ₀."""
        return math.pi / (self.genus - 1)

    # -- evaluation --------------------------------------------------------

    def quadratic_part(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self.quad_coeff * np.einsum("...i,ij,...j->...", pts, self.gram, pts)

    def lambda0_batch(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate the branch formula on arbitrary torus points.

        No domain checks: the analytic formula extends to the whole torus,
        which the lattice sweeps rely on.  Scalar entry points that promise
        λ₀ < 1/4 must go through :meth:`lambda0`.
        """
        q = self.quadratic_part(pts)
        if self.perturbation is None:
            return q
        return q + self.perturbation(np.asarray(pts, dtype=float), q)

    def lambda0(self, omega) -> float:
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if omega.shape != (self.rank_d,):
            raise DomainError(f"omega must have {self.rank_d} components")
        if np.any(np.abs(omega) > self.domain_u + 1e-15):
            raise DomainError(f"omega {omega} outside the working box U")
        val = float(self.lambda0_batch(omega))
        if val >= LAMBDA_MAX:
            raise ModelValidityError(
                f"lambda0({omega}) = {val} >= 1/4; model invalid on U"
            )
        return val

    def nu0(self, omega) -> float:
        return nu_of_lambda(self.lambda0(omega))

    def hessian_lambda0(self) -> np.ndarray:
        """D²λ₀(0) = (2π/(g−1)) G, exact for admissible perturbations."""
        return (2.0 * math.pi / (self.genus - 1)) * self.gram

    def mixing_hessian(self) -> np.ndarray:
        """Hessian 2 D²λ₀(0) of the mixing exponent 1 − ν₀ at the origin."""
        return 2.0 * self.hessian_lambda0()

    def sigma_constant(self) -> float:
        """σ = det(G)^{−1/2}.

        This is the unique normalization for which the two closed forms of
        the leading mixing coefficient, ((g−1)/2)^{d/2} σ and
        (2π)^{d/2}/√det(2 D²λ₀(0)), agree identically.
        """
        return 1.0 / math.sqrt(float(np.linalg.det(self.gram)))

    # -- validation battery -------------------------------------------------

    def validate(self, grid_per_axis: int = 11) -> None:
        """Run the runtime invariants: Hessian identity, positivity sweep,
        sub-1/4 sweep, and second-order vanishing of the perturbation."""
        d = self.rank_d
        if self.perturbation is not None:
            p = lambda pts: self.perturbation(
                np.asarray(pts, float), self.quadratic_part(pts)
            )
            g0 = finite_difference_gradient(p, np.zeros(d))
            h0 = finite_difference_hessian(p, np.zeros(d))
            if np.max(np.abs(g0)) > 1e-8 or np.max(np.abs(h0)) > 1e-8:
                raise ModelValidityError(
                    "perturbation does not vanish to second order at 0"
                )
        fd_hess = finite_difference_hessian(self.lambda0_batch, np.zeros(d))
        target = self.hessian_lambda0()
        if not np.allclose(fd_hess, target, rtol=1e-6, atol=1e-9):
            raise ModelValidityError(
                "Hessian check failed: finite differences of lambda0 at 0 "
                "do not match (2*pi/(g-1)) * gram"
            )
        axes = [np.linspace(-u, u, grid_per_axis) for u in self.domain_u]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = self.lambda0_batch(mesh)
        nonzero = np.any(mesh != 0.0, axis=1)
        if np.any(vals[nonzero] <= 0.0):
            raise ModelValidityError("positivity sweep failed: lambda0 <= 0 off 0")
        if np.any(vals >= LAMBDA_MAX):
            raise ModelValidityError("sweep failed: lambda0 >= 1/4 inside U")

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "genus": self.genus,
            "rank_d": self.rank_d,
            "gram": [float(x) for x in self.gram.reshape(-1)],
            "perturbation": None
            if self.perturbation is None
            else self.perturbation.to_json(),
            "gap_delta": self.gap_delta,
            "domain_u": [float(x) for x in self.domain_u],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpectralModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file is not valid JSON: {exc}") from exc
        try:
            d = int(doc["rank_d"])
            gram = np.asarray(doc["gram"], dtype=float).reshape(d, d)
            pert = doc.get("perturbation")
            model = cls(
                genus=int(doc["genus"]),
                rank_d=d,
                gram=gram,
                perturbation=None if pert is None else Perturbation.from_json(pert),
                gap_delta=float(doc.get("gap_delta", 0.2)),
                domain_u=doc.get("domain_u"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad model document: {exc}") from exc
        return model


# -- module-level operation aliases ------------------------------------------


def lambda0_eval(model: SpectralModel, omega) -> float:
    return model.lambda0(omega)


def hessian_mixing(model: SpectralModel) -> np.ndarray:
    return model.mixing_hessian()


def sigma_constant(model: SpectralModel) -> float:
    return model.sigma_constant()


# -- finite differences --------------------------------------------------------


def finite_difference_gradient(fn, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    grad = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        grad[i] = (float(fn(x0 + e)) - float(fn(x0 - e))) / (2 * h)
    return grad


def finite_difference_hessian(fn, x0: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central second differences, Richardson-refined once for robustness."""

    def hess_at(step):
        x0a = np.asarray(x0, dtype=float)
        d = x0a.size
        out = np.empty((d, d))
        f0 = float(fn(x0a))
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = step
            out[i, i] = (float(fn(x0a + ei)) - 2 * f0 + float(fn(x0a - ei))) / step**2
            for j in range(i + 1, d):
                ej = np.zeros(d)
                ej[j] = step
                mixed = (
                    float(fn(x0a + ei + ej))
                    - float(fn(x0a + ei - ej))
                    - float(fn(x0a - ei + ej))
                    + float(fn(x0a - ei - ej))
                ) / (4 * step**2)
                out[i, j] = out[j, i] = mixed
        return out

    coarse = hess_at(h)
    fine = hess_at(h / 2)
    return (4.0 * fine - coarse) / 3.0
