import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma, gammaincc

from horomix.corr_ode import (
    ForcingProfile,
    ModePair,
    Trajectory,
    TrajectoryMeta,
    assemble_forcing,
    asymptotic_amplitude,
    asymptotic_constant,
    euler_residual,
    fit_tail_amplitude,
    homogeneous_split,
    log_grid,
    master_grid,
    master_relation_residual,
    oracle_trajectory,
    particular_solution,
    particular_trajectory,
    power_weighted_integral,
    solve_master,
    tail_remainder_check,
    taylor_coefficients,
)
from horomix.errors import (
    ConsistencyError,
    ConvergenceError,
    DomainError,
    TruncationError,
)
from horomix.spectral_model import nu_of_lambda

ZERO_FORCING = ForcingProfile.from_callable(lambda t: 0.0j)


def _power_trajectory(nu, grid, coef=1.0, offset=False):
    lam = (1.0 - nu * nu) / 4.0
    y = coef * grid ** (nu - 1.0) + 0j
    yp = coef * (nu - 1.0) * grid ** (nu - 2.0) + 0j
    if offset:
        y = y + 1.0 / grid
        yp = yp - 1.0 / grid**2
    meta = TrajectoryMeta(lam=lam, nu=nu, mode=ModePair(0, 0), y0=1.0)
    return Trajectory(grid=grid, y=y, y_prime=yp, meta=meta)


# The closed-form anchor used in several tests: y(t) = (1 + t^2)^(-1/4)
# solves the Euler equation with nu = 1/2 and forcing
# f(t) = (3 - 2 t^2) / (4 (1 + t^2)^(9/4)); its tail amplitude is exactly 1
# (both integrals below reduce to Beta functions).
def _anchor_forcing(t):
    return (3.0 - 2.0 * t * t) / (4.0 * (1.0 + t * t) ** 2.25) + 0.0j


class TestSolveMaster:
    def test_constant_solution(self):
        grid = master_grid(100.0, steps_per_decade=200)
        traj = solve_master(ModePair(0, 0), 0.0, 1.0, grid)
        assert np.max(np.abs(traj.y - 1.0)) == 0.0
        assert np.max(np.abs(traj.y_prime)) == 0.0

    def test_against_refined_oracle_nu09(self):
        lam = 0.0475  # nu = 0.9
        grid = master_grid(10.0, steps_per_decade=400)
        traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
        ref, err = oracle_trajectory(ModePair(0, 0), lam, 1.0, grid, tol=1e-12)
        i = int(np.argmin(np.abs(grid - 10.0)))
        assert err < 1e-11
        assert abs(traj.y[i] - ref[i]) / abs(ref[i]) < 1e-8

    def test_resonant_mode_against_oracle(self):
        # |m - n| = 4 with nonzero y0: synthetic data, log-channel startup
        grid = master_grid(100.0, steps_per_decade=400)
        traj = solve_master(ModePair(2, -2), 0.05, 1.0, grid)
        assert traj.meta.startup == "series+log"
        ref, err = oracle_trajectory(ModePair(2, -2), 0.05, 1.0, grid, tol=1e-12)
        assert err < 1e-11
        dev = np.max(np.abs(traj.y - ref) / (1.0 + np.abs(ref)))
        assert dev < 1e-8

    def test_consistent_resonant_mode(self):
        grid = master_grid(100.0, steps_per_decade=400)
        traj = solve_master(ModePair(2, -2), 0.05, 0.0, grid, resonant_amplitude=1.0)
        assert traj.meta.startup == "series"
        assert traj.meta.inconsistency == 0.0
        assert abs(traj.y[0]) == 0.0
        assert traj.meta.master_residual < 1e-8

    def test_taylor_defect_value(self):
        # for (2,-2) the plain-power closure at k0=2 forces 4*lam*y0 = 0
        _, b, defect = taylor_coefficients(ModePair(2, -2), 0.05, 1.0, 1.0)
        assert defect == pytest.approx(4 * 0.05 * 1.0, rel=1e-14)
        assert b[2] == pytest.approx(-0.05 / 4.0, rel=1e-14)

    def test_grid_must_start_at_zero(self):
        with pytest.raises(DomainError):
            solve_master(ModePair(0, 0), 0.1, 1.0, np.array([1.0, 2.0, 3.0]))

    def test_lambda_range(self):
        grid = master_grid(10.0, steps_per_decade=100)
        with pytest.raises(DomainError):
            solve_master(ModePair(0, 0), 0.25, 1.0, grid)

    def test_odd_mode_rejected(self):
        with pytest.raises(DomainError):
            ModePair(1, 0)

    def test_coarse_grid_reports_convergence_error(self):
        grid = np.concatenate([[0.0], np.linspace(0.6, 100.0, 40)])
        with pytest.raises(ConvergenceError):
            solve_master(ModePair(0, 0), 0.2, 1.0, grid, check_tol=1e-12)

    def test_inconsistent_k1_mode_rejected(self):
        grid = master_grid(10.0, steps_per_decade=100)
        with pytest.raises(ConsistencyError):
            solve_master(ModePair(0, 2), 0.05, 1.0, grid)

    def test_fourth_order_convergence(self):
        # error at the endpoint should shrink ~16x per step halving
        lam = 0.2
        ref_grid = master_grid(50.0, steps_per_decade=100)
        ref, _ = oracle_trajectory(ModePair(0, 0), lam, 1.0, ref_grid, tol=1e-13)
        errs = []
        for spd in (100, 200, 400):
            grid = master_grid(50.0, steps_per_decade=spd)
            traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
            i = int(np.argmin(np.abs(grid - 50.0)))
            errs.append(abs(traj.y[i] - ref[-1]))
        assert errs[0] / errs[1] > 10.0
        assert errs[1] / errs[2] > 10.0

    def test_master_grid_structure(self):
        grid = master_grid(1e3, steps_per_decade=200)
        assert grid[0] == 0.0
        assert np.any(grid == 1.0)
        assert grid[-1] == pytest.approx(1e3, rel=1e-12)
        assert np.all(np.diff(grid) > 0.0)


class TestAssembleForcing:
    def test_trivial_zero(self):
        grid = master_grid(100.0, steps_per_decade=200)
        traj = solve_master(ModePair(0, 0), 0.0, 1.0, grid)
        prof = assemble_forcing(ModePair(0, 0), traj, 0.0)
        assert prof.decay_c == 0.0
        assert np.max(np.abs(prof.values)) == 0.0

    def test_endpoint_identity(self):
        # f(0) = 4 lambda y(0)
        lam = 0.04
        grid = master_grid(1e3, steps_per_decade=400)
        traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
        prof = assemble_forcing(ModePair(0, 0), traj, lam)
        assert abs(prof.diagnostics["f0"] - 0.16) < 1e-10

    def test_derivative_endpoint_identity(self):
        # f'(0) = (4 - nu^2) y'(0), probed on a mode with m + n != 0
        lam = 0.05
        nu = nu_of_lambda(lam)
        grid = master_grid(1e3, steps_per_decade=400)
        traj = solve_master(ModePair(2, 2), lam, 1.0, grid)
        prof = assemble_forcing(ModePair(2, 2), traj, lam)
        expected = (4.0 - nu * nu) * traj.y_prime[0]
        assert traj.y_prime[0] == pytest.approx(1j, rel=1e-12)
        assert abs(prof.diagnostics["fprime0"] - expected) < 1e-6

    def test_envelope_plateau_mode_04(self):
        lam = 0.05
        grid = master_grid(1e4, steps_per_decade=400)
        traj = solve_master(ModePair(0, 4), lam, 0.0, grid, resonant_amplitude=1.0)
        prof = assemble_forcing(ModePair(0, 4), traj, lam)
        assert math.isfinite(prof.decay_c) and prof.decay_c > 0.0
        t = traj.grid
        mask = t >= 1e3
        env = np.abs(prof.values[mask]) * t[mask]
        slope = np.polyfit(np.log(t[mask]), np.log(env), 1)[0]
        assert slope < 0.05

    def test_rejects_non_master_trajectory(self):
        grid = log_grid(1.0, 100.0, steps_per_decade=400)
        traj = _power_trajectory(0.5, grid)
        with pytest.raises(ConsistencyError):
            assemble_forcing(ModePair(0, 0), traj, 3.0 / 16.0)


class TestEulerResidual:
    @pytest.mark.parametrize("nu", [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
    def test_homogeneous_growing_branch(self, nu):
        grid = log_grid(1.0, 100.0, steps_per_decade=1000)
        traj = _power_trajectory(nu, grid)
        assert euler_residual(traj, ZERO_FORCING, (1 - nu * nu) / 4) <= 1e-10

    @pytest.mark.parametrize("nu", [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
    def test_homogeneous_decaying_branch(self, nu):
        lam = (1 - nu * nu) / 4
        grid = log_grid(1.0, 100.0, steps_per_decade=2000)
        y = grid ** (-nu - 1.0) + 0j
        yp = (-nu - 1.0) * grid ** (-nu - 2.0) + 0j
        meta = TrajectoryMeta(lam=lam, nu=nu, mode=ModePair(0, 0), y0=1.0)
        traj = Trajectory(grid=grid, y=y, y_prime=yp, meta=meta)
        assert euler_residual(traj, ZERO_FORCING, lam) <= 1e-10

    def test_constant_solution_zero_residual(self):
        lam = 0.1
        grid = log_grid(1.0, 50.0, steps_per_decade=300)
        meta = TrajectoryMeta(lam=lam, nu=nu_of_lambda(lam), mode=ModePair(0, 0), y0=2.0)
        traj = Trajectory(
            grid=grid,
            y=np.full(grid.size, 2.0 + 0j),
            y_prime=np.zeros(grid.size, complex),
            meta=meta,
        )
        forcing = ForcingProfile.from_callable(lambda t: 4 * lam * 2.0 + 0j)
        assert euler_residual(traj, forcing, lam) == 0.0

    def test_pipeline_closure(self):
        lam = 0.04
        grid = master_grid(1e3, steps_per_decade=400)
        traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
        prof = assemble_forcing(ModePair(0, 0), traj, lam)
        assert euler_residual(traj, prof, lam) <= 1e-6

    def test_short_grid_rejected(self):
        grid = np.array([1.0, 2.0, 3.0])
        traj = _power_trajectory(0.5, grid)
        with pytest.raises(DomainError):
            euler_residual(traj, ZERO_FORCING, 3.0 / 16.0)


class TestParticularSolution:
    def test_zero_forcing(self):
        assert particular_solution(0.5, ZERO_FORCING, 2.0) == 0.0

    def test_power_forcing_closed_form(self):
        # f(r) = r^-2 on r >= 1, nu = 1/2, t = 2: both integrals in closed form
        fp = ForcingProfile.from_callable(
            lambda r: (r**-2.0 if r >= 1.0 else 0.0) + 0j, breakpoints=(1.0,)
        )
        nu = 0.5
        tail = 2.0 ** (-1.5) / 1.5          # int_2^inf r^(-2.5) dr
        head = 2.0 * (1.0 - 2.0**-0.5)      # int_1^2 r^(-1.5) dr
        expected = -(2.0 ** (nu - 1)) / (2 * nu) * tail - 2.0 ** (-nu - 1) / (
            2 * nu
        ) * head
        got = particular_solution(nu, fp, 2.0)
        assert abs(got - expected) < 1e-8

    def test_linearity(self):
        fp = ForcingProfile.from_callable(
            lambda r: (r**-2.0 if r >= 1.0 else 0.0) + 0j, breakpoints=(1.0,)
        )
        fp2 = ForcingProfile.from_callable(
            lambda r: 2.0 * ((r**-2.0 if r >= 1.0 else 0.0) + 0j), breakpoints=(1.0,)
        )
        assert particular_solution(0.5, fp2, 2.0) == pytest.approx(
            2.0 * particular_solution(0.5, fp, 2.0), rel=1e-12
        )

    def test_formula_trajectory_solves_the_ode(self):
        # verified as an ODE solution, not asserted equal to the master one
        fp = ForcingProfile.from_callable(_anchor_forcing)
        grid = log_grid(1.0, 100.0, steps_per_decade=400)
        traj = particular_trajectory(0.5, fp, grid)
        assert euler_residual(traj, fp, 3.0 / 16.0) <= 1e-6


class TestTailConstants:
    def test_zero_forcing(self):
        assert asymptotic_constant(0.5, ZERO_FORCING).value == 0.0

    @pytest.mark.parametrize("nu", [0.3, 0.5, 0.9])
    def test_power_forcing_closed_form(self, nu):
        fp = ForcingProfile.from_callable(
            lambda r: (r**-2.0 if r >= 1.0 else 0.0) + 0j, breakpoints=(1.0,)
        )
        got = asymptotic_constant(nu, fp, tol=1e-11)
        assert abs(got.value - (-1.0 / (2 * nu * (nu + 1)))) < 1e-10
        assert got.tail_bound <= 1e-11

    def test_exponential_forcing_incomplete_gamma(self):
        fp = ForcingProfile.from_callable(lambda r: math.exp(-r) + 0j)
        got = asymptotic_constant(0.5, fp, tol=1e-9)
        expected = -gamma(0.5) * gammaincc(0.5, 1.0)
        assert abs(got.value - expected) < 1e-9

    @pytest.mark.parametrize("nu", [0.25, 0.5, 0.75])
    def test_envelope_bound(self, nu):
        for fn, brk in [
            (lambda r: (r**-2.0 if r >= 1.0 else 0.0) + 0j, (1.0,)),
            (lambda r: math.exp(-r) + 0j, ()),
            (lambda r: 0.3 / (1.0 + r) + 0j, ()),
        ]:
            fp = ForcingProfile.from_callable(fn, breakpoints=brk)
            got = asymptotic_constant(nu, fp, tol=1e-8)
            assert abs(got.value) <= fp.decay_c / (2 * nu * nu) + 1e-12

    def test_truncation_error_with_small_cap(self):
        fp = ForcingProfile.from_callable(
            lambda r: (r**-2.0 if r >= 1.0 else 0.0) + 0j, breakpoints=(1.0,)
        )
        with pytest.raises(TruncationError):
            asymptotic_constant(0.3, fp, tol=1e-11, r_max=1e6)

    def test_amplitude_closed_form_anchor(self):
        # Beta-function evaluation gives exactly 1; cross-check the module
        # integral against direct adaptive quadrature as well.
        fp = ForcingProfile.from_callable(_anchor_forcing)
        got = asymptotic_amplitude(0.5, fp, tol=1e-10)
        assert abs(got.value - 1.0) < 1e-9
        direct = quad(lambda r: r**-0.5 * _anchor_forcing(r).real, 0, np.inf)[0]
        assert abs(direct - 1.0) < 1e-9

    def test_amplitude_requires_nu_below_one(self):
        with pytest.raises(DomainError):
            asymptotic_amplitude(1.0, ZERO_FORCING)


class TestTailChecks:
    def test_exact_power_sup_zero(self):
        grid = log_grid(1.0, 1e4, steps_per_decade=100)
        traj = _power_trajectory(0.5, grid, coef=0.7)
        rep = tail_remainder_check(traj, 0.7, 0.5)
        assert rep.sup <= 1e-12 and rep.bounded

    def test_constructed_offset_sup_one(self):
        grid = log_grid(1.0, 1e4, steps_per_decade=100)
        traj = _power_trajectory(0.5, grid, coef=0.7, offset=True)
        rep = tail_remainder_check(traj, 0.7, 0.5)
        assert rep.sup == pytest.approx(1.0, rel=1e-9)
        assert rep.bounded

    def test_pipeline_bounded_and_amplitude_matches_fit(self):
        lam = 0.04
        nu = nu_of_lambda(lam)
        grid = master_grid(1e4, steps_per_decade=400)
        traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
        prof = assemble_forcing(ModePair(0, 0), traj, lam)
        amp = asymptotic_amplitude(nu, prof, tol=None)
        rep = tail_remainder_check(traj, amp.value, nu)
        assert rep.bounded and math.isfinite(rep.sup)
        fitted = fit_tail_amplitude(traj, nu)
        assert abs(amp.value - fitted) / abs(fitted) < 1e-3

    def test_master_equals_formula_plus_homogeneous(self):
        # the bounded solution = formula solution + amplitude * t^(nu-1)
        lam, nu = 3.0 / 16.0, 0.5
        grid = master_grid(1e3, steps_per_decade=400)
        traj = solve_master(ModePair(0, 0), lam, 1.0, grid)
        prof = assemble_forcing(ModePair(0, 0), traj, lam)
        amp = asymptotic_amplitude(nu, prof, tol=None)
        split = homogeneous_split(traj, nu, prof, window=(2.0, 100.0))
        assert abs(split["c_plus"] - amp.value) < 1e-5
        assert abs(split["c_minus"]) < 1e-5
        assert split["residual"] < 1e-6


class TestForcingProfile:
    def test_claimed_envelope_is_audited(self):
        with pytest.raises(ConsistencyError):
            ForcingProfile.from_callable(lambda t: 1.0 / t + 0j, decay_c=0.5)

    def test_envelope_from_audit_grid(self):
        fp = ForcingProfile.from_callable(lambda t: 0.3 / t + 0j)
        assert fp.decay_c == pytest.approx(0.3, rel=1e-12)
        assert fp.envelope_audit() <= fp.decay_c * (1 + 1e-12)

    def test_sampled_profile_alignment(self):
        grid = np.linspace(0.0, 10.0, 101)
        fp = ForcingProfile.from_samples(grid, np.ones(101, complex))
        np.testing.assert_array_equal(fp.values_on(grid), np.ones(101, complex))
        with pytest.raises(ConsistencyError):
            fp.values_on(np.linspace(0.0, 10.0, 50))


class TestSampleQuadrature:
    def test_power_weighted_integral_exact_on_powers(self):
        grid = np.linspace(0.0, 2.0, 401)
        vals = grid**2 + 0j
        got = power_weighted_integral(grid, vals, -0.5)
        exact = 2.0 ** 2.5 / 2.5
        assert abs(got - exact) < 1e-10  # interpolation exact; roundoff only

    def test_master_residual_flags_foreign_data(self):
        grid = log_grid(1.0, 100.0, steps_per_decade=200)
        traj = _power_trajectory(0.5, grid)
        assert master_relation_residual(traj, 3.0 / 16.0) > 1e-3
