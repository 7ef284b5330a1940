import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylab.hilbert import ContractionSemigroup, DomainError
from cylab.noise import NoisePathBundle, alpha_stable, brownian, sample_bundle, uniform_grid
from cylab.paths import GridPath, SimpleHsProcess, stochastic_integral
from cylab.scenarios import (SCENARIOS, ConstantDiffusion, DiagonalSineDiffusion, LinearDrift,
                             SineDrift, ZeroDrift)
from cylab.solver import (NoConvergence, NonTermination, SdeProblem, convergence_study,
                          euler_peano_route, euler_peano_solve, lambda_operator, picard_route,
                          picard_solve, residual_norms, uniqueness_check)
from oracles import brute_lambda

GRID = uniform_grid(1.0, 32)


def scalar_decay(x0=1.0, lam=1.0, T=1.0):
    return SdeProblem(ContractionSemigroup([lam]), ZeroDrift(), 0.0,
                      ConstantDiffusion(np.zeros((1, 1))), 0.0, [x0], brownian(1), T)


def contractive(d=4):
    return SCENARIOS["contractive_brownian"].problem(
        SCENARIOS["contractive_brownian"].defaults.with_overrides(d_H=d, d_U=d))


# ------------------------------------------------------------------ problem


@pytest.mark.parametrize("name", SCENARIOS)
def test_declared_lipschitz_constants_hold(name):
    pb = SCENARIOS[name].problem()
    rf, rg = pb.lipschitz_ratios(n_pairs=500)
    assert rf <= pb.c_F * (1 + 1e-9) + 1e-12
    assert rg <= pb.c_G * (1 + 1e-9) + 1e-12


def test_problem_validation():
    with pytest.raises(DomainError):
        SdeProblem(ContractionSemigroup([1.0]), ZeroDrift(), -1.0, ConstantDiffusion([[0.0]]), 0.0,
                   [1.0], brownian(1))
    with pytest.raises(DomainError):
        SdeProblem(ContractionSemigroup([1.0, 2.0]), ZeroDrift(), 0.0, ConstantDiffusion([[0.0]]), 0.0,
                   [1.0], brownian(1))


def test_plain_callables_are_mapped_row_wise():
    pb = SdeProblem(ContractionSemigroup([1.0, 1.0]), lambda x: -x, 1.0,
                    lambda x: np.diag(x), 1.0, [1.0, 2.0], brownian(2))
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(pb.F(X), -X)
    assert pb.G(X).shape == (2, 2, 2)


# ------------------------------------------------------------------ Lambda


def test_lambda_free_evolution(rng):
    pb = SdeProblem(ContractionSemigroup([1.0, 3.0]), ZeroDrift(), 0.0,
                    ConstantDiffusion(np.zeros((2, 2))), 0.0, [1.0, -2.0], brownian(2))
    X = GridPath(GRID, rng.standard_normal((33, 2)))
    out = lambda_operator(pb, X, sample_bundle(pb.noise, GRID, 0))
    np.testing.assert_allclose(out.values, np.exp(-np.outer(GRID, [1.0, 3.0])) * [1.0, -2.0], atol=1e-15)


def test_lambda_scalar_closed_form(rng):
    pb = scalar_decay()
    X = GridPath(GRID, rng.standard_normal((33, 1)))
    np.testing.assert_allclose(lambda_operator(pb, X, sample_bundle(pb.noise, GRID, 0)).values[:, 0],
                               np.exp(-GRID), rtol=1e-15)


def test_lambda_identity_semigroup_matches_integral(rng):
    C = rng.standard_normal((3, 2))
    x0 = np.array([1.0, 0.5, -1.0])
    pb = SdeProblem(ContractionSemigroup(np.zeros(3)), ZeroDrift(), 0.0, ConstantDiffusion(C), 0.0,
                    x0, alpha_stable(2, 1.5))
    b = sample_bundle(pb.noise, GRID, 4)
    out = lambda_operator(pb, GridPath.zeros(GRID, 3), b)
    ref = x0 + stochastic_integral(SimpleHsProcess.constant(GRID, C), b).values
    np.testing.assert_allclose(out.values, ref, atol=1e-12)


@pytest.mark.parametrize("name", ["heat_alpha_stable", "contractive_brownian"])
def test_lambda_matches_brute_force(name, rng):
    sc = SCENARIOS[name]
    cfg = sc.defaults.with_overrides(d_H=3, d_U=3, n_steps=12)
    pb = sc.problem(cfg)
    grid = uniform_grid(1.0, 12)
    b = sample_bundle(pb.noise, grid, 2)
    X = GridPath(grid, rng.standard_normal((13, 3)))
    ref = brute_lambda(pb.semigroup.spectrum, pb.x0, grid, lambda x: pb.F(x)[0], lambda x: pb.G(x)[0],
                       X.values, b.increments)
    for method in ("direct", "recursive"):
        np.testing.assert_allclose(lambda_operator(pb, X, b, method=method).values, ref, atol=1e-12)


def test_lambda_grid_mismatch():
    pb = scalar_decay()
    with pytest.raises(DomainError):
        lambda_operator(pb, GridPath.zeros(uniform_grid(1.0, 4), 1), sample_bundle(pb.noise, GRID, 0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 32))
def test_lambda_locality(seed, tau):
    gen = np.random.default_rng(seed)
    pb = SCENARIOS["heat_alpha_stable"].problem(SCENARIOS["heat_alpha_stable"].defaults.with_overrides(d_H=4, d_U=4))
    b = sample_bundle(pb.noise, GRID, seed)
    X = gen.standard_normal((33, 4))
    Y = X.copy()
    Y[tau:] = gen.standard_normal((33 - tau, 4)) * 100  # agree strictly before tau
    a = lambda_operator(pb, GridPath(GRID, X), b).values
    c = lambda_operator(pb, GridPath(GRID, Y), b).values
    np.testing.assert_array_equal(a[: tau + 1], c[: tau + 1])


@pytest.mark.parametrize("j", [0, 1, 7, 20, 32])
def test_lambda_has_no_look_ahead(j, rng):
    pb = SCENARIOS["heat_alpha_stable"].problem(SCENARIOS["heat_alpha_stable"].defaults.with_overrides(d_H=4, d_U=4))
    b = sample_bundle(pb.noise, GRID, 3)
    inc = np.array(b.increments)
    inc[j:] = 0.0
    cut = NoisePathBundle(GRID, inc, b.seed)
    X = GridPath(GRID, rng.standard_normal((33, 4)))
    assert np.array_equal(lambda_operator(pb, X, b).values[j], lambda_operator(pb, X, cut).values[j])


# ----------------------------------------------------------------- Euler-Peano


def test_euler_peano_first_update_closed_form():
    grid = uniform_grid(1.0, 1000)
    pb = scalar_decay()
    st_ = euler_peano_solve(pb, sample_bundle(pb.noise, grid, 0), 0.1)
    tau1 = grid[st_.update_times[0]]
    assert tau1 >= -math.log(0.9)
    assert tau1 - 1e-3 < -math.log(0.9)
    assert st_.path.values[st_.update_times[0], 0] == pytest.approx(math.exp(-tau1), rel=1e-15)
    assert st_.residual_path.values[st_.update_times[0], 0] == 0.0


def test_euler_peano_no_updates_when_threshold_large():
    pb = scalar_decay(T=0.01)
    grid = uniform_grid(0.01, 16)
    st_ = euler_peano_solve(pb, sample_bundle(pb.noise, grid, 0), 0.5)
    assert st_.update_times == []
    assert np.all(st_.path.values == 1.0)


def test_euler_peano_free_evolution_within_eps():
    pb = SdeProblem(ContractionSemigroup([0.5, 2.0, 4.0]), ZeroDrift(), 0.0,
                    ConstantDiffusion(np.zeros((3, 3))), 0.0, [1.0, 1.0, -1.0], brownian(3))
    for eps in (0.3, 0.05, 0.01):
        st_ = euler_peano_solve(pb, sample_bundle(pb.noise, GRID, 0), eps)
        exact = pb.semigroup.factors(GRID) * pb.x0
        assert np.max(np.linalg.norm(st_.path.values - exact, axis=1)) < eps


def test_euler_peano_ode_oracle():
    sc = SCENARIOS["pure_drift"]
    gaps = []
    for n, eps in [(64, 0.1), (256, 0.02), (1024, 0.005)]:
        cfg = sc.defaults.with_overrides(n_steps=n, d_H=4, d_U=4)
        pb = sc.problem(cfg)
        grid = uniform_grid(1.0, n)
        st_ = euler_peano_solve(pb, sample_bundle(pb.noise, grid, 0), eps)
        exact = np.exp(-np.outer(grid, pb.semigroup.spectrum + 0.5)) * pb.x0
        gaps.append(np.max(np.linalg.norm(st_.path.values - exact, axis=1)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("eps", [0.5, 0.1, 0.02])
def test_sweep_matches_staged(seed, eps):
    pb = SCENARIOS["heat_alpha_stable"].problem(SCENARIOS["heat_alpha_stable"].defaults.with_overrides(d_H=6, d_U=6))
    b = sample_bundle(pb.noise, GRID, seed)
    a = euler_peano_solve(pb, b, eps)
    c = euler_peano_solve(pb, b, eps, method="staged")
    assert a.update_times == c.update_times
    np.testing.assert_allclose(a.path.values, c.path.values, atol=1e-10)
    np.testing.assert_allclose(a.residual_path.values, c.residual_path.values, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_residual_guarantee_and_increasing_updates(seed):
    pb = SCENARIOS["heat_alpha_stable"].problem()
    b = sample_bundle(pb.noise, GRID, seed)
    for eps in (0.5, 0.1, 0.01):
        st_ = euler_peano_solve(pb, b, eps)
        assert st_.max_residual < eps
        assert all(x < y for x, y in zip(st_.update_times, st_.update_times[1:]))
        np.testing.assert_allclose(residual_norms(pb, st_.path, b), st_.residual_path.values[:, 0], atol=1e-12)
        assert np.all(st_.residual_path.values[st_.update_times] == 0.0)


def test_euler_peano_errors():
    pb = contractive()
    b = sample_bundle(pb.noise, GRID, 0)
    with pytest.raises(DomainError):
        euler_peano_solve(pb, b, 0.0)
    with pytest.raises(NonTermination) as info:
        euler_peano_solve(pb, b, 1e-6, max_stages=3)
    assert len(info.value.update_times) == 3
    with pytest.raises(NonTermination):
        euler_peano_solve(pb, b, 1e-6, method="staged", max_stages=3)


def test_dense_update_flag():
    pb = contractive()
    st_ = euler_peano_solve(pb, sample_bundle(pb.noise, GRID, 0), 1e-8)
    assert st_.dense_updates and st_.report()["dense_updates"]


# ------------------------------------------------------------------ Picard


def test_picard_constant_coefficients_one_iteration():
    pb = SdeProblem(ContractionSemigroup([1.0, 2.0]), ZeroDrift(), 0.0,
                    ConstantDiffusion(np.eye(2)), 0.0, [1.0, 0.0], brownian(2))
    res = picard_solve(pb, sample_bundle(pb.noise, GRID, 0))
    assert res.iterations == 1


def test_picard_fixed_point_and_geometric_decay():
    pb = contractive()
    b = sample_bundle(pb.noise, GRID, 5)
    res = picard_solve(pb, b, tol=1e-12)
    assert np.max(residual_norms(pb, res.path, b)) < 1e-12
    ratios = res.residual_ratios()[:6]
    assert np.all(ratios < 0.9)


def test_picard_no_convergence():
    pb = contractive()
    with pytest.raises(NoConvergence) as info:
        picard_solve(pb, sample_bundle(pb.noise, GRID, 0), max_iter=2, tol=1e-14)
    assert len(info.value.history) == 2
    with pytest.raises(DomainError):
        picard_solve(pb, sample_bundle(pb.noise, GRID, 0), tol=0.0)


# -------------------------------------------------------------- uniqueness


def test_uniqueness_examples():
    pb = contractive()
    b = sample_bundle(pb.noise, GRID, 1)
    same = uniqueness_check(pb, b, picard_route(1.0), picard_route(1.0), tol=1e-9)
    assert same.ok and same.gap == 0.0
    two = uniqueness_check(pb, b, picard_route(1.0), picard_route(2.0), tol=1e-6)
    assert two.ok
    tol = 1e-4
    ep = uniqueness_check(pb, b, euler_peano_route(tol / 10), picard_route(1.0, tol=1e-12), tol=2 * tol)
    assert ep.ok, ep.report()


def test_uniqueness_failure_reports_gap_path():
    pb = contractive()
    b = sample_bundle(pb.noise, GRID, 1)
    res = uniqueness_check(pb, b, euler_peano_route(0.3), picard_route(1.0), tol=1e-9)
    assert not res.ok
    assert res.gap == pytest.approx(res.gap_path.values.max())


# ------------------------------------------------------------ convergence


def test_convergence_study_monotone():
    pb = contractive()
    rep = convergence_study(pb, (0.2, 0.1), 40, GRID)
    assert rep["monotone"]
    r0, r1 = rep["rows"]
    assert r1["ducp"] <= r0["ducp"] + 3 * math.hypot(r0["std_error"], r1["std_error"])


def test_convergence_study_eps_below_tol():
    pb = contractive()
    tol = 1e-6
    rep = convergence_study(pb, (1e-9,), 20, GRID, picard_tol=tol)
    row = rep["rows"][0]
    assert row["ducp"] <= 1e-9 + tol + 3 * row["std_error"]


def test_convergence_study_deterministic_problem():
    sc = SCENARIOS["pure_drift"]
    pb = sc.problem(sc.defaults.with_overrides(d_H=4, d_U=4))
    grid = uniform_grid(1.0, 256)
    exact = np.exp(-np.outer(grid, pb.semigroup.spectrum + 0.5)) * pb.x0
    eps = 0.05
    for seed in range(3):
        st_ = euler_peano_solve(pb, sample_bundle(pb.noise, grid, seed), eps)
        gap = min(np.max(np.linalg.norm(st_.path.values - exact, axis=1)), 1.0)
        assert gap <= eps + 3.0 / 256


def test_convergence_study_requires_decreasing():
    with pytest.raises(DomainError):
        convergence_study(contractive(), (0.1, 0.2), 2, GRID)


def test_refinement_with_coupled_noise_shrinks_gap():
    from cylab.noise import coarsen

    pb = contractive()
    fine_n = 512
    gaps = {n: [] for n in (32, 64, 128, 256)}
    for seed in range(20):
        fine = sample_bundle(pb.noise, uniform_grid(1.0, fine_n), seed)
        ref = picard_solve(pb, fine).path.values[:: fine_n // 32]
        for n in gaps:
            X = picard_solve(pb, coarsen(fine, fine_n // n)).path.values[:: n // 32]
            gaps[n].append(np.max(np.linalg.norm(X - ref, axis=1)))
    means = [np.mean(gaps[n]) for n in sorted(gaps)]
    assert all(a > b for a, b in zip(means, means[1:]))
    # observed order of the refinement error, for the record
    order = np.polyfit(np.log([1 / 32, 1 / 64, 1 / 128]), np.log(means[:3]), 1)[0]
    assert 0.2 < order < 1.5
