from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracstab.lyapunov_perron import (
    ContractionPrecheckError,
    GridFunction,
    LyapunovPerronOperator,
    QuadConfig,
    Tail,
    TailError,
    _stable_row_constant,
    apply_operator,
    choose_epsilon,
    contraction_ratio,
    estimate_K,
    kernel_integral_bound,
    kernel_integrals,
    limit_relation_check,
    verify_fixed_point,
    weighted_norm,
)
from fracstab.mlf import mittag_leffler
from fracstab.solver import solve_linear_exact, solve_pc
from fracstab.spectral import FracSystem, transform_system


def _e_half(z):
    # E_{1/2}(z) = exp(z^2) erfc(-z)
    return mp.exp(z * z) * mp.erfc(-z)


def _e_half_half(z):
    # E_{1/2,1/2}(z) = 1/sqrt(pi) + z E_{1/2}(z)
    return 1 / mp.sqrt(mp.pi) + z * _e_half(z)


def _square(x):
    return np.asarray(x, dtype=complex) ** 2


def _second_square(x):
    x = np.asarray(x, dtype=complex)
    out = np.zeros_like(x)
    out[..., 1] = x[..., 1] ** 2
    return out


def _scalar_tsys(mu=1.0, f=_square, alpha=0.5, lip_radius=1.0):
    return transform_system(FracSystem(alpha, [[mu]], f, lip_radius=lip_radius), gamma=0.1)


def _witness_tsys():
    return transform_system(FracSystem(0.5, np.diag([1.0, 0.0]), _second_square), gamma=0.1)


# ---------------------------------------------------------------------------
# weighted norm


def test_weighted_norm_examples():
    t = np.linspace(0.0, 10.0, 101)
    assert weighted_norm(GridFunction(t, np.zeros((101, 2))), 0.5) == 0.0
    w = 0.7
    v = np.stack([np.exp(w * t), np.zeros_like(t)], axis=1)
    assert weighted_norm(GridFunction(t, v), w) == pytest.approx(1.0, rel=1e-14)
    const = np.tile([1.0, 0.0], (101, 1))
    assert weighted_norm(GridFunction(t, const), 1 / 3) == 1.0


def test_weighted_norm_rejects_nonpositive_weight():
    t = np.linspace(0.0, 1.0, 3)
    with pytest.raises(ValueError):
        weighted_norm(GridFunction(t, np.ones(3)), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=30),
       st.floats(1e-3, 5.0))
def test_weighted_norm_below_sup_norm(vals, w):
    t = np.arange(len(vals), dtype=float)
    xi = GridFunction(t, np.asarray(vals))
    wn, sup = weighted_norm(xi, w), xi.sup_norm()
    assert wn <= sup
    if np.abs(xi.values[0, 0]) == sup:
        assert wn == sup
    else:
        assert wn < sup


def test_grid_function_validation():
    with pytest.raises(ValueError):
        GridFunction([0.0, 1.0], np.ones(3))
    with pytest.raises(ValueError):
        GridFunction([0.5, 1.0], np.ones(2))
    with pytest.raises(ValueError):
        GridFunction([0.0, 1.0], [1.0, np.nan])


# ---------------------------------------------------------------------------
# operator


def test_operator_vanishes_for_zero_nonlinearity_or_zero_input():
    t = np.linspace(0.0, 20.0, 401)
    xi = GridFunction(t, 0.3 * np.exp(1j * t)[:, None])
    assert np.all(apply_operator(_scalar_tsys(f=None), xi).values == 0)
    zero = GridFunction(t, np.zeros((t.size, 1)))
    assert np.all(apply_operator(_scalar_tsys(), zero).values == 0)


def test_operator_stable_row_on_constant_function():
    # second row is c^2 * int_0^t (t-s)^(alpha-1) ds / Gamma(alpha) = c^2 t^alpha / Gamma(alpha+1)
    tsys = _witness_tsys()
    assert tsys.k == 1 and list(tsys.mu) == [1.0, 0.0]
    t = np.linspace(0.0, 30.0, 601)
    c = 0.2
    Txi = apply_operator(tsys, GridFunction(t, np.tile([0.0, c], (t.size, 1))))
    exact = c ** 2 * t ** 0.5 / math.gamma(1.5)
    assert np.max(np.abs(Txi.values[:, 1] - exact)) <= 1e-6 * np.max(exact)
    assert np.all(Txi.values[:, 0] == 0)


def test_operator_unstable_row_constant_input_oracle():
    # scalar mu=1, alpha=1/2, h(x)=x^2, xi = c: lam=1, prefactor 1, so
    # (T xi)(t) = c^2 [int_0^t K(t-s) ds - E(sqrt t) int_0^inf e^-s ds]
    #           = c^2 [E_{1/2,3/2}(sqrt t) sqrt t - E_{1/2}(sqrt t)] = -c^2
    t = np.linspace(0.0, 40.0, 801)
    c = 0.3
    Txi = apply_operator(_scalar_tsys(), GridFunction(t, np.full(t.size, c)))
    assert np.max(np.abs(Txi.values[:, 0] + c ** 2)) <= 1e-10


def test_operator_unstable_row_against_quadrature_oracle():
    mp.mp.dps = 30
    t = np.linspace(0.0, 30.0, 6001)
    xi = 0.5 * np.exp(-t) * np.cos(2 * t)
    Txi = apply_operator(_scalar_tsys(), GridFunction(t, xi, Tail.ZERO))

    def g(s):
        return (0.5 * mp.exp(-s) * mp.cos(2 * s)) ** 2

    L = mp.quad(lambda s: mp.exp(-s) * g(s), [0, 5, 30])
    for tj in [1.0, 3.0]:
        conv = mp.quad(lambda s: (tj - s) ** -0.5 * _e_half_half(mp.sqrt(tj - s)) * g(s),
                       [0, tj / 2, tj])
        exact = float(conv - _e_half(mp.sqrt(tj)) * L)
        j = int(round(tj / t[1]))
        assert abs(Txi.values[j, 0] - exact) <= 2e-5 * max(1.0, abs(exact))


@settings(max_examples=15, deadline=None)
@given(st.floats(-3.0, 3.0).filter(lambda c: abs(c) > 1e-3))
def test_operator_linear_in_nonlinearity(c):
    t = np.linspace(0.0, 15.0, 301)
    xi = GridFunction(t, (0.1 + 0.05j) * np.sin(t) + 0.02)
    base = apply_operator(_scalar_tsys(), xi).values
    scaled = apply_operator(_scalar_tsys(f=lambda x: c * _square(x)), xi).values
    assert np.allclose(scaled, c * base, rtol=1e-12, atol=1e-15)


def test_operator_rejects_other_grid():
    op = LyapunovPerronOperator(_scalar_tsys(), np.linspace(0.0, 1.0, 11))
    with pytest.raises(ValueError):
        op.apply(GridFunction(np.linspace(0.0, 2.0, 11), np.ones(11)))


def test_tail_truncation_reports_needed_cutoff():
    t = np.linspace(0.0, 10.0, 201)
    xi = GridFunction(t, np.full(t.size, 0.5), Tail.HOLD_LAST)
    with pytest.raises(TailError) as err:
        apply_operator(_scalar_tsys(), xi, QuadConfig(tau_max=12.0, tail_tol=1e-12))
    # max|g| = 0.25, Re(lam) = 1
    assert err.value.needed == pytest.approx(math.log(0.25 / 1e-12))
    assert "need tau_max" in str(err.value)
    with pytest.raises(ValueError):
        apply_operator(_scalar_tsys(), xi, QuadConfig(tau_max=5.0))


def test_tail_truncation_close_to_exact_tail():
    t = np.linspace(0.0, 10.0, 201)
    xi = GridFunction(t, np.full(t.size, 0.5), Tail.HOLD_LAST)
    exact = apply_operator(_scalar_tsys(), xi)
    cut = apply_operator(_scalar_tsys(), xi, QuadConfig(tau_max=30.0, tail_tol=1e-12))
    bound = cut.meta["tail_bound"]
    assert 0 < bound <= 1e-12
    assert exact.meta["tail_bound"] == 0.0
    op = LyapunovPerronOperator(_scalar_tsys(), t, QuadConfig(tau_max=30.0))
    L_cut = op.improper_integrals(xi)[0]
    L_exact = LyapunovPerronOperator(_scalar_tsys(), t).improper_integrals(xi)[0]
    assert 0 < abs(L_exact - L_cut) <= bound + 4 * np.finfo(float).eps * abs(L_exact)
    # pointwise the missing tail is g e^-(tau_max - t) / lam, weighted by 1/alpha = 2
    R0 = np.abs(mittag_leffler(t ** 0.5, 0.5) - 2 * np.exp(t))
    allowed = 2 * 0.25 * np.exp(-(30.0 - t)) + R0 * bound
    assert np.all(np.abs(cut.values - exact.values)[:, 0] <= 1.01 * allowed + 1e-15)


# ---------------------------------------------------------------------------
# kernel integrals


def test_kernel_bound_alpha_one_is_one():
    assert kernel_integral_bound(1.0, 1.0) == pytest.approx(1.0, abs=1e-14)
    I1, I2 = kernel_integrals(1.0, 1.0, [0.0, 1.0, 7.0, np.inf])
    assert np.allclose(I1, 1.0) and np.all(I2 == 0)


def test_kernel_integrals_half_order_against_quadrature():
    mp.mp.dps = 30
    times = [0.5, 2.0, 5.0]
    I1, I2 = kernel_integrals(0.5, 1.0, times)
    for t, a, b in zip(times, I1, I2):
        Et = _e_half(mp.sqrt(t))
        i1 = Et * mp.exp(-t)
        i2 = mp.quad(lambda s: abs((t - s) ** -0.5 * _e_half_half(mp.sqrt(t - s))
                                   - Et * mp.exp(-s)), [0, t / 2, t])
        assert a == pytest.approx(float(i1), rel=1e-10)
        assert b == pytest.approx(float(i2), rel=1e-9)


def test_kernel_integral_limits():
    I1, I2 = kernel_integrals(0.5, 1.0, [np.inf])
    assert I1[0] == pytest.approx(2.0)
    assert I2[0] == pytest.approx(1.0, rel=1e-6)


def test_kernel_bound_half_order_stable_under_refinement():
    coarse = kernel_integral_bound(0.5, 1.0)
    fine = kernel_integral_bound(0.5, 1.0, np.concatenate([np.linspace(0, 40, 2001), [np.inf]]))
    assert math.isfinite(coarse)
    assert abs(coarse - fine) <= 0.02 * fine
    rot = kernel_integral_bound(0.5, 1 + 0.3j)
    rot_fine = kernel_integral_bound(0.5, 1 + 0.3j,
                                     np.concatenate([np.linspace(0, 40, 2001), [np.inf]]))
    assert abs(rot - rot_fine) <= 0.02 * rot_fine


def test_kernel_bound_rejects_stable_mu():
    with pytest.raises(ValueError):
        kernel_integral_bound(0.5, -1.0)
    with pytest.raises(ValueError):
        kernel_integrals(0.5, 1.0, [-1.0])


@pytest.mark.parametrize("mu", [-1.0, 0.5j, 0.0, -0.3 + 2j])
def test_stable_row_constant_against_quadrature(mu):
    mp.mp.dps = 25
    w = 1 / 3

    def f(s):
        z = mu * mp.sqrt(s)
        return s ** -0.5 * abs(_e_half_half(z)) * mp.exp(-w * s)

    exact = float(mp.quad(f, [0, 1, 10, 40, mp.inf]))
    assert _stable_row_constant(0.5, mu, w) == pytest.approx(exact, rel=1e-8)


def test_estimate_K_is_max_over_rows():
    w = 1 / 3
    k_unstable = estimate_K(0.5, [1.0], w)
    assert k_unstable == pytest.approx(estimate_K(0.5, [1.0, -5.0], w))
    with_zero = estimate_K(0.5, [1.0, 0.0], w)
    assert with_zero == pytest.approx(max(k_unstable, w ** -0.5))
    with pytest.raises(ValueError):
        estimate_K(0.5, [-1.0])
    with pytest.raises(ValueError):
        estimate_K(0.5, [1.0], 1.5)


# ---------------------------------------------------------------------------
# limit relation


def test_limit_relation_zero_function():
    t = np.linspace(0.0, 20.0, 201)
    out = limit_relation_check(0.5, 1.0, GridFunction(t, np.zeros(t.size), Tail.ZERO), [1, 5, 10])
    assert out == [0.0, 0.0, 0.0]


def test_limit_relation_alpha_one_closed_form():
    # g = 1 on [0, 10]: the normalised convolution is 1 - e^-t, its limit 1 - e^-10
    t = np.linspace(0.0, 10.0, 1001)
    g = GridFunction(t, np.ones(t.size), Tail.ZERO)
    times = [1.0, 2.0, 5.0, 9.0, 12.0]
    out = limit_relation_check(1.0, 1.0, g, times)
    exact = [max(math.exp(-s) - math.exp(-10.0), 0.0) for s in times]
    assert np.allclose(out, exact, rtol=1e-10, atol=1e-15)


def test_limit_relation_half_order_against_quadrature():
    mp.mp.dps = 30
    t = np.linspace(0.0, 100.0, 16001)
    out = limit_relation_check(0.5, 1.0, GridFunction(t, np.exp(-t), Tail.ZERO), [2, 5, 10, 20])
    for s, v in zip([2, 5, 10], out):
        L = mp.quad(lambda u: (s - u) ** -0.5 * _e_half_half(mp.sqrt(s - u)) * mp.exp(-u),
                    [0, s / 2, s - 1, s]) / _e_half(mp.sqrt(s))
        assert v == pytest.approx(float(abs(L - mp.mpf(1) / 2)), rel=1e-3)
    assert out[0] > out[1] > out[2] > out[3]


def test_limit_relation_rejects_bad_input():
    t = np.linspace(0.0, 5.0, 11)
    g = GridFunction(t, np.ones(t.size), Tail.ZERO)
    with pytest.raises(ValueError):
        limit_relation_check(0.5, -1.0, g, [1.0])
    with pytest.raises(ValueError):
        limit_relation_check(0.5, 1.0, g, [0.0])
    with pytest.raises(ValueError):
        limit_relation_check(0.5, 1.0, GridFunction(t, np.ones((t.size, 2))), [1.0])


# ---------------------------------------------------------------------------
# contraction


def test_contraction_zero_nonlinearity():
    est = contraction_ratio(_scalar_tsys(f=None), 0.5, trials=20, ell_samples=3000)
    assert est.ratio_observed == 0.0
    assert est.ell_h_used == 0.0


def test_contraction_scalar_square_within_bound():
    tsys = _scalar_tsys()
    eps, K, ell = choose_epsilon(tsys)
    assert K * ell <= 2 / 3
    est = contraction_ratio(tsys, eps, trials=60, seed=1, ell_samples=20_000)
    assert est.K_hat == pytest.approx(K)
    assert 0 < est.ratio_observed <= 2 / 3
    assert est.ratio_observed <= est.bound * 1.1
    assert len(est.trials) == 60


def test_contraction_witness_weighted_vs_sup():
    tsys = _witness_tsys()
    eps, _, _ = choose_epsilon(tsys)
    est = contraction_ratio(tsys, eps, trials=40, seed=2, ell_samples=20_000, t_end=60.0)
    assert est.ratio_observed <= 2 / 3 + 0.05
    # constant pairs (0, a) and (0, b): the second row of the difference grows like t^alpha
    a, b = 0.8 * eps, 0.3 * eps
    t = np.linspace(0.0, 60.0, 1025)
    pair = (np.tile([0.0, a], (t.size, 1)), np.tile([0.0, b], (t.size, 1)))
    one = contraction_ratio(tsys, eps, pairs=[pair], ell_samples=2000, t_end=60.0, n_steps=1024)
    grow = (a + b) * 60.0 ** 0.5 / math.gamma(1.5)
    assert one.sup_ratio_observed == pytest.approx(grow, rel=1e-6)
    assert one.ratio_observed <= 2 / 3 + 0.05


def test_contraction_is_deterministic():
    tsys = _scalar_tsys()
    a = contraction_ratio(tsys, 0.05, trials=10, seed=7, ell_samples=2000)
    b = contraction_ratio(tsys, 0.05, trials=10, seed=7, ell_samples=2000)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[1] == "trial,ratio,norm_xi,norm_xihat"


def test_contraction_precheck_names_inequality():
    with pytest.raises(ContractionPrecheckError, match=r"K\(alpha,A\)\*l_h\(eps\) <= 2/3"):
        contraction_ratio(_scalar_tsys(), 1.0, trials=2, ell_samples=2000)
    with pytest.raises(ValueError):
        contraction_ratio(_scalar_tsys(), 2.0, trials=2)
    with pytest.raises(ValueError):
        contraction_ratio(_scalar_tsys(f=None, mu=-1.0), 0.1, trials=2)


# ---------------------------------------------------------------------------
# fixed point


def test_fixed_point_zero_trajectory():
    tsys = _scalar_tsys()
    traj = solve_pc(tsys, [0.0], 10.0, 200)
    assert verify_fixed_point(tsys, traj) == 0.0


def test_fixed_point_stable_linear_residual_is_free_solution():
    tsys = _scalar_tsys(mu=-1.0, f=None)
    t = np.linspace(0.0, 20.0, 401)
    traj = solve_linear_exact(0.5, tsys.mu, [0.4], t)
    free = GridFunction(t, traj.states)
    assert verify_fixed_point(tsys, traj) == pytest.approx(weighted_norm(free, 1 / 3), rel=1e-12)


def test_fixed_point_stable_nonlinear_residual_is_free_solution():
    tsys = _scalar_tsys(mu=-1.0, f=lambda x: -np.asarray(x) ** 3)
    traj = solve_pc(tsys, [0.5], 20.0, 2000)
    free = solve_linear_exact(0.5, tsys.mu, [0.5], traj.t)
    res = verify_fixed_point(tsys, traj)
    assert res == pytest.approx(weighted_norm(GridFunction(traj.t, free.states), 1 / 3), rel=1e-3)


def test_fixed_point_rejects_blowup():
    tsys = _scalar_tsys()
    traj = solve_pc(tsys, [0.5], 20.0, 400, blowup_threshold=1e4)
    assert traj.blowup is not None
    with pytest.raises(ValueError, match="bounded"):
        verify_fixed_point(tsys, traj)
