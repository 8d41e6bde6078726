from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracstab.harness.registry import build_nonlinearity
from fracstab.spectral import (
    FracSystem,
    SectorTag,
    SpectralError,
    classify_eigenvalue,
    cluster_eigenvalues,
    instability_criterion,
    jordan_structure,
    lipschitz_estimate,
    transform_system,
    weight_factor,
)


def _rot(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


def test_system_validation():
    with pytest.raises(ValueError):
        FracSystem(1.0, [[1.0]])
    with pytest.raises(ValueError):
        FracSystem(0.5, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        FracSystem(0.5, [[1.0]], f=lambda x: x + 1e-10)
    with pytest.raises(ValueError):
        FracSystem(0.5, [[1.0]], lip_radius=0.0)
    sys = FracSystem(0.5, [[2.0]])
    assert sys.rhs(np.array([3.0])) == pytest.approx([6.0])


@pytest.mark.parametrize("alpha,lam,tag", [
    (0.6, 1.0, SectorTag.UNSTABLE),
    (0.5, -1.0, SectorTag.STABLE),
    (0.5, cmath.exp(1j * math.pi / 4), SectorTag.BOUNDARY),
    (0.5, 0.5j, SectorTag.STABLE),
    (0.5, 0.0, SectorTag.ZERO),
    (0.9, 1j, SectorTag.STABLE),
])
def test_classification_examples(alpha, lam, tag):
    assert classify_eigenvalue(alpha, lam).tag is tag


def test_negative_real_axis_argument_is_pi():
    c = classify_eigenvalue(0.5, complex(-2.0, -0.0))
    assert c.phi == math.pi and c.r == 2.0


@settings(max_examples=300, deadline=None)
@given(alpha=st.floats(0.01, 1.0), r=st.floats(0.0, 1e3), th=st.floats(-math.pi, math.pi))
def test_classification_trichotomy_and_symmetry(alpha, r, th):
    lam = r * cmath.exp(1j * th)
    c = classify_eigenvalue(alpha, lam)
    assert c.tag is classify_eigenvalue(alpha, lam.conjugate()).tag
    assert (c.tag is SectorTag.ZERO) == (c.r == 0)
    assert -math.pi < c.phi <= math.pi
    edge = alpha * math.pi / 2
    if c.r > 0 and abs(abs(c.phi) - edge) > 1e-12:
        assert (c.tag is SectorTag.UNSTABLE) == (abs(c.phi) < edge)


def test_instability_criterion_examples():
    assert instability_criterion(FracSystem(0.5, np.diag([1.0, -1.0]))) == (True, [1.0])
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert instability_criterion(FracSystem(0.5, rot)) == (False, [])
    # +-i sit at |arg| = pi/2 > 0.45 pi, outside the sector even for alpha = 0.9
    assert instability_criterion(FracSystem(0.9, rot)) == (False, [])
    holds, wit = instability_criterion(FracSystem(0.9, _rot(math.pi / 5)))
    assert holds and len(wit) == 2
    assert sorted(w.imag for w in wit) == pytest.approx([-math.sin(math.pi / 5), math.sin(math.pi / 5)])


def test_clusters_merge_repeated_eigenvalues():
    cl = cluster_eigenvalues([[0.5, 1.0], [0.0, 0.5]])
    assert cl == [(0.5, 2)]
    assert cluster_eigenvalues(np.zeros((2, 2))) == [(0j, 2)]


def test_weight_factor_examples():
    assert weight_factor(0.5, [1.0]) == pytest.approx(1 / 3, rel=1e-15)
    assert weight_factor(0.5, [1.0, 4.0]) == pytest.approx(1 / 3, rel=1e-15)
    w = weight_factor(0.8, [cmath.exp(1j * math.pi / 8)])
    assert w == pytest.approx(math.cos(math.pi / 6.4) / 3, rel=1e-14)
    assert 0 < w < 1 / 3
    with pytest.raises(ValueError):
        weight_factor(0.5, [])
    with pytest.raises(ValueError):
        weight_factor(0.5, [-1.0])


@settings(max_examples=100, deadline=None)
@given(alpha=st.floats(0.2, 0.95), data=st.data())
def test_weight_factor_monotone(alpha, data):
    def draw():
        r = data.draw(st.floats(0.1, 5.0))
        th = data.draw(st.floats(-0.95, 0.95)) * alpha * math.pi / 2
        return r * cmath.exp(1j * th)

    mu = [draw() for _ in range(data.draw(st.integers(1, 4)))]
    assert weight_factor(alpha, mu + [draw()]) <= weight_factor(alpha, mu)


# ------------------------------------------------------------- transforms


def _linear_residual(tsys, A):
    TP, TPi = tsys.TP, tsys.TP_inv
    return np.max(np.abs(TPi @ A @ TP - tsys.linear_part))


def test_transform_diagonal():
    A = np.diag([1.0, -1.0])
    tsys = transform_system(FracSystem(0.5, A), gamma=0.3)
    assert list(tsys.mu) == [1.0, -1.0] and tsys.k == 1
    assert np.all(tsys.nilpotent == 0)
    assert np.allclose(np.abs(tsys.TP), np.eye(2))
    assert np.all(tsys.h(np.array([[0.3, 0.2]])) == 0)


def test_transform_orders_unstable_first():
    tsys = transform_system(FracSystem(0.5, np.diag([-1.0, 2.0, 1.0])), gamma=0.1)
    assert tsys.k == 2
    tags = [classify_eigenvalue(0.5, m).tag is SectorTag.UNSTABLE for m in tsys.mu]
    assert tags == [True, True, False]


def test_transform_jordan_block():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    tsys = transform_system(FracSystem(0.5, A), gamma=0.1)
    assert list(tsys.mu) == [1.0, 1.0] and tsys.k == 2
    assert tsys.linear_part[0, 1] == pytest.approx(0.1)
    assert _linear_residual(tsys, A) <= 1e-12


def test_declared_jordan_structure_overrides_detection():
    A = np.array([[0.5, 1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, -1.0]])
    blocks, T = jordan_structure(A, [(0.5, 2), (-1.0, 1)])
    assert blocks == [(0.5, 2), (-1.0, 1)]
    J = np.linalg.solve(T, A @ T)
    assert np.max(np.abs(J - np.array([[0.5, 1, 0], [0, 0.5, 0], [0, 0, -1]]))) <= 1e-12
    with pytest.raises(SpectralError):
        jordan_structure(A, [(0.5, 1), (-1.0, 1)])
    with pytest.raises(SpectralError):
        jordan_structure(A, [(0.7, 2), (-1.0, 1)])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), gamma=st.floats(0.01, 1.0))
def test_transform_linear_part(seed, gamma):
    rng = np.random.default_rng(seed)
    # one Jordan block plus simple eigenvalues, hidden by a random similarity
    J = np.diag([0.7, 0.7, -1.5, 2.0]) + np.diag([1.0, 0.0, 0.0], 1)
    S = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    A = S @ J @ np.linalg.inv(S)
    tsys = transform_system(FracSystem(0.6, A), gamma=gamma)
    assert sorted(tsys.block_sizes) == [1, 1, 2]
    assert _linear_residual(tsys, A) <= 1e-8 * max(1.0, np.linalg.norm(A, 2)) * tsys.cond
    unstable = [classify_eigenvalue(0.6, m).tag is SectorTag.UNSTABLE for m in tsys.mu]
    assert unstable == [i < tsys.k for i in range(4)]


def test_default_gamma_uses_kernel_constant():
    tsys = transform_system(FracSystem(0.5, [[1.0, 1.0], [0.0, 1.0]]))
    # K(0.5, 1) = 4 in the weighted norm, so gamma = 1/16
    assert tsys.gamma == pytest.approx(1 / 16, rel=1e-6)
    assert transform_system(FracSystem(0.5, [[-1.0]])).gamma == 0.1


def test_transformed_nonlinearity_vanishes_like_r():
    f = build_nonlinearity("polynomial", 2, {"terms": [{"out": 0, "coeff": 1.0, "exponents": [2, 0]}]})
    tsys = transform_system(FracSystem(0.5, np.diag([1.0, -1.0]), f), gamma=1.0)
    x = np.array([[0.3, -0.2]])
    assert np.allclose(tsys.h(x), tsys.TP_inv @ f(tsys.TP @ x[0]))
    ells = [tsys.ell_h(r, samples=6000) for r in (1e-1, 1e-2, 1e-3)]
    assert ells[0] > ells[1] > ells[2]
    assert ells[2] <= 2.1e-3


def test_jordan_nonlinearity_modulus_tends_to_gamma():
    f = build_nonlinearity("square", 2, {})
    tsys = transform_system(FracSystem(0.6, [[0.5, 1.0], [0.0, 0.5]], f), gamma=0.1)
    ell = tsys.ell_h(1e-4, samples=6000)
    assert abs(ell - 0.1) <= 0.2 * 0.1


# ------------------------------------------------------------- Lipschitz


def test_lipschitz_zero_map():
    assert lipschitz_estimate(lambda x: np.zeros_like(x), 0.5, 3000) == 0.0


def test_lipschitz_square():
    est = lipschitz_estimate(lambda x: x ** 2, 0.1, 100_000)
    assert 0.15 < est <= 0.2 + 1e-15
    assert est == lipschitz_estimate(lambda x: x ** 2, 0.1, 100_000)


@pytest.mark.parametrize("gamma", [0.1, 2.5])
def test_lipschitz_linear(gamma):
    est = lipschitz_estimate(lambda x: gamma * x, 0.3, 3000)
    assert abs(est - gamma) <= 1e-12


def test_lipschitz_radius_checked():
    with pytest.raises(ValueError):
        lipschitz_estimate(lambda x: x, 2.0, 10, lip_radius=1.0)
    with pytest.raises(ValueError):
        lipschitz_estimate(lambda x: x, 0.0, 10)
