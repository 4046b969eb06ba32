import math

import numpy as np
import pytest

from sseplab.errors import QuadratureError
from sseplab.quadrature import gauss_expectation, gauss_legendre, graded_edges, integrate, panel_nodes


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(8)
    for k in range(16):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(w, x ** k) == pytest.approx(exact, abs=1e-14)


def test_panel_nodes_batch_shape():
    edges = np.array([[0.0, 1.0, 2.0], [0.0, 0.5, 3.0]])
    x, w = panel_nodes(edges, 4)
    assert x.shape == (2, 8)
    assert np.allclose(w.sum(axis=1), [2.0, 3.0])


def test_integrate_smooth_and_kinked():
    v, e = integrate(np.exp, [0.0, 1.0], tol=1e-13)
    assert v == pytest.approx(math.e - 1, abs=1e-13)
    v, _ = integrate(np.abs, [-1.0, 0.0, 2.0], tol=1e-13)
    assert v == pytest.approx(2.5, abs=1e-13)


def test_integrate_reports_failure():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.sin(1.0 / np.maximum(x, 1e-300)), [0.0, 1.0], tol=1e-14, max_level=3)


def test_integrate_vector_valued():
    v, _ = integrate(lambda x: np.stack([x, x ** 2], axis=-1), [0.0, 1.0])
    assert np.allclose(v, [0.5, 1.0 / 3.0])


def test_graded_edges_inside_interval():
    e = graded_edges(0.3, 0.1, 0.0, 1.0)
    assert np.all((e > 0) & (e < 1))
    assert 0.3 in e


def test_gauss_expectation_moments():
    v, _ = gauss_expectation(lambda z: np.stack([z ** 2, z ** 4, np.cos(z)], axis=-1), tol=1e-13)
    assert np.allclose(v, [1.0, 3.0, math.exp(-0.5)], atol=1e-12)


def test_gauss_expectation_failure():
    with pytest.raises(QuadratureError):
        gauss_expectation(lambda z: np.cos(40.0 * z), tol=1e-15, max_level=1)
