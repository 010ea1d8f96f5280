import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augtik import kernels

BACKENDS = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.get_backend(request.param)


def tridiag(n, a, e):
    return np.diag(np.full(n, a)) + np.diag(np.full(n - 1, e), 1) + np.diag(np.full(n - 1, e), -1)


class TestBackendSelection:
    def test_fallback_always_available(self):
        assert BACKENDS[0] == "python"

    def test_unknown_backend(self):
        with pytest.raises(ValueError, match="unknown kernel backend"):
            kernels.get_backend("fortran")

    def test_selected_backend_is_available(self):
        assert kernels.BACKEND in BACKENDS


class TestKernels:
    @pytest.mark.parametrize("n", [3, 10, 257])
    def test_ptsolve(self, backend, n):
        b = np.random.default_rng(n).standard_normal(n)
        fac = backend.ptfactor(np.full(n, 2.0), np.full(n - 1, -1.0))
        x = backend.ptsolve(*fac, b)
        np.testing.assert_allclose(tridiag(n, 2.0, -1.0) @ x, b, atol=1e-12 * n**2)

    def test_classify_examples(self, backend):
        # beta = 1, alpha = 0.1, box [-1, 1]
        p = np.array([0.0, 2.0, 1.05, -2.0, -1.05, 1.0, -1.0])
        labels, _ = backend.classify(p, np.zeros(7), np.zeros(7), np.zeros(7), -np.ones(7), np.ones(7), 0.1, 1.0, 1.0)
        expected = [kernels.A_0, kernels.A_A, kernels.I_MINUS, kernels.A_B, kernels.I_PLUS, kernels.I_MINUS, kernels.I_PLUS]
        np.testing.assert_array_equal(labels, expected)

    def test_kkt_tridiag_against_dense(self, backend):
        rng = np.random.default_rng(3)
        n, a, e = 12, 50.0, -25.0
        d = 1.0 + 100.0 * (rng.random(n) < 0.5)
        c = np.where(rng.random(n) < 0.5, 10.0, 0.0)
        rs, ra = rng.standard_normal(n), rng.standard_normal(n)
        A = tridiag(n, a, e)
        K = np.block([[A, np.diag(c)], [np.diag(d), -A]])
        ref = np.linalg.solve(K, np.concatenate([rs, ra]))
        y, p = backend.kkt_tridiag_solve(a, e, d, c, rs, ra)
        np.testing.assert_allclose(np.concatenate([y, p]), ref, rtol=1e-10, atol=1e-12)


@needs_cython
class TestBackendEquivalence:
    py = kernels.get_backend("python")

    @property
    def cy(self):
        return kernels.get_backend("cython")

    @given(st.integers(3, 200), st.integers(0, 2**32 - 1))
    def test_ptsolve(self, n, seed):
        rng = np.random.default_rng(seed)
        d = 2.0 + rng.random(n)
        e = -rng.random(n - 1)
        b = rng.standard_normal(n)
        x_py = self.py.ptsolve(*self.py.ptfactor(d, e), b)
        x_cy = self.cy.ptsolve(*self.cy.ptfactor(d, e), b)
        np.testing.assert_allclose(x_cy, x_py, rtol=1e-12, atol=1e-14)

    @given(st.integers(1, 100), st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0]))
    def test_classify_identical(self, n, seed, beta):
        rng = np.random.default_rng(seed)
        # quantized values produce exact ties on the set boundaries
        p = np.round(rng.uniform(-3, 3, n), 1)
        y, mu, psi = rng.standard_normal(n), rng.random(n), np.round(rng.standard_normal(n), 1)
        ua, ub = -np.ones(n), np.ones(n)
        args = (p, y, mu, psi, ua, ub, 0.1, 10.0, beta)
        for a, b in zip(self.py.classify(*args), self.cy.classify(*args)):
            np.testing.assert_array_equal(np.asarray(a), np.asarray(b))

    @given(st.integers(3, 100), st.integers(0, 2**32 - 1))
    def test_kkt_tridiag(self, n, seed):
        rng = np.random.default_rng(seed)
        d = 1.0 + 1e3 * (rng.random(n) < 0.3)
        c = np.where(rng.random(n) < 0.5, 100.0, 0.0)
        rs, ra = rng.standard_normal(n), rng.standard_normal(n)
        h = 1.0 / (n + 1)
        out_py = self.py.kkt_tridiag_solve(2 / h**2, -1 / h**2, d, c, rs, ra)
        out_cy = self.cy.kkt_tridiag_solve(2 / h**2, -1 / h**2, d, c, rs, ra)
        for a, b in zip(out_py, out_cy):
            np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12 * np.abs(a).max())

    def test_prox_gradient_1d(self):
        n = 63
        h = 1.0 / (n + 1)
        x = h * np.arange(1, n + 1)
        d, e = np.full(n, 2 / h**2), np.full(n - 1, -1 / h**2)
        args = (
            h, np.zeros(n), np.zeros(n), np.sin(np.pi * x), np.full(n, 0.02), np.zeros(n),
            -np.ones(n), np.ones(n), 1e-2, 1e2, 1e-3, 50.0, 300, 0.0,
        )
        u_py, it_py, res_py, hist_py = self.py.prox_gradient_1d(*self.py.ptfactor(d, e), *args)
        u_cy, it_cy, res_cy, hist_cy = self.cy.prox_gradient_1d(*self.cy.ptfactor(d, e), *args)
        assert it_py == it_cy
        np.testing.assert_allclose(u_cy, u_py, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(hist_cy, hist_py, rtol=1e-10)

