import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anyon_afp.grid import gradient, make_grid
from anyon_afp.kernel import (
    KernelConfig, curl, divergence, enclosed_mass, radial_oracle, scalar_convolution, vector_potential,
)
from anyon_afp.validation import kernel_suite


@pytest.fixture(scope="module")
def grid256():
    return make_grid(256, 16.0)


def _gauss(grid, c=(0.0, 0.0), w=1.0):
    x1, x2 = grid.coords
    return np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / w**2) / (np.pi * w**2)


class TestKernelConfig:
    def test_padding_values(self):
        with pytest.raises(ValueError):
            KernelConfig(padding_factor=3)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            KernelConfig(R=-0.1)

    def test_radius_vs_box(self, grid256):
        rho = _gauss(grid256)
        with pytest.raises(ValueError, match="box_length/4"):
            vector_potential(rho, grid256, KernelConfig(R=5.0))


class TestVectorPotential:
    def test_zero_density(self, grid256):
        assert np.abs(vector_potential(np.zeros((256, 256)), grid256)).max() == 0.0

    def test_negative_density_rejected(self, grid256):
        with pytest.raises(ValueError, match="negative"):
            vector_potential(-_gauss(grid256), grid256)

    def test_complex_density_rejected(self, grid256):
        with pytest.raises(TypeError):
            vector_potential(_gauss(grid256).astype(complex), grid256)

    def test_gaussian_far_field(self, grid256):
        A = vector_potential(_gauss(grid256), grid256)
        x = grid256.x
        i = np.argmin(np.abs(x - 4.0))
        j = np.argmin(np.abs(x))
        r = np.hypot(x[i], x[j])
        assert np.hypot(A[0, i, j], A[1, i, j]) == pytest.approx(1 / r, rel=1e-3)

    def test_uniform_disk(self):
        g = make_grid(512, 8.0)
        rho = (g.radius <= 1.0) / np.pi
        A = vector_potential(rho, g)
        x1, x2 = g.coords
        ring = (g.radius >= 0.2) & (g.radius <= 0.8)
        rel = np.hypot(A[0] + x2, A[1] - x1)[ring] / g.radius[ring]
        assert rel.max() <= 1e-2

    def test_matches_radial_oracle(self, grid256):
        f = lambda t: np.exp(-t * t) / np.pi  # noqa: E731
        A = vector_potential(f(grid256.radius), grid256)
        Ao = radial_oracle(np.linspace(0, 12, 10), f, grid256)
        assert np.abs(A - Ao).max() / np.abs(Ao).max() <= 1e-3

    def test_padding_four_agrees(self, grid256):
        rho = _gauss(grid256, (0.5, -1.0))
        A2 = vector_potential(rho, grid256)
        A4 = vector_potential(rho, grid256, KernelConfig(padding_factor=4))
        assert np.abs(A2 - A4).max() <= 1e-10

    def test_translation_covariance(self, grid256):
        # shifting the density by whole cells shifts A away from the box edge
        rho = _gauss(grid256, (0.0, 0.0), 0.5)
        A = vector_potential(rho, grid256)
        As = vector_potential(np.roll(rho, 8, axis=0), grid256)
        assert np.abs(As[:, 40:200, 40:200] - np.roll(A, 8, axis=1)[:, 40:200, 40:200]).max() <= 1e-10

    def test_mollified_outside_support(self, grid256):
        rho = _gauss(grid256, w=0.5)
        A = vector_potential(rho, grid256)
        AR = vector_potential(rho, grid256, KernelConfig(R=0.3))
        far = grid256.radius > 4.0
        # a unit-mass disk average of a harmonic field leaves it unchanged
        assert np.abs(A - AR)[:, far].max() <= 1e-8

    def test_compat_pi2_scaling(self, grid256):
        rho = _gauss(grid256)
        AR = vector_potential(rho, grid256, KernelConfig(R=0.3))
        AP = vector_potential(rho, grid256, KernelConfig(R=0.3, compat_pi2=True))
        assert np.allclose(AP, AR / np.pi, atol=1e-14)


class TestCurl:
    def test_curl_identity(self, grid256):
        rho = _gauss(grid256, (0.3, -0.4), 0.8)
        err = np.abs(curl(vector_potential(rho, grid256), grid256) - 2 * np.pi * rho).max()
        assert err <= 1e-6 * rho.max()

    def test_divergence_free(self, grid256):
        rho = _gauss(grid256, (0.3, -0.4), 0.8)
        assert np.abs(divergence(vector_potential(rho, grid256), grid256)).max() <= 1e-8

    def test_curl_of_gradient(self, grid256):
        f = np.exp(-grid256.radius**2) * np.cos(grid256.coords[0])
        A = gradient(f, grid256)
        assert np.abs(curl(A, grid256, far_field=False)).max() <= 1e-10

    def test_product_rule(self, grid256):
        x1, x2 = grid256.coords
        b = np.exp(-(x1**2 + 2 * x2**2))
        A = np.stack([-x2 * b, x1 * b])
        db = gradient(b, grid256)
        exact = 2 * b + x1 * db[0] + x2 * db[1]
        assert np.abs(curl(A, grid256, far_field=False) - exact).max() <= 1e-8


class TestRadialOracle:
    def test_uniform_disk(self):
        g = make_grid(64, 8.0)
        r_tab = np.linspace(0, 6.0, 6001)
        rho_tab = np.where(r_tab <= 1.0, 1 / np.pi, 0.0)
        A = radial_oracle(r_tab, rho_tab, g)
        mag = np.hypot(A[0], A[1])
        r = g.radius
        expect = np.where(r <= 1.0, r, 1 / np.where(r > 0, r, 1))
        assert np.abs(mag - expect).max() <= 2e-3

    def test_narrow_bump(self):
        g = make_grid(64, 8.0)
        f = lambda t: np.exp(-(t / 0.05) ** 2) / (np.pi * 0.05**2)  # noqa: E731
        A = radial_oracle(np.linspace(0, 6, 10), f, g)
        far = g.radius > 0.5
        assert np.abs(np.hypot(A[0], A[1])[far] * g.radius[far] - 1).max() <= 1e-8

    def test_enclosed_mass_exact_for_linear(self):
        r = np.array([0.0, 1.0, 2.0])
        rho = np.array([1.0, 1.0, 0.0])
        # int_0^2 rho t dt = 1/2 + int_1^2 (2 - t) t dt = 1/2 + 2/3
        assert enclosed_mass(r, rho, np.array([2.0]))[0] == pytest.approx(2 * np.pi * (0.5 + 2 / 3), rel=1e-14)

    def test_zero(self):
        g = make_grid(32, 4.0)
        A = radial_oracle(np.linspace(0, 3, 11), np.zeros(11), g)
        assert np.abs(A).max() == 0.0

    def test_coverage_error(self):
        g = make_grid(32, 4.0)
        with pytest.raises(ValueError, match="does not cover"):
            radial_oracle(np.linspace(0, 1, 11), np.zeros(11), g)

    def test_enclosed_mass(self):
        r = np.linspace(0, 10, 2001)
        m = enclosed_mass(r, np.exp(-r * r) / np.pi, np.array([1.0, 10.0]))
        assert m == pytest.approx([1 - np.exp(-1.0), 1.0], rel=1e-5)


class TestScalarConvolution:
    def test_zero(self, grid256):
        assert np.abs(scalar_convolution(np.zeros((2, 256, 256)), grid256)).max() == 0.0

    def test_perp_gradient_identity(self, grid256):
        gfun = np.exp(-grid256.radius**2)
        dg = gradient(gfun, grid256)
        F = np.stack([-dg[1], dg[0]])
        out = scalar_convolution(F, grid256)
        assert np.abs(out - 2 * np.pi * gfun).max() <= 1e-8

    def test_radial_source(self, grid256):
        # A rho is azimuthal for radial rho, so its pairing with grad_perp w is radial
        rho = _gauss(grid256)
        A = vector_potential(rho, grid256)
        out = scalar_convolution(A * rho[None], grid256)
        c = 128
        ring = [out[c + 20, c], out[c, c + 20], out[c - 20, c], out[c, c - 20]]
        assert np.ptp(ring) <= 1e-10 * max(1.0, abs(ring[0]))

    def test_adjoint_of_vector_potential(self, grid256, rng):
        # <A[f], F> = - <f, K * F> with K = grad_perp w
        f = _gauss(grid256, (0.5, 0.2))
        F = np.stack([_gauss(grid256, (-0.3, 0.1), 0.7), _gauss(grid256, (0.2, -0.6), 0.9)])
        lhs = np.sum(vector_potential(f, grid256) * F)
        rhs = np.sum(f * scalar_convolution(F, grid256))
        assert lhs == pytest.approx(-rhs, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.5, 1.5))
def test_curl_identity_random_gaussians(cx, cy, w):
    g = make_grid(128, 16.0)
    rho = _gauss(g, (cx, cy), w)
    err = np.abs(curl(vector_potential(rho, g), g) - 2 * np.pi * rho).max()
    assert err <= 1e-5


def test_kernel_suite_passes():
    checks = kernel_suite()
    bad = [c for c in checks if not c.passed]
    assert not bad, bad
