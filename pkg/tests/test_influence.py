import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renyi_bvn import influence as inf
from renyi_bvn import wald
from renyi_bvn.errors import DomainError
from renyi_bvn.influence import GridSpec, if_surface
from renyi_bvn.model import PARAM_NAMES, Theta

from conftest import FIGURE_THETA

STD = Theta(0, 0, 1, 1, 0)
thetas = st.builds(Theta, st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 3), st.floats(0.3, 3),
                   st.floats(-0.9, 0.9))


class TestPointwise:
    def test_at_the_mean(self):
        v = inf.influence(FIGURE_THETA, 0.0, 1.0, 2.0).values
        np.testing.assert_allclose(v, [0, 0, -0.5, -0.75, 0], atol=1e-15)

    def test_standard_model_off_center(self):
        v = inf.influence(STD, 0.0, 2.0, 0.0).values
        np.testing.assert_allclose(v, [2, 0, 1.5, -0.5, 0], atol=1e-15)

    def test_robust_damping(self):
        v = inf.influence(STD, 1.0, 2.0, 0.0).values
        np.testing.assert_allclose(v, np.exp(-2) * np.array([8, 0, 14, -2, 0]), rtol=1e-14)

    def test_negative_alpha(self):
        with pytest.raises(DomainError):
            inf.influence(STD, -0.1, 0, 0)

    @settings(max_examples=60, deadline=None)
    @given(thetas, st.floats(0, 1), st.floats(-4, 4), st.floats(-4, 4))
    def test_matches_matrix_form(self, th, a, zx, zy):
        x = th.mu1 + th.sigma1 * zx
        y = th.mu2 + th.sigma2 * zy
        closed = inf.influence_values(th, a, x, y)
        matrix = inf.influence_matrix_form(th, a, x, y)
        np.testing.assert_allclose(closed, matrix, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    @pytest.mark.parametrize("point", [(2.0, 3.5), (-1.0, 0.0)])
    def test_matches_contamination_limit(self, alpha, point):
        closed = inf.influence_values(FIGURE_THETA, alpha, *point)
        approx = inf.contamination_if(FIGURE_THETA, alpha, *point)
        np.testing.assert_allclose(approx, closed, atol=2e-3 * (1 + np.abs(closed).max()))

    def test_boundedness_for_positive_alpha(self):
        far = inf.influence_values(STD, 0.5, np.array([50.0, 1e3]), np.array([-50.0, 1e3]))
        assert np.all(np.abs(far) < 1e-100)

    def test_unbounded_at_zero(self):
        ratio = inf.influence_values(STD, 0.0, 100.0, 0.0)[0] / inf.influence_values(STD, 0.0, 10.0, 0.0)[0]
        assert ratio == pytest.approx(10)


class TestSecondOrder:
    @settings(max_examples=50, deadline=None)
    @given(thetas, st.floats(0, 1), st.floats(-4, 4), st.floats(-4, 4))
    def test_nonnegative(self, th, a, x, y):
        for c in (wald.constraint_means(), wald.constraint_var_cov(1, 1, 0.1)):
            assert inf.second_order_if(th, a, c, x, y) >= -1e-12

    def test_zero_at_mean_for_correlation(self):
        th = Theta(0, 0, 1, 1, 0.0)
        assert inf.second_order_if(th, 0.3, wald.constraint_correlation(0.0), 0.0, 0.0) == 0

    def test_decays_for_positive_alpha(self):
        c = wald.constraint_variances()
        near = inf.second_order_if(FIGURE_THETA, 0.5, c, 4.0, 2.0)
        far = inf.second_order_if(FIGURE_THETA, 0.5, c, 40.0, 2.0)
        assert far < 1e-50 < near


class TestSurface:
    def test_shape_and_ordering(self):
        g = GridSpec(-1, 1, 3, -2, 2, 5)
        out = if_surface(FIGURE_THETA, 0.2, "rho", g)
        assert out.shape == (15, 3)
        assert np.all(out[:5, 0] == out[0, 0])
        np.testing.assert_allclose(out[:5, 1], FIGURE_THETA.mu2 + FIGURE_THETA.sigma2 * np.linspace(-2, 2, 5))

    def test_values_match_pointwise(self):
        out = if_surface(FIGURE_THETA, 0.4, "sigma2", GridSpec(nx=7, ny=9))
        ref = inf.influence_values(FIGURE_THETA, 0.4, out[:, 0], out[:, 1])[:, PARAM_NAMES.index("sigma2")]
        np.testing.assert_array_equal(out[:, 2], ref)

    def test_single_point(self):
        out = if_surface(FIGURE_THETA, 0.1, wald.constraint_means(), GridSpec(0, 0, 1, 0, 0, 1))
        assert out.shape == (1, 3) and out[0, 2] == 0

    def test_peak_moves_inside_for_positive_alpha(self):
        g = GridSpec(-8, 8, 161, 0, 0, 1)
        plain = if_surface(STD, 0.0, "mu1", g)
        robust = if_surface(STD, 0.5, "mu1", g)
        assert abs(plain[np.abs(plain[:, 2]).argmax(), 0]) == 8
        assert abs(robust[np.abs(robust[:, 2]).argmax(), 0]) == pytest.approx(np.sqrt(2), abs=0.05)

    @pytest.mark.parametrize("bad", [dict(nx=0), dict(x_min=1, x_max=-1), dict(nx=1)])
    def test_grid_validation(self, bad):
        with pytest.raises(DomainError):
            GridSpec(**bad)

    def test_unknown_target(self):
        with pytest.raises(DomainError):
            if_surface(STD, 0.1, "tau")
