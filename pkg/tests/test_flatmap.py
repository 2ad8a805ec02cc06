import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flatcap.errors import DomainError
from flatcap.flatmap import (
    DEFAULT_LIMITS,
    ConstraintParams,
    forward_map,
    in_U,
    in_V,
    in_Vtilde,
    inverse_map,
    inverse_map_jacobian,
    vtilde_residuals,
)
from tests.oracles import flat_to_body_mp, sample_vtilde

G = 9.81
finite = st.floats(-20, 20, allow_nan=False)
angle = st.floats(-np.pi, np.pi, allow_nan=False)


class TestParams:
    def test_defaults(self):
        p = ConstraintParams()
        assert (p.g, p.t_max, p.phi_max, p.theta_max) == (9.81, 19.62, 0.1745, 0.1745)
        assert p.eps_max == 0.1745

    def test_eps_is_smaller_bound(self):
        assert ConstraintParams(phi_max=0.2, theta_max=0.1).eps_max == 0.1

    @pytest.mark.parametrize(
        "kw", [{"g": 0.0}, {"t_max": 9.81}, {"phi_max": 0.0}, {"theta_max": np.pi / 2}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ConstraintParams(**kw)

    def test_json(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps({"g": 9.8, "t_max": 20.0}))
        p = ConstraintParams.from_json(path)
        assert p.g == 9.8 and p.t_max == 20.0 and p.phi_max == 0.1745


class TestForwardMap:
    def test_hover(self):
        np.testing.assert_allclose(forward_map([0, 0, 0]), [9.81, 0, 0], atol=1e-15)

    def test_top_of_ball(self):
        np.testing.assert_allclose(forward_map([0, 0, 9.81]), [19.62, 0, 0], atol=1e-14)

    def test_lateral(self):
        # pitch = arctan(1 / 9.81) = 0.1015861...
        np.testing.assert_allclose(forward_map([1, 0, 0]), [9.860837, 0, 0.1015861], atol=5e-6)

    @pytest.mark.parametrize("psi", [0.0, 0.7, -2.5])
    def test_extended_precision(self, psi):
        v = np.array([1.3, -0.4, 2.2])
        np.testing.assert_allclose(forward_map(v, psi), flat_to_body_mp(v, psi, G), rtol=1e-13)

    @pytest.mark.parametrize("v3", [-9.81, -10.0])
    def test_domain(self, v3):
        with pytest.raises(DomainError):
            forward_map([0.1, 0, v3])

    def test_broadcast(self, rng):
        v = rng.normal(size=(4, 5, 3))
        u = forward_map(v, 0.3)
        assert u.shape == (4, 5, 3)
        np.testing.assert_allclose(u[2, 3], forward_map(v[2, 3], 0.3))


class TestInverseMap:
    def test_hover(self):
        np.testing.assert_allclose(inverse_map([9.81, 0, 0]), 0, atol=1e-15)

    @pytest.mark.parametrize("psi", [-3.0, 0.0, 1.1, 2.9])
    def test_hover_any_yaw(self, psi):
        np.testing.assert_allclose(inverse_map([G, 0, 0], psi), 0, atol=1e-14)

    def test_corner_roundtrip(self):
        u = np.array([19.62, 0.1745, 0.1745])
        v = inverse_map(u, 0.0)
        np.testing.assert_allclose(forward_map(v, 0.0), u, atol=1e-9)

    @given(v1=finite, v2=finite, v3=st.floats(-9.81 + 1e-6, 20), psi=angle)
    def test_roundtrip(self, v1, v2, v3, psi):
        v = np.array([v1, v2, v3])
        np.testing.assert_allclose(inverse_map(forward_map(v, psi), psi), v, atol=1e-9)

    @given(
        T=st.floats(0.5, 25),
        phi=st.floats(-1.2, 1.2),
        theta=st.floats(-1.2, 1.2),
        psi=angle,
    )
    def test_jacobian_matches_central_differences(self, T, phi, theta, psi):
        u = np.array([T, phi, theta])
        J = inverse_map_jacobian(u, psi)
        h = 1e-6
        fd = np.column_stack(
            [(inverse_map(u + h * e, psi) - inverse_map(u - h * e, psi)) / (2 * h) for e in np.eye(3)]
        )
        np.testing.assert_allclose(J, fd, atol=1e-7 * max(1.0, T))


class TestSets:
    def test_in_U_examples(self):
        assert in_U([9.81, 0, 0])
        assert not in_U([19.63, 0, 0])
        assert not in_U([10, 0.1746, 0])
        assert not in_U([-0.1, 0, 0])

    def test_in_Vtilde_examples(self):
        assert in_Vtilde([0, 0, 0])
        assert in_Vtilde([0, 0, 9.81])
        assert not in_Vtilde([2, 0, 0])
        assert in_Vtilde([0, 0, -9.81])
        assert not in_Vtilde([0, 0, -9.82])

    def test_cone_uses_shifted_height(self):
        # lateral radius allowed at v3 = 0 is g tan(eps) = 1.7298
        r = G * np.tan(0.1745)
        assert in_Vtilde([r - 1e-9, 0, 0])
        assert not in_Vtilde([r + 1e-6, 0, 0])

    def test_residual_sign(self):
        res = vtilde_residuals(np.array([[0, 0, 0], [3, 0, 0]]))
        assert np.all(res[0] < 0)
        assert res[1, 1] > 0

    @given(v=st.tuples(finite, finite, finite), angle=angle)
    def test_rotation_invariance(self, v, angle):
        v = np.array(v)
        c, s = np.cos(angle), np.sin(angle)
        w = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])
        res_v, res_w = vtilde_residuals(v), vtilde_residuals(w)
        # away from the boundary the predicate must agree
        if np.all(np.abs(res_v) > 1e-9):
            assert in_Vtilde(v) == in_Vtilde(w)
        np.testing.assert_allclose(res_v, res_w, atol=1e-9)

    def test_V_examples(self):
        assert in_V([0, 0, 0], 1.0)
        assert not in_V([0, 0, -9.81])

    @pytest.mark.parametrize("psi", [0.0, 0.4, -1.3])
    def test_V_nonconvex(self, psi):
        # same roll, opposite pitch: the midpoint needs a roll beyond the bound
        t = DEFAULT_LIMITS
        v_a = inverse_map([t.t_max, t.phi_max, t.theta_max], psi)
        v_b = inverse_map([t.t_max, t.phi_max, -t.theta_max], psi)
        assert in_V(v_a, psi, tol=1e-12) and in_V(v_b, psi, tol=1e-12)
        mid = 0.5 * (v_a + v_b)
        assert not in_V(mid, psi)
        assert forward_map(mid, psi)[1] > t.phi_max

    @pytest.mark.parametrize("psi", [0.0, 0.4, -1.3])
    def test_antipodal_corner_midpoint_is_level_hover(self, psi):
        # h is odd in (phi, theta) laterally and even vertically, so the
        # midpoint of the +/-(phi, theta) corners is a pure vertical input
        t = DEFAULT_LIMITS
        v_plus = inverse_map([t.t_max, t.phi_max, t.theta_max], psi)
        v_minus = inverse_map([t.t_max, -t.phi_max, -t.theta_max], psi)
        mid = 0.5 * (v_plus + v_minus)
        np.testing.assert_allclose(mid[:2], 0, atol=1e-12)
        expected = t.t_max * np.cos(t.phi_max) * np.cos(t.theta_max) - t.g
        assert mid[2] == pytest.approx(expected, abs=1e-12)
        assert in_V(mid, psi)

    def test_vtilde_inside_V(self, rng):
        v = sample_vtilde(20000, rng)
        for psi in np.linspace(-np.pi, np.pi, 20):
            assert in_V(v, psi, tol=1e-9).all()

    @given(v1=finite, v2=finite, v3=st.floats(-9.8, 20), psi=angle)
    def test_angle_bounds(self, v1, v2, v3, psi):
        _, phi, theta = forward_map([v1, v2, v3], psi)
        lat2 = v1**2 + v2**2
        z = v3 + G
        assert abs(np.sin(phi)) <= np.sqrt(lat2 / (lat2 + z**2)) + 1e-12
        assert abs(np.tan(theta)) <= np.sqrt(lat2 / z**2) * (1 + 1e-12) + 1e-12
