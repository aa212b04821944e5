import math

import numpy as np
import pytest

from hkflow import ambient, backend
from hkflow.ambient import AmbientPoint
from hkflow.errors import ChartDomain


def _order(res_h, res_h2):
    return math.log2(res_h / res_h2)


def test_quaternion_and_compatibility_random_points():
    rng = np.random.default_rng(11)
    for model, charts in (
        (ambient.flat_model(), ("t4",)),
        (ambient.eh_model(1.0), ("radial", "bolt")),
        (ambient.eh_model(16.0), ("radial", "bolt")),
    ):
        for chart in charts:
            coords = ambient._sample_coords(model, chart, 300, rng)
            errs = ambient._pointwise_algebra_errors(model, chart, coords)
            for name, val in errs.items():
                assert val <= 1e-12, (model.kind, chart, name, val)


def test_frame_reconstructs_metric():
    rng = np.random.default_rng(3)
    model = ambient.eh_model(2.5)
    for chart in ("radial", "bolt"):
        coords = ambient._sample_coords(model, chart, 50, rng)
        geo = ambient.chart_geometry(model, chart, coords)
        recon = np.einsum("nam,nak->nmk", geo["coframe"], geo["coframe"])
        assert np.abs(recon - geo["g"]).max() <= 1e-12


def test_structure_equations_converge_second_order():
    model = ambient.eh_model(1.0)
    rng = np.random.default_rng(7)
    coords = ambient._sample_coords(model, "radial", 4, rng)
    r1 = ambient._structure_residual(model, "radial", coords, 2e-3)
    r2 = ambient._structure_residual(model, "radial", coords, 1e-3)
    assert _order(r1, r2) >= 1.9


def test_curvature_structure_equation_converges():
    model = ambient.eh_model(1.0)
    rng = np.random.default_rng(8)
    coords = ambient._sample_coords(model, "radial", 2, rng)
    r1 = ambient._curvature_structure_residual(model, "radial", coords, 2e-3)
    r2 = ambient._curvature_structure_residual(model, "radial", coords, 1e-3)
    assert _order(r1, r2) >= 1.9


def test_closed_form_curvature_matches_finite_differences():
    rng = np.random.default_rng(9)
    for c in (1.0, 16.0):
        model = ambient.eh_model(c)
        for chart in ("radial", "bolt"):
            for x in ambient._sample_coords(model, chart, 4, rng):
                pt = AmbientPoint(chart, x)
                Rf = ambient.riemann_at(model, pt, frame=True).R
                Rc = ambient.eh_curvature_forms_at(model, pt).R
                assert np.abs(Rf - Rc).max() <= 1e-7


def test_ricci_flat():
    rng = np.random.default_rng(10)
    model = ambient.eh_model(1.0)
    for chart in ("radial", "bolt"):
        for x in ambient._sample_coords(model, chart, 4, rng):
            ric = ambient.ricci_at(model, AmbientPoint(chart, x))
            assert np.abs(ric).max() <= 1e-6


def test_curvature_frozen_values():
    model = ambient.eh_model(1.0)
    pt = AmbientPoint("radial", [math.sqrt(2.0), 1.0, 0.5, 0.3])
    R = ambient.eh_curvature_forms_at(model, pt).R
    assert R[0, 1, 1, 0] == pytest.approx(-0.25, abs=1e-14)
    assert R[0, 3, 3, 0] == pytest.approx(0.5, abs=1e-14)
    # curvature scale at the bolt itself
    for c in (1.0, 16.0):
        mc = ambient.eh_model(c)
        pb = AmbientPoint("bolt", [0.0, 0.0, 1.2, 0.7])
        Rb = ambient.eh_curvature_forms_at(mc, pb).R
        assert Rb[0, 1, 1, 0] == pytest.approx(-2.0 / math.sqrt(c), rel=1e-13)


def test_connection_form_frozen_values():
    model = ambient.eh_model(1.0)
    pt = AmbientPoint("radial", [math.sqrt(2.0), 1.0, 0.5, 0.3])
    om = ambient.eh_connection_forms_at(model, pt).omega
    A = 1.0 - 1.0 / 4.0
    val1 = math.sqrt(A) / math.sqrt(2.0)
    val2 = (2.0 - A) / (math.sqrt(2.0) * math.sqrt(A))
    assert om[0, 1, 1] == pytest.approx(-val1, rel=1e-14)
    assert om[1, 2, 3] == pytest.approx(val2, rel=1e-14)
    assert np.abs(om + om.transpose(1, 0, 2)).max() == 0.0


def test_sphere_product_pins_sign_conventions():
    K, ric_sphere, ric_flat = ambient._sphere_selftest()
    assert K == pytest.approx(1.0, abs=1e-5)
    assert ric_sphere == pytest.approx(1.0, abs=1e-5)
    assert abs(ric_flat) <= 1e-8


def test_kahler_forms_closed_and_parallel():
    model = ambient.eh_model(1.0)
    rng = np.random.default_rng(12)
    for chart in ("radial", "bolt"):
        coords = ambient._sample_coords(model, chart, 3, rng)
        c1 = ambient._omega_closed_residual(model, chart, coords, 2e-3)
        c2 = ambient._omega_closed_residual(model, chart, coords, 1e-3)
        assert _order(c1, c2) >= 1.9 or c2 <= 1e-10
        p1 = ambient._omega_parallel_residual(model, chart, coords, 2e-3)
        p2 = ambient._omega_parallel_residual(model, chart, coords, 1e-3)
        assert _order(p1, p2) >= 1.9 or p2 <= 1e-10


def test_flat_model_forms_are_constant():
    model = ambient.flat_model()
    rng = np.random.default_rng(13)
    coords = ambient._sample_coords(model, "t4", 3, rng)
    assert ambient._omega_closed_residual(model, "t4", coords, 1e-3) == 0.0
    assert ambient._omega_parallel_residual(model, "t4", coords, 1e-3) == 0.0


def test_transition_roundtrip():
    model = ambient.eh_model(3.0)
    rng = np.random.default_rng(14)
    worst = 0.0
    for x in ambient._sample_coords(model, "bolt", 50, rng):
        p = AmbientPoint("bolt", x)
        q = ambient.eh_bolt_transition(model, p)
        assert q.chart_id == "radial"
        back = ambient.eh_bolt_transition(model, q)
        worst = max(worst, np.abs(back.coords - p.coords).max())
    assert worst <= 1e-12


def test_transition_matches_curvature_scalar():
    model = ambient.eh_model(1.0)
    rng = np.random.default_rng(15)
    for x in ambient._sample_coords(model, "bolt", 10, rng):
        p = AmbientPoint("bolt", x)
        q = ambient.eh_bolt_transition(model, p)
        assert ambient._eh_a_of_point(model, p) == pytest.approx(
            ambient._eh_a_of_point(model, q), rel=1e-10
        )


def test_fiber_cone_angle_is_one():
    for c in (1.0, 16.0):
        rep_key = ambient.validate_ambient(ambient.eh_model(c), n_points=5)
        assert rep_key["cone_angle_err"] <= 1e-6


def test_meridians_are_unit_speed_geodesics():
    # straight rays from the bolt in the normal-disc coordinates must be
    # unit-speed geodesics (that is what makes |v| the tube distance)
    model = ambient.eh_model(1.0)
    for alpha in (0.0, 0.9, 2.4):
        x0 = np.array([0.0, 0.0, 1.1, 0.7])
        v0 = np.array([math.cos(alpha), math.sin(alpha), 0.0, 0.0])
        x1, v1 = ambient.geodesic_shoot(model, "bolt", x0, v0, 0.4, nsteps=400)
        want = x0 + 0.4 * v0
        assert np.abs(x1 - want).max() <= 1e-9
        g = ambient.chart_geometry(model, "bolt", x1[None])["g"][0]
        assert v1 @ g @ v1 == pytest.approx(1.0, abs=1e-9)


def test_chart_domain_guards():
    model = ambient.eh_model(1.0)
    with pytest.raises(ChartDomain):
        ambient.metric_at(model, AmbientPoint("radial", [0.9, 1.0, 0.0, 0.0]))
    with pytest.raises(ChartDomain):
        ambient.metric_at(model, AmbientPoint("bolt", [0.1, 0.0, 0.0, 1.0]))
    with pytest.raises(ChartDomain):
        ambient.metric_at(model, AmbientPoint("t4", [0.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ChartDomain):
        ambient.eh_connection_forms_at(
            model, AmbientPoint("bolt", [0.1, 0.1, 1.0, 1.0])
        )
    flat = ambient.flat_model()
    with pytest.raises(ChartDomain):
        ambient.eh_frame_at(flat, AmbientPoint("t4", [0.0] * 4))


def test_backend_twins_agree():
    if not backend.HAS_NUMBA:
        pytest.skip("numba unavailable")
    model = ambient.eh_model(1.0)
    rng = np.random.default_rng(16)
    coords = ambient._sample_coords(model, "bolt", 200, rng)
    outs_np = backend.bolt_ambient(coords, 1.0, force="numpy")
    outs_nb = backend.bolt_ambient(coords, 1.0, force="numba")
    for a, b in zip(outs_np, outs_nb):
        assert np.abs(a - b).max() <= 1e-10


def test_newton_inversion_of_tube_radius():
    rng = np.random.default_rng(17)
    u = rng.uniform(0.0, 5.5, size=200)
    s = 16.0 ** 0.25 / 2.0
    ubar = s * backend.g_of_u(u)
    u_back = backend.u_from_ubar(ubar, s)
    assert np.abs(u_back - u).max() <= 1e-12
