import numpy as np
import pytest

from hkflow import flow, scenarios, surface


def _coscos_state(n=32):
    grid = surface.build_grid("torus", n, n)
    model, imm, _ = scenarios.make_flat_lagrangian_graph(grid, "coscos",
                                                         eps=0.1)
    return model, grid, imm


def test_config_validation():
    with pytest.raises(ValueError):
        flow.FlowConfig(integrator="leapfrog")
    with pytest.raises(ValueError):
        flow.FlowConfig(dt_mode="fixed")  # no dt given
    with pytest.raises(ValueError):
        flow.FlowConfig(velocity_form="magic")


def test_zero_section_is_converged_at_once():
    grid = surface.build_grid("sphere", 16, 8)
    model, imm, _ = scenarios.make_eh_zero_section(1.0, grid)
    res = flow.flow_run(model, grid, imm, flow.FlowConfig(t_end=0.1))
    assert res.status == "converged"
    assert res.steps == 0


def test_short_run_reaches_t_end_and_monitors():
    model, grid, imm = _coscos_state()
    cfg = flow.FlowConfig(t_end=0.02, cfl_factor=0.2, monitor_every=2)
    res = flow.flow_run(model, grid, imm, cfg)
    assert res.status == "reached_t_end"
    assert res.time == pytest.approx(0.02, abs=1e-12)
    assert len(res.records) >= 3
    for rec in res.records:
        d = rec.as_dict()
        assert set(d) == set(flow.MONITOR_FIELDS)
        # flat model: tube diagnostics are not applicable
        assert np.isnan(d["psi_max"])
        assert np.isfinite(d["energy"])


def test_energy_and_sup_lambda_decrease():
    model, grid, imm = _coscos_state()
    cfg = flow.FlowConfig(t_end=0.05, cfl_factor=0.2, monitor_every=5)
    res = flow.flow_run(model, grid, imm, cfg)
    en = [r.energy for r in res.records]
    sl = [r.sup_lambda for r in res.records]
    assert all(b < a for a, b in zip(en, en[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(sl, sl[1:]))


def test_special_defects_stay_small():
    model, grid, imm = _coscos_state()
    cfg = flow.FlowConfig(t_end=0.05, cfl_factor=0.2, monitor_every=5)
    res = flow.flow_run(model, grid, imm, cfg)
    assert max(r.max_eta3 for r in res.records) <= 1e-4
    assert max(r.max_eta2_defect for r in res.records) <= 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_is_detected():
    model, grid, imm = _coscos_state(16)
    cfg = flow.FlowConfig(dt_mode="fixed", dt=50.0, t_end=500.0,
                          monitor_every=1, max_steps=10)
    res = flow.flow_run(model, grid, imm, cfg)
    assert res.status == "blowup_detected"


def test_defect_guard_trips():
    model, grid, imm = _coscos_state(16)
    cfg = flow.FlowConfig(t_end=0.05, monitor_every=1, defect_tol=1e-9)
    res = flow.flow_run(model, grid, imm, cfg)
    assert res.status == "defect_exceeded"
    assert res.steps >= 1


def test_euler_tracks_rk4_at_small_dt():
    model, grid, imm = _coscos_state(16)
    dt = 1e-4
    a = flow.flow_step(model, grid, imm, dt, integrator="euler")
    b = flow.flow_step(model, grid, imm, dt, integrator="rk4")
    assert np.abs(a.points - b.points).max() <= 10.0 * dt ** 2
    assert a.time == pytest.approx(imm.time + dt)


def test_cfl_dt_scales_with_factor():
    model, grid, imm = _coscos_state(16)
    d1 = flow.cfl_dt(model, grid, imm, 0.1)
    d2 = flow.cfl_dt(model, grid, imm, 0.2)
    assert d1 > 0.0
    assert d2 == pytest.approx(2.0 * d1, rel=1e-12)


def test_velocity_forms_entry_point():
    model, grid, imm = _coscos_state(16)
    vm = flow.velocity(model, grid, imm, "moment")
    vg = flow.velocity(model, grid, imm, "gradient")
    assert vm.shape == imm.points.shape
    assert np.abs(vm - vg).max() <= 0.05  # same field up to stencil error


def test_eta_evolution_identity_converges():
    # the closed-form right side of d(eta_a)/dt matches the micro-step
    # difference at the stencil order
    for label in (0, 2):
        res = []
        for n in (32, 64):
            grid = surface.build_grid("torus", n, n)
            model, imm, _ = scenarios.make_flat_lagrangian_graph(
                grid, "coscos", eps=0.1)
            resid, lhs, rhs = flow.two_form_evolution_residual(
                model, grid, imm, label=label)
            res.append(np.abs(resid).max())
        assert np.log2(res[0] / res[1]) >= 1.9
