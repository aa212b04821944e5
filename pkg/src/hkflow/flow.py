"""Time evolution of immersed surfaces under the moment-map velocity.

The velocity field is V = sum_a Jbar_a f_*(xi_a), equivalently
lambda grad(lambda) + lambda^2 H; FlowConfig.velocity_form picks which
discrete form is integrated ("moment" is the default).

Steps are explicit Euler or classical RK4.  In cfl mode the step length
is recomputed every step from

    dt = cfl_factor / max_nodes max( lambda^2 (G^11/dx1^2 + G^22/dx2^2),
                                     |V^1|/dx1 + |V^2|/dx2,  1 )

which tracks both the parabolic scale of the lambda^2-weighted Laplacian
and the advective scale of the tangential motion (the inverse induced
metric matters: on sphere grids near the poles G^11 is large and it, not
the raw spacing, sets the stable step).

flow_run integrates to t_end, emitting a MonitorRecord every
monitor_every steps (and always at the first and last step).  Statuses:

    reached_t_end      time horizon hit
    converged          sup |V|_gbar below convergence_tol at a monitor
    blowup_detected    NaN in the state, a rejected step, or sup |A|^2
                       beyond blowup_A2
    degenerate         induced metric lost positivity
    defect_exceeded    defect_tol set and a special-flow defect
                       (max |eta3|, max |eta2 - 1/lambda|) broke it
"""

import math

import numpy as np

from . import ambient, backend, surface
from .errors import ChartDomain, DegenerateImmersion, StepRejected
from .surface import grid_d1, grid_d2

MONITOR_FIELDS = (
    "t", "energy", "sup_lambda", "inf_lambda", "sup_A2", "max_eta3",
    "max_eta2_defect", "psi_max", "star_omega_min", "s_max", "II_dist",
    "volume",
)


class FlowConfig:
    def __init__(self, integrator="rk4", dt_mode="cfl", dt=None,
                 cfl_factor=0.2, max_steps=200000, t_end=1.0,
                 monitor_every=50, defect_tol=None, blowup_A2=1e4,
                 velocity_form="moment", convergence_tol=1e-8):
        if integrator not in ("rk4", "euler"):
            raise ValueError("integrator must be 'rk4' or 'euler'")
        if dt_mode not in ("cfl", "fixed"):
            raise ValueError("dt_mode must be 'cfl' or 'fixed'")
        if dt_mode == "fixed" and (dt is None or dt <= 0.0):
            raise ValueError("fixed dt_mode needs a positive dt")
        if velocity_form not in ("moment", "gradient"):
            raise ValueError("velocity_form must be 'moment' or 'gradient'")
        self.integrator = integrator
        self.dt_mode = dt_mode
        self.dt = dt
        self.cfl_factor = cfl_factor
        self.max_steps = int(max_steps)
        self.t_end = float(t_end)
        self.monitor_every = int(monitor_every)
        self.defect_tol = defect_tol
        self.blowup_A2 = blowup_A2
        self.velocity_form = velocity_form
        self.convergence_tol = convergence_tol

    def as_dict(self):
        return {
            "integrator": self.integrator, "dt_mode": self.dt_mode,
            "dt": self.dt, "cfl_factor": self.cfl_factor,
            "max_steps": self.max_steps, "t_end": self.t_end,
            "monitor_every": self.monitor_every,
            "defect_tol": self.defect_tol, "blowup_A2": self.blowup_A2,
            "velocity_form": self.velocity_form,
            "convergence_tol": self.convergence_tol,
        }


class MonitorRecord:
    def __init__(self, **kw):
        for f in MONITOR_FIELDS:
            setattr(self, f, kw.pop(f))
        if kw:
            raise TypeError("unexpected monitor fields %r" % sorted(kw))

    def as_dict(self):
        return {f: getattr(self, f) for f in MONITOR_FIELDS}


class FlowResult:
    def __init__(self, status, imm, records, steps, time, config):
        self.status = status
        self.imm = imm
        self.records = records
        self.steps = steps
        self.time = time
        self.config = config


def velocity(model, grid, imm, form="moment", triple=None):
    if form == "gradient":
        return surface.velocity_gradient_form(model, grid, imm)
    return surface.moment_data(model, grid, imm, triple).V


def cfl_dt(model, grid, imm, factor, triple=None):
    md = surface.moment_data(model, grid, imm, triple)
    dx1, dx2 = grid.spacing
    diffusive = md.lam ** 2 * (
        md.Ginv[..., 0, 0] / dx1 ** 2 + md.Ginv[..., 1, 1] / dx2 ** 2
    )
    # tangential components of the velocity in parameter space
    g = md.amb["g"]
    v_t1 = np.einsum("ijm,ijmk,ijk->ij", md.V, g, md.t1)
    v_t2 = np.einsum("ijm,ijmk,ijk->ij", md.V, g, md.t2)
    v1 = md.Ginv[..., 0, 0] * v_t1 + md.Ginv[..., 0, 1] * v_t2
    v2 = md.Ginv[..., 1, 0] * v_t1 + md.Ginv[..., 1, 1] * v_t2
    advective = np.abs(v1) / dx1 + np.abs(v2) / dx2
    rate = max(float(diffusive.max()), float(advective.max()), 1.0)
    return factor / rate


def flow_step(model, grid, imm, dt, form="moment", integrator="rk4",
              triple=None):
    """One explicit step; raises StepRejected if a stage leaves the chart
    or produces non-finite values."""
    if triple is None:
        triple = ambient.hyperkahler_at(model)

    def vel(pts):
        stage = surface.Immersion(imm.chart_id, pts, imm.time, imm.winding)
        try:
            V = velocity(model, grid, stage, form, triple)
        except (ChartDomain, DegenerateImmersion) as exc:
            raise StepRejected(str(exc))
        if not np.all(np.isfinite(V)):
            raise StepRejected("non-finite stage velocity")
        return V

    p = imm.points
    if integrator == "euler":
        newp = p + dt * vel(p)
    else:
        k1 = vel(p)
        k2 = vel(p + 0.5 * dt * k1)
        k3 = vel(p + 0.5 * dt * k2)
        k4 = vel(p + dt * k3)
        newp = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(newp)):
        raise StepRejected("non-finite state after step")
    return surface.Immersion(imm.chart_id, newp, imm.time + dt, imm.winding)


def _monitor(model, grid, imm):
    geo = surface.surface_geometry(model, grid, imm)
    g = geo.amb["g"]
    vnorm = np.sqrt(np.einsum("ijm,ijmk,ijk->ij", geo.V, g, geo.V))
    rec = {
        "t": imm.time,
        "energy": surface.integrate(grid, geo.lam ** 2 * grid.rho12),
        "sup_lambda": float(geo.lam.max()),
        "inf_lambda": float(geo.lam.min()),
        "sup_A2": float(geo.normA2.max()),
        "max_eta3": float(np.abs(geo.eta[..., 2]).max()),
        "max_eta2_defect": float(np.abs(geo.eta[..., 1] - 1.0 / geo.lam).max()),
        "psi_max": math.nan,
        "star_omega_min": math.nan,
        "s_max": math.nan,
        "II_dist": math.nan,
        "volume": surface.integrate(grid, geo.dmu),
    }
    if model.kind == "eh" and imm.chart_id == ambient.BOLT_CHART:
        from . import analysis  # local import; analysis builds on this module

        tub = analysis.tubular_diagnostics(model, grid, imm, geo=geo)
        rec["psi_max"] = float(tub.psi.max())
        rec["star_omega_min"] = float(tub.star_omega.min())
        rec["s_max"] = float(tub.s.max())
        rec["II_dist"] = float(tub.II_dist.max())
    return MonitorRecord(**rec), float(vnorm.max())


def flow_run(model, grid, imm, config):
    """Integrate the flow; returns a FlowResult."""
    triple = ambient.hyperkahler_at(model)
    records = []
    state = imm.copy()
    status = "reached_t_end"
    steps = 0

    def record_now():
        rec, supv = _monitor(model, grid, state)
        records.append(rec)
        return rec, supv

    try:
        rec, supv = record_now()
        if supv < config.convergence_tol:
            return FlowResult("converged", state, records, 0, state.time, config)
        while steps < config.max_steps and state.time < config.t_end - 1e-15:
            if config.dt_mode == "cfl":
                dt = cfl_dt(model, grid, state, config.cfl_factor, triple)
            else:
                dt = config.dt
            dt = min(dt, config.t_end - state.time)
            state = flow_step(model, grid, state, dt, config.velocity_form,
                              config.integrator, triple)
            steps += 1
            at_end = state.time >= config.t_end - 1e-15
            if steps % config.monitor_every == 0 or at_end:
                rec, supv = record_now()
                if not math.isfinite(rec.energy):
                    status = "blowup_detected"
                    break
                if rec.sup_A2 > config.blowup_A2:
                    status = "blowup_detected"
                    break
                if config.defect_tol is not None and max(
                    rec.max_eta3, rec.max_eta2_defect
                ) > config.defect_tol:
                    status = "defect_exceeded"
                    break
                if supv < config.convergence_tol:
                    status = "converged"
                    break
    except StepRejected:
        status = "blowup_detected"
    except DegenerateImmersion:
        status = "degenerate"
    return FlowResult(status, state, records, steps, state.time, config)


# ----------------------------------------------------------------------
# evolution identity for the calibration functions eta_a
# ----------------------------------------------------------------------

def _orthonormal_change(G):
    """L with E_k = L[k, i] t_i the Gram-Schmidt orthonormal frame."""
    g11 = G[..., 0, 0]
    g12 = G[..., 0, 1]
    g22 = G[..., 1, 1]
    det = g11 * g22 - g12 * g12
    L = np.zeros(G.shape)
    L[..., 0, 0] = 1.0 / np.sqrt(g11)
    L[..., 1, 0] = -g12 / np.sqrt(g11 * det)
    L[..., 1, 1] = np.sqrt(g11 / det)
    return L


def laplace_beltrami(grid, G, Ginv, scalar):
    """Divergence-form surface Laplacian of a node scalar."""
    sq = np.sqrt(G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2)
    d1 = grid_d1(grid, scalar)
    d2 = grid_d2(grid, scalar)
    f1 = sq * (Ginv[..., 0, 0] * d1 + Ginv[..., 0, 1] * d2)
    f2 = sq * (Ginv[..., 1, 0] * d1 + Ginv[..., 1, 1] * d2)
    return (grid_d1(grid, f1) + grid_d2(grid, f2)) / sq


def two_form_evolution_residual(model, grid, imm, label=0, dt=1e-5,
                                velocity_form="moment",
                                include_curvature=True):
    """Residual of the evolution identity for eta = eta_label.

    The left side is d(eta)/dt from two RK4 micro-steps (+dt and -dt);
    the right side is

        lambda^2 [ Lap eta  +  curvature terms  +  eta |A|^2 ]
      + 2 lambda [ E1(lambda) w(H, E2) + E2(lambda) w(E1, H) ]
      + lambda E_i(lambda) [ w(II(E1, E_i), E2) + w(E1, II(E2, E_i)) ]
      - 2 lambda^2 w(nu1, nu2) (hh_{1k1} hh_{2k2} - hh_{1k2} hh_{2k1})

    with w = omegabar_label, II expressed in the orthonormal frames and
    hh_{a k i} = gbar(II(E_k, E_i), nu_a).  The curvature terms are
    sum_k w((Rbar(E1,E_k)E_k)^N, E2) + w(E1, (Rbar(E2,E_k)E_k)^N); they
    vanish for the flat model and can be switched off to measure their
    contribution.  Returns (residual, lhs, rhs) node fields.
    """
    geo = surface.surface_geometry(model, grid, imm)
    sh = imm.points.shape[:2]

    # lhs: central time difference
    ip = flow_step(model, grid, imm, dt, velocity_form)
    im = flow_step(model, grid, imm, -dt, velocity_form)
    eta_p = surface.moment_data(model, grid, ip).eta[..., label]
    eta_m = surface.moment_data(model, grid, im).eta[..., label]
    lhs = (eta_p - eta_m) / (2.0 * dt)

    lam = geo.lam
    eta = geo.eta[..., label]
    L = _orthonormal_change(geo.G)

    # frame components of all the players
    C = geo.amb["coframe"]
    Om = geo.triple.omegas()[label]

    def fr(X):
        return np.einsum("ijam,ijm->ija", C, X)

    E1f = fr(geo.E1)
    E2f = fr(geo.E2)
    nu1f = fr(geo.normal[..., 0, :])
    nu2f = fr(geo.normal[..., 1, :])

    def w(Xf, Yf):
        return np.einsum("ija,ab,ijb->ij", Xf, Om, Yf)

    # second fundamental form on the orthonormal tangent frame
    hfr = np.einsum("ijka,ijlb,ijabm->ijklm", L, L, geo.h)  # II(E_k, E_l)
    hhat = np.stack(
        [
            np.einsum("ijklm,ijmz,ijz->ijkl", hfr, geo.amb["g"],
                      geo.normal[..., 0, :]),
            np.einsum("ijklm,ijmz,ijz->ijkl", hfr, geo.amb["g"],
                      geo.normal[..., 1, :]),
        ],
        axis=2,
    )  # (n1, n2, alpha, k, l)

    dl = np.stack([grid_d1(grid, lam), grid_d2(grid, lam)], axis=-1)
    elam = np.einsum("ijab,ijb->ija", L, dl)  # E_k(lambda)

    rhs = lam ** 2 * (laplace_beltrami(grid, geo.G, geo.Ginv, eta)
                      + eta * geo.normA2)

    if include_curvature and model.kind == "eh":
        coords = imm.points.reshape(-1, 4)
        if imm.chart_id == ambient.BOLT_CHART:
            s = model.c ** 0.25 / 2.0
            ubar = np.hypot(coords[:, 0], coords[:, 1])
            u = backend.u_from_ubar(ubar, s)
            aval = -2.0 / (math.sqrt(model.c) * np.cosh(u) ** 3)
        else:
            r = coords[:, 0]
            A = 1.0 - model.c / r ** 4
            aval = (2.0 * A - 2.0) / (r * r)
        Rbase = ambient._eh_frame_curvature(1.0)
        Rf = aval.reshape(sh)[..., None, None, None, None] * Rbase
        nus = np.stack([nu1f, nu2f], axis=2)  # (n1, n2, alpha, a)
        Es = np.stack([E1f, E2f], axis=2)
        # sum_k Rbar(E1, Ek, Ek, nu_alpha) and the E2 counterpart
        R1 = np.einsum("ijabcd,ija,ijkb,ijkc,ijnd->ijn", Rf, E1f, Es, Es, nus)
        R2 = np.einsum("ijabcd,ija,ijkb,ijkc,ijnd->ijn", Rf, E2f, Es, Es, nus)
        wn_e2 = np.einsum("ijna,ab,ijb->ijn", nus, Om, E2f)
        we1_n = np.einsum("ija,ab,ijnb->ijn", E1f, Om, nus)
        rhs = rhs + lam ** 2 * (
            np.einsum("ijn,ijn->ij", R1, wn_e2)
            + np.einsum("ijn,ijn->ij", R2, we1_n)
        )

    Hf = fr(geo.H)
    rhs = rhs + 2.0 * lam * (elam[..., 0] * w(Hf, E2f)
                             + elam[..., 1] * w(E1f, Hf))

    # lambda E_i(lambda) [ w(II(E1,E_i), E2) + w(E1, II(E2,E_i)) ]
    for i in range(2):
        t1_term = fr(hfr[..., 0, i, :])
        t2_term = fr(hfr[..., 1, i, :])
        rhs = rhs + lam * elam[..., i] * (
            np.einsum("ija,ab,ijb->ij", t1_term, Om, E2f)
            + np.einsum("ija,ab,ijb->ij", E1f, Om, t2_term)
        )

    om34 = w(nu1f, nu2f)
    quad = np.einsum("ijkl,ijkm->ijlm", hhat[..., 0, :, :], hhat[..., 1, :, :])
    cross = quad[..., 0, 1] - quad[..., 1, 0]
    rhs = rhs - 2.0 * lam ** 2 * om34 * cross

    return lhs - rhs, lhs, rhs
