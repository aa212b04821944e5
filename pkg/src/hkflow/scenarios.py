"""Reproducible initial data and the preset experiment catalog.

Generators build graphs of exact one-forms - those are Lagrangian for the
relevant Kahler form, in flat space to machine precision and over the
bolt sphere up to an identification error that the reports measure.  No
generator projects its output onto the special class; each one returns
the measured initial defects instead.
"""

import math

import numpy as np

from . import ambient, surface
from .errors import (AmplitudeTooLarge, BadPotential, BadTopology,
                     UnknownPreset)
from .flow import FlowConfig

SQ2 = math.sqrt(2.0)

_TUBE_AMPLITUDE_U = 1.5


def potential_cos_cos(X1, X2):
    return np.cos(X1) * np.cos(X2)


def potential_zero(X1, X2):
    return np.zeros_like(X1)


def one_form_y20(theta, phi):
    # zonal l=2 harmonic, normalized on the unit sphere
    return math.sqrt(5.0 / (16.0 * math.pi)) * (3.0 * np.cos(theta) ** 2 - 1.0)


_FLAT_POTENTIALS = {"coscos": potential_cos_cos, "zero": potential_zero}
_EH_POTENTIALS = {"y20": one_form_y20}


def _resolve_potential(potential, table, default):
    if potential is None:
        potential = default
    if callable(potential):
        return potential, getattr(potential, "__name__", "custom")
    try:
        return table[potential], potential
    except KeyError:
        raise BadPotential("unknown potential %r (have %s)"
                           % (potential, sorted(table)))


def _spectral_gradient(u, n):
    k = np.fft.fftfreq(n, d=1.0 / n) * 1j
    uh = np.fft.fft2(u)
    d1 = np.real(np.fft.ifft2(uh * k[:, None]))
    d2 = np.real(np.fft.ifft2(uh * k[None, :]))
    return d1, d2


def random_band_potential(seed, k_max=2, n_modes=4):
    """Random trigonometric polynomial, normalized to unit max gradient.

    The normalization keeps graphs built from it at a fixed steepness,
    so finite-difference truncation error stays comparable across seeds.
    """
    rng = np.random.default_rng(seed)
    ks = [(k1, k2) for k1 in range(-k_max, k_max + 1)
          for k2 in range(-k_max, k_max + 1) if (k1, k2) != (0, 0)]
    sel = [ks[i] for i in rng.choice(len(ks), size=n_modes, replace=False)]
    amps = rng.normal(size=n_modes)
    phis = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    xs = np.linspace(0.0, 2.0 * np.pi, 101)
    P1, P2 = np.meshgrid(xs, xs, indexing="ij")
    g1 = np.zeros(P1.shape)
    g2 = np.zeros(P1.shape)
    for (k1, k2), a, p in zip(sel, amps, phis):
        s = np.sin(k1 * P1 + k2 * P2 + p)
        g1 -= a * k1 * s
        g2 -= a * k2 * s
    scale = 1.0 / max(1e-9, float(np.hypot(g1, g2).max()))

    def u(x1, x2):
        out = np.zeros(np.broadcast(x1, x2).shape)
        for (k1, k2), a, p in zip(sel, amps, phis):
            out = out + scale * a * np.cos(k1 * x1 + k2 * x2 + p)
        return out

    return u


def make_first_variation_pair(n=128, eps=0.25, seed=0, noise=0.5):
    """Random flat graph plus a deformation field for energy checks.

    The deformation is the flow velocity of the state plus band-limited
    noise; the velocity component guarantees the energy actually moves,
    so relative comparisons between the closed-form derivative and the
    difference quotient are meaningful for every seed.  Returns
    (model, grid, imm, T) with T an (n, n, 4) coordinate field.
    """
    from . import flow as _flow

    rng = np.random.default_rng(seed)
    grid = surface.build_grid("torus", n, n, fd_order=4)
    model, imm, _ = make_flat_lagrangian_graph(
        grid, random_band_potential(seed), eps=eps)
    X1, X2 = grid.mesh()
    V = _flow.velocity(model, grid, imm)
    vmax = float(np.abs(V).max())
    T = V.copy()
    for m in range(4):
        k1, k2 = rng.integers(-2, 3, size=2)
        T[..., m] += (noise * vmax * rng.normal()
                      * np.cos(k1 * X1 + k2 * X2
                               + rng.uniform(0.0, 2.0 * np.pi)))
    return model, grid, imm, T


def make_flat_lagrangian_graph(grid, potential=None, eps=0.1,
                               rho_rule="pullback_omega2"):
    """Graph (x1, x2, eps d1 u, -eps d2 u) of a periodic potential.

    The last two components are the index mapping that makes gradient
    graphs Lagrangian for the omega_3 of the flat model.  Returns
    (model, immersion, report); the grid's rho is set per rho_rule
    ('unit', 'pullback_omega2', 'induced_dmu')."""
    if grid.topology != "torus":
        raise BadTopology("flat graphs live on the torus grid")
    fn, name = _resolve_potential(potential, _FLAT_POTENTIALS, "coscos")
    X1, X2 = grid.mesh()
    u = np.asarray(fn(X1, X2), dtype=float)
    if u.shape != X1.shape or not np.all(np.isfinite(u)):
        raise BadPotential("potential must return finite values on the grid")
    # periodicity check on shifted sample lines
    probe = np.asarray(fn(X1 + 2.0 * np.pi, X2))
    probe2 = np.asarray(fn(X1, X2 + 2.0 * np.pi))
    if (np.abs(probe - u).max() > 1e-9) or (np.abs(probe2 - u).max() > 1e-9):
        raise BadPotential("potential is not 2*pi periodic")

    d1u, d2u = _spectral_gradient(u, grid.n1)
    pts = np.stack([X1, X2, eps * d1u, -eps * d2u], axis=-1)
    wind = np.zeros((2, 4))
    wind[0, 0] = 1.0
    wind[1, 1] = 1.0
    imm = surface.Immersion(ambient.FLAT_CHART, pts, winding=wind)
    model = ambient.flat_model()

    grid.rho12 = np.ones_like(X1)
    md = surface.moment_data(model, grid, imm)
    if rho_rule == "pullback_omega2":
        grid.rho12 = md.N[..., 1].copy()
    elif rho_rule == "induced_dmu":
        grid.rho12 = md.dmu.copy()
    elif rho_rule != "unit":
        raise BadPotential("unknown rho rule %r" % (rho_rule,))
    md = surface.moment_data(model, grid, imm)
    report = {
        "potential": name,
        "eps": eps,
        "rho_rule": rho_rule,
        "max_eta3": float(np.abs(md.eta[..., 2]).max()),
        "max_eta2_defect": float(np.abs(md.eta[..., 1] * md.lam - 1.0).max()),
        "sup_lambda": float(md.lam.max()),
        "energy": float(surface.integrate(grid, md.lam ** 2 * grid.rho12)),
    }
    return model, imm, report


def make_eh_zero_section(c, grid):
    """The bolt sphere itself: nodes at ubar = 0, rho = the induced area
    density (which equals (sqrt(c)/4) sin(theta) exactly)."""
    if grid.topology != "sphere":
        raise BadTopology("the zero section needs a sphere grid")
    model = ambient.eh_model(c)
    X1, X2 = grid.mesh()
    zero = np.zeros_like(X1)
    pts = np.stack([zero, zero, X2, X1], axis=-1)
    wind = np.zeros((2, 4))
    wind[0, 3] = 1.0
    imm = surface.Immersion(ambient.BOLT_CHART, pts, winding=wind)
    grid.rho12 = np.ones_like(X1)
    md = surface.moment_data(model, grid, imm)
    grid.rho12 = md.dmu.copy()
    md = surface.moment_data(model, grid, imm)
    g = md.amb["g"]
    vnorm = np.sqrt(np.einsum("ijm,ijmk,ijk->ij", md.V, g, md.V))
    report = {
        "c": c,
        "area": float(surface.integrate(grid, md.dmu)),
        "sup_velocity": float(vnorm.max()),
        "lambda_defect": float(np.abs(md.lam - 1.0).max()),
    }
    return model, imm, report


def make_eh_graph_perturbation(c, grid, one_form_potential=None, eps=0.05,
                               rho_rule="induced_dmu"):
    """Zero section displaced along the normal bundle by the graph of
    eps * da: the one-form components in the orthonormal coframe of the
    bolt sphere become fiber displacements in the (e0, e3) directions.

        v1 = eps * (d_phi a) / (s sin theta),   v2 = -eps * (d_theta a) / s

    Raises AmplitudeTooLarge when that leaves the tube (u > 1.5)."""
    if grid.topology != "sphere":
        raise BadTopology("perturbed sections need a sphere grid")
    fn, name = _resolve_potential(one_form_potential, _EH_POTENTIALS, "y20")
    model = ambient.eh_model(c)
    s = c ** 0.25 / 2.0
    X1, X2 = grid.mesh()      # x1 = phi, x2 = theta
    h = 1e-6
    da_dth = (np.asarray(fn(X2 + h, X1)) - np.asarray(fn(X2 - h, X1))) / (2 * h)
    da_dph = (np.asarray(fn(X2, X1 + h)) - np.asarray(fn(X2, X1 - h))) / (2 * h)
    v1 = eps * da_dph / (s * np.sin(X2))
    v2 = -eps * da_dth / s
    ubar = np.hypot(v1, v2)
    from . import backend
    u = backend.u_from_ubar(ubar.ravel(), s).reshape(ubar.shape)
    if float(u.max()) > _TUBE_AMPLITUDE_U:
        raise AmplitudeTooLarge(
            "perturbation reaches u = %.3f > %.1f"
            % (u.max(), _TUBE_AMPLITUDE_U)
        )
    pts = np.stack([v1, v2, X2, X1], axis=-1)
    wind = np.zeros((2, 4))
    wind[0, 3] = 1.0
    imm = surface.Immersion(ambient.BOLT_CHART, pts, winding=wind)

    grid.rho12 = np.ones_like(X1)
    md = surface.moment_data(model, grid, imm)
    if rho_rule == "induced_dmu":
        grid.rho12 = md.dmu.copy()
    elif rho_rule == "pullback_omega2":
        grid.rho12 = (md.N[..., 1]).copy()
    elif rho_rule != "unit":
        raise BadPotential("unknown rho rule %r" % (rho_rule,))
    md = surface.moment_data(model, grid, imm)

    from . import analysis
    td = analysis.tubular_diagnostics(model, grid, imm)
    report = {
        "c": c,
        "potential": name,
        "eps": eps,
        "rho_rule": rho_rule,
        "max_eta3": float(np.abs(md.eta[..., 2]).max()),
        "max_eta2_defect": float(np.abs(md.eta[..., 1] * md.lam - 1.0).max()),
        "psi_max": float(td.psi.max()),
        "s_max": float(td.s.max()),
        "one_minus_star_min": float((1.0 - td.star_omega).max()),
        "II_dist_max": float(td.II_dist.max()),
    }
    return model, imm, report


class ScenarioSpec:
    """A fully-determined initial-data recipe (bit-reproducible)."""

    def __init__(self, name, kind, c=1.0, topology="torus", n1=64, n2=64,
                 eps=0.1, potential=None, seed=0,
                 rho_rule="pullback_omega2", fd_order=2, extra=None):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.name = name
        self.kind = kind
        self.c = c
        self.topology = topology
        self.n1 = n1
        self.n2 = n2
        self.eps = eps
        self.potential = potential
        self.seed = seed
        self.rho_rule = rho_rule
        self.fd_order = fd_order
        self.extra = dict(extra or {})

    def as_dict(self):
        d = {
            "name": self.name, "kind": self.kind, "c": self.c,
            "topology": self.topology, "n1": self.n1, "n2": self.n2,
            "eps": self.eps,
            "potential": self.potential if isinstance(self.potential, str)
            else ("custom" if self.potential else None),
            "seed": self.seed, "rho_rule": self.rho_rule,
            "fd_order": self.fd_order,
        }
        d.update(self.extra)
        return d

    def build(self):
        """Instantiate (model, grid, immersion, report)."""
        grid = surface.build_grid(self.topology, self.n1, self.n2,
                                  fd_order=self.fd_order)
        if self.kind == "flat":
            model, imm, rep = make_flat_lagrangian_graph(
                grid, self.potential, self.eps, self.rho_rule)
        elif self.kind == "eh" and self.eps == 0.0:
            model, imm, rep = make_eh_zero_section(self.c, grid)
        elif self.kind == "eh":
            model, imm, rep = make_eh_graph_perturbation(
                self.c, grid, self.potential, self.eps, self.rho_rule)
        else:
            raise UnknownPreset("no generator for kind %r" % (self.kind,))
        return model, grid, imm, rep


class Preset:
    def __init__(self, name, description, scenario, flow_config, expect):
        self.name = name
        self.description = description
        self.scenario = scenario
        self.flow_config = flow_config
        self.expect = list(expect)


def _catalog():
    return {
        "ambient-checks": Preset(
            "ambient-checks",
            "run the full ambient validation battery on both models",
            ScenarioSpec("ambient-checks", "ambient", extra={
                "models": [["flat", 1.0], ["eh", 1.0], ["eh", 16.0]],
            }),
            None,
            ["quaternion residuals <= 1e-12",
             "structure equations converge at order >= 1.9",
             "Ricci residual <= 1e-6"],
        ),
        "flat-special": Preset(
            "flat-special",
            "Lagrangian gradient graph in the flat 4-torus, run to t = 1",
            ScenarioSpec("flat-special", "flat", topology="torus",
                         n1=64, n2=64, eps=0.1, potential="coscos",
                         rho_rule="pullback_omega2"),
            FlowConfig(integrator="rk4", dt_mode="cfl", cfl_factor=0.2,
                       t_end=1.0, monitor_every=50),
            ["max|eta3| <= 1e-4 throughout",
             "max|eta2 - 1/lambda| <= 1e-4 throughout",
             "energy and sup lambda non-increasing per record"],
        ),
        "eh-stability-report": Preset(
            "eh-stability-report",
            "curvature and stability tables for the Eguchi-Hanson bolt",
            ScenarioSpec("eh-stability-report", "eh", c=1.0,
                         topology="sphere", n1=64, n2=32, eps=0.0,
                         extra={"r_values": [1.01, 1.1, SQ2, 2.0, 5.0]}),
            None,
            ["R^0_1 coefficient at r = sqrt(2) equals -0.25",
             "stability eigenvalues at the bolt equal 4/sqrt(c)"],
        ),
        "eh-convergence": Preset(
            "eh-convergence",
            "perturbed bolt section flowing back to the zero section",
            ScenarioSpec("eh-convergence", "eh", c=1.0, topology="sphere",
                         n1=64, n2=32, eps=0.05, potential="y20",
                         rho_rule="induced_dmu"),
            FlowConfig(integrator="rk4", dt_mode="cfl", cfl_factor=1.0,
                       t_end=0.09, monitor_every=300),
            ["psi_max decreases by factor >= 10",
             "1 - star_omega_min decreases by factor >= 10",
             "II_dist decreases by factor >= 5"],
        ),
    }


def preset_names():
    return sorted(_catalog())


def preset(name):
    try:
        return _catalog()[name]
    except KeyError:
        raise UnknownPreset("unknown preset %r (have %s)"
                            % (name, ", ".join(preset_names())))
