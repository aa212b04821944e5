"""Energy functional, its variations, and the diagnostic machinery.

Everything here is evaluated two ways whenever that is possible: once
through a closed-form expression in the induced geometry, once through
plain finite differences of the energy itself.  The two routes are kept
separate on purpose; tests compare them and none of them is allowed to
silently reuse the other's intermediate results.
"""

import math

import numpy as np

from . import ambient, backend, flow, surface
from .errors import NotCritical, NotSpecial, OutsideTube
from .surface import grid_d1, grid_d2, integrate


def energy(model, grid, imm):
    """E = integral of lambda^2 rho over the surface."""
    md = surface.moment_data(model, grid, imm)
    return integrate(grid, md.lam ** 2 * grid.rho12)


def energy_split(model, grid, imm):
    """E again, but as the sum of the three moment-map norms
    sum_a |N_a|^2_{L^2(rho)}; agrees with energy() pointwise because
    sum_a N_a^2 = lambda^2 exactly."""
    md = surface.moment_data(model, grid, imm)
    parts = [integrate(grid, md.N[..., a] ** 2 * grid.rho12) for a in range(3)]
    return sum(parts), parts


class VariationField:
    """An ambient-coordinate vector field along the surface."""

    def __init__(self, vec, name=""):
        vec = np.asarray(vec, dtype=float)
        self.vec = vec
        self.name = name


def _displaced(imm, var, eps):
    return surface.Immersion(
        imm.chart_id, imm.points + eps * var.vec, imm.time, imm.winding
    )


def first_variation(model, grid, imm, var, eps=None):
    """dE/dt for the deformation f + t T, both in closed form

        dE/dt = int [ -2 gbar(lambda grad lambda, T)
                      - 2 lambda^2 gbar(T, H) ] rho

    and by central finite differences of the energy.  Returns a dict with
    'analytic', 'fd', 'rel_err', 'eps'."""
    geo = surface.surface_geometry(model, grid, imm)
    g = geo.amb["g"]
    T = var.vec
    gTgrad = np.einsum("ijm,ijmk,ijk->ij", T, g, geo.grad_lambda)
    gTH = np.einsum("ijm,ijmk,ijk->ij", T, g, geo.H)
    analytic = integrate(
        grid, (-2.0 * geo.lam * gTgrad - 2.0 * geo.lam ** 2 * gTH) * grid.rho12
    )
    if eps is None:
        eps = np.finfo(float).eps ** (1.0 / 3.0) / max(
            1e-12, float(np.abs(T).max())
        )
    ep = energy(model, grid, _displaced(imm, var, eps))
    em = energy(model, grid, _displaced(imm, var, -eps))
    fd = (ep - em) / (2.0 * eps)
    denom = max(abs(analytic), abs(fd), 1e-14)
    return {
        "analytic": analytic,
        "fd": fd,
        "rel_err": abs(analytic - fd) / denom,
        "eps": eps,
    }


def _frame_components(geo, X):
    return np.einsum("ijam,ijm->ija", geo.amb["coframe"], X)


def _covariant_along(grid, geo, T):
    """nabla_{t_j} T for j = 1, 2 (coordinate directions)."""
    dT1 = grid_d1(grid, T)
    dT2 = grid_d2(grid, T)
    gam = geo.amb["gamma"]
    c1 = dT1 + np.einsum("ijmab,ija,ijb->ijm", gam, geo.t1, T)
    c2 = dT2 + np.einsum("ijmab,ija,ijb->ijm", gam, geo.t2, T)
    return c1, c2


def _eh_curvature_field(model, imm):
    """Closed-form frame curvature tensor at every node, (n1,n2,4,4,4,4)."""
    sh = imm.points.shape[:2]
    coords = imm.points.reshape(-1, 4)
    if imm.chart_id == ambient.BOLT_CHART:
        s = model.c ** 0.25 / 2.0
        u = backend.u_from_ubar(np.hypot(coords[:, 0], coords[:, 1]), s)
        aval = -2.0 / (math.sqrt(model.c) * np.cosh(u) ** 3)
    else:
        r = coords[:, 0]
        A = 1.0 - model.c / r ** 4
        aval = (2.0 * A - 2.0) / (r * r)
    base = ambient._eh_frame_curvature(1.0)
    return aval.reshape(sh)[..., None, None, None, None] * base


def second_variation_critical(model, grid, imm, var, crit_tol=1e-6,
                              eps=None):
    """d^2 E/dt^2 at a critical point, closed form

        int lambda^2 [ -2 sum_{ij} gbar(T, A_ij)^2
                       + 2 sum_i gbar(Rbar(T, e_i) T, e_i)
                       + 2 sum_{i,alpha} gbar(nabla_{e_i} T, nu_alpha)^2 ] rho

    against the plain second difference of the energy along the
    coordinate-displacement path f + t T (path independence at critical
    points makes that particular path legitimate).  Raises NotCritical
    when the flow velocity does not vanish.  Returns the two values and
    the term breakdown."""
    geo = surface.surface_geometry(model, grid, imm)
    g = geo.amb["g"]
    vnorm = np.sqrt(np.einsum("ijm,ijmk,ijk->ij", geo.V, g, geo.V))
    if float(vnorm.max()) > crit_tol:
        raise NotCritical(
            "sup |V| = %.3e exceeds %.1e" % (vnorm.max(), crit_tol)
        )
    T = var.vec
    L = flow._orthonormal_change(geo.G)

    # -2 sum_{ij} gbar(T, A_ij)^2 over the orthonormal tangent frame
    hfr = np.einsum("ijka,ijlb,ijabm->ijklm", L, L, geo.h)
    TA = np.einsum("ijm,ijmz,ijklz->ijkl", T, g, hfr)
    term_A = -2.0 * (TA ** 2).sum(axis=(-1, -2))

    # +2 sum_i Rbar(T, E_i, T, E_i)
    if model.kind == "eh":
        Rf = _eh_curvature_field(model, imm)
        Tf = _frame_components(geo, T)
        Es = np.stack([_frame_components(geo, geo.E1),
                       _frame_components(geo, geo.E2)], axis=2)
        term_R = 2.0 * np.einsum(
            "ijabcd,ija,ijkb,ijc,ijkd->ij", Rf, Tf, Es, Tf, Es
        )
    else:
        term_R = np.zeros_like(geo.lam)

    # +2 sum_{i,alpha} gbar(nabla_{E_i} T, nu_alpha)^2
    c1, c2 = _covariant_along(grid, geo, T)
    cco = np.stack([c1, c2], axis=2)          # nabla_{t_j} T
    cE = np.einsum("ijkl,ijlm->ijkm", L, cco)  # nabla_{E_k} T
    cn = np.einsum("ijkm,ijmz,ijaz->ijka", cE, g, geo.normal)
    term_grad = 2.0 * (cn ** 2).sum(axis=(-1, -2))

    integrand = geo.lam ** 2 * (term_A + term_R + term_grad) * grid.rho12
    analytic = integrate(grid, integrand)
    parts = {
        "second_fundamental": integrate(
            grid, geo.lam ** 2 * term_A * grid.rho12
        ),
        "curvature": integrate(grid, geo.lam ** 2 * term_R * grid.rho12),
        "normal_gradient": integrate(
            grid, geo.lam ** 2 * term_grad * grid.rho12
        ),
    }

    if eps is None:
        eps = np.finfo(float).eps ** 0.25 / max(1e-12, float(np.abs(T).max()))
    e0 = energy(model, grid, imm)
    ep = energy(model, grid, _displaced(imm, var, eps))
    em = energy(model, grid, _displaced(imm, var, -eps))
    fd = (ep - 2.0 * e0 + em) / (eps * eps)
    denom = max(abs(analytic), abs(fd), 1e-14)
    return {
        "analytic": analytic,
        "fd": fd,
        "rel_err": abs(analytic - fd) / denom,
        "eps": eps,
        "parts": parts,
    }


class StabilityForm:
    def __init__(self, M, min_eigenvalue, global_min, gauss):
        self.M = M
        self.min_eigenvalue = min_eigenvalue
        self.global_min = global_min
        self.gauss = gauss


def intrinsic_gauss_curvature(grid, G):
    """Gauss curvature of the induced metric by nested grid stencils."""
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2
    Ginv = np.empty_like(G)
    Ginv[..., 0, 0] = G[..., 1, 1] / det
    Ginv[..., 1, 1] = G[..., 0, 0] / det
    Ginv[..., 0, 1] = -G[..., 0, 1] / det
    Ginv[..., 1, 0] = -G[..., 0, 1] / det
    dG = np.stack([grid_d1(grid, G), grid_d2(grid, G)], axis=2)  # [m,a,b]
    # Gamma^k_ij = 1/2 Ginv^{kl} (d_i G_jl + d_j G_il - d_l G_ij)
    gam = np.zeros(G.shape[:2] + (2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                acc = 0.0
                for l in range(2):
                    acc = acc + Ginv[..., k, l] * (
                        dG[:, :, i, j, l] + dG[:, :, j, i, l] - dG[:, :, l, i, j]
                    )
                gam[..., k, i, j] = 0.5 * acc
    dgam = np.stack([grid_d1(grid, gam), grid_d2(grid, gam)], axis=2)
    # R^l_{k12} = d_1 Gam^l_{2k} - d_2 Gam^l_{1k} + quadratic terms
    Rup = (
        dgam[:, :, 0, :, 1, :]
        - dgam[:, :, 1, :, 0, :]
        + np.einsum("ijlm,ijmk->ijlk", gam[..., :, 0, :], gam[..., :, 1, :])
        - np.einsum("ijlm,ijmk->ijlk", gam[..., :, 1, :], gam[..., :, 0, :])
    )  # [l, k]
    R1221 = G[..., 0, 0] * Rup[..., 0, 1] + G[..., 1, 0] * Rup[..., 1, 1]
    return R1221 / det


def stability_form(model, grid, imm, geo=None):
    """The normal-bundle stability form

        M_ab = sum_i Rbar(E_i, nu_a, E_i, nu_b) - sum_{ij} hh_{aij} hh_{bij}

    per node, its eigenvalue fields, and (for comparison) the intrinsic
    Gauss curvature: on special minimal surfaces M = K * Id."""
    if geo is None:
        geo = surface.surface_geometry(model, grid, imm)
    g = geo.amb["g"]
    L = flow._orthonormal_change(geo.G)
    hfr = np.einsum("ijka,ijlb,ijabm->ijklm", L, L, geo.h)
    hhat = np.einsum("ijklm,ijmz,ijaz->ijakl", hfr, g, geo.normal)
    MA = np.einsum("ijakl,ijbkl->ijab", hhat, hhat)
    if model.kind == "eh":
        Rf = _eh_curvature_field(model, imm)
        Es = np.stack([_frame_components(geo, geo.E1),
                       _frame_components(geo, geo.E2)], axis=2)
        nus = np.einsum("ijam,ijkm->ijka", geo.amb["coframe"],
                        geo.normal)  # frame comps of nu_k
        MR = np.einsum("ijabcd,ijka,ijnb,ijkc,ijmd->ijnm",
                       Rf, Es, nus, Es, nus)
    else:
        MR = np.zeros(MA.shape)
    M = MR - MA
    tr = M[..., 0, 0] + M[..., 1, 1]
    disc = np.sqrt(
        np.maximum((M[..., 0, 0] - M[..., 1, 1]) ** 2
                   + 4.0 * M[..., 0, 1] * M[..., 1, 0], 0.0)
    )
    min_eig = 0.5 * (tr - disc)
    gauss = intrinsic_gauss_curvature(grid, geo.G)
    return StabilityForm(M, min_eig, float(min_eig.min()), gauss)


def adapted_frame_residual(model, grid, imm, special_tol=1e-4):
    """For special immersions, check the representation of the three
    Kahler forms in the adapted frame (E1, E2, nu1, nu2), nu_i = J3 E_i:

        w1 = [[0, n, 0, -q], [-n, 0, q, 0], [0, -q, 0, -n], [q, 0, n, 0]]
        w2 = [[0, q, 0, n], [-q, 0, -n, 0], [0, n, 0, -q], [-n, 0, q, 0]]
        w3 = [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]]

    with n = eta_1 and q = 1/lambda, and the lambda-gradient identity
    E_k(lambda) = -lambda^2 eta_1 (hh_{1k1} + hh_{2k2}).  Returns the
    max-norm residual of each.  Raises NotSpecial when the immersion is
    not special to within special_tol."""
    geo = surface.surface_geometry(model, grid, imm)
    defect = max(
        float(np.abs(geo.eta[..., 2]).max()),
        float(np.abs(geo.eta[..., 1] * geo.lam - 1.0).max()),
    )
    if defect > special_tol:
        raise NotSpecial("special-immersion defect %.3e > %.1e"
                         % (defect, special_tol))
    g = geo.amb["g"]
    jay3 = geo.jay_c[..., 2, :, :]
    nu1 = np.einsum("ijmk,ijk->ijm", jay3, geo.E1)
    nu2 = np.einsum("ijmk,ijk->ijm", jay3, geo.E2)
    basis = np.stack([geo.E1, geo.E2, nu1, nu2], axis=2)  # (n1,n2,4,4)

    eta1 = geo.eta[..., 0]
    q = 1.0 / geo.lam
    n1, n2 = geo.lam.shape
    zero = np.zeros_like(eta1)
    one = np.ones_like(eta1)
    w1 = np.stack([
        np.stack([zero, eta1, zero, -q], -1),
        np.stack([-eta1, zero, q, zero], -1),
        np.stack([zero, -q, zero, -eta1], -1),
        np.stack([q, zero, eta1, zero], -1),
    ], -2)
    w2 = np.stack([
        np.stack([zero, q, zero, eta1], -1),
        np.stack([-q, zero, -eta1, zero], -1),
        np.stack([zero, eta1, zero, -q], -1),
        np.stack([-eta1, zero, q, zero], -1),
    ], -2)
    w3 = np.stack([
        np.stack([zero, zero, one, zero], -1),
        np.stack([zero, zero, zero, one], -1),
        np.stack([-one, zero, zero, zero], -1),
        np.stack([zero, -one, zero, zero], -1),
    ], -2)
    want = (w1, w2, w3)

    Om_coord = np.einsum(
        "ijcm,acd,ijdk->ijamk",
        geo.amb["coframe"], geo.triple.omegas(), geo.amb["coframe"],
    )
    res = []
    for a in range(3):
        got = np.einsum(
            "ijum,ijmk,ijvk->ijuv", basis, Om_coord[:, :, a], basis
        )
        res.append(float(np.abs(got - want[a]).max()))

    # lambda-gradient identity in the adapted frame
    L = flow._orthonormal_change(geo.G)
    hfr = np.einsum("ijka,ijlb,ijabm->ijklm", L, L, geo.h)
    normal = np.stack([nu1, nu2], axis=2)
    hhat = np.einsum("ijklm,ijmz,ijaz->ijakl", hfr, g, normal)
    dl = np.stack([grid_d1(grid, geo.lam), grid_d2(grid, geo.lam)], axis=-1)
    elam = np.einsum("ijab,ijb->ija", L, dl)
    rhs = -geo.lam[..., None] ** 2 * eta1[..., None] * (
        hhat[..., 0, :, 0] + hhat[..., 1, :, 1]
    )
    res_lam = float(np.abs(elam - rhs).max())
    return {
        "omega1": res[0],
        "omega2": res[1],
        "omega3": res[2],
        "lambda_gradient": res_lam,
        "defect": defect,
    }


class TubularDiagnostics:
    def __init__(self, psi, cos_theta, s, star_omega, II_dist, S_norm):
        self.psi = psi
        self.cos_theta = cos_theta
        self.s = s
        self.star_omega = star_omega
        self.II_dist = II_dist
        self.S_norm = S_norm


# frame matrix of the reference two-form Omega = -w1 ^ w2 (the transported
# bolt area form; positive on surfaces aligned with the zero section)
_OMEGA_REF = np.zeros((4, 4))
_OMEGA_REF[1, 2] = -1.0
_OMEGA_REF[2, 1] = 1.0

_TUBE_U_MAX = 5.0


def tubular_diagnostics(model, grid, imm, geo=None):
    """Distance-to-bolt diagnostics of a bolt-chart surface.

    psi: squared tube distance (exactly v1^2 + v2^2: rays from the bolt
    in the normal-disc coordinates are unit-speed geodesics).
    cos_theta: singular values of the projection of the tangent plane
    onto the horizontal (sphere) directions of the transported frame.
    s: sqrt(1 - min(cos_theta)^2).  star_omega: Omega(E1, E2) for the
    transported bolt area form.  II_dist: Frobenius norm of the second
    fundamental form on orthonormal frames (the zero section's vanishes,
    so this is the distance between the two).  S_norm: size of the
    curvature coupling y^beta Rbar_{alpha i j beta} at the foot point.
    """
    if model.kind != "eh" or imm.chart_id != ambient.BOLT_CHART:
        raise OutsideTube("tubular diagnostics need a bolt-chart surface")
    s_bolt = model.c ** 0.25 / 2.0
    v1 = imm.points[..., 0]
    v2 = imm.points[..., 1]
    psi = v1 * v1 + v2 * v2
    u = backend.u_from_ubar(np.sqrt(psi).ravel(), s_bolt).reshape(psi.shape)
    if float(u.max()) > _TUBE_U_MAX:
        raise OutsideTube("surface leaves the tube (max u = %.3f)" % u.max())
    if geo is None:
        geo = surface.surface_geometry(model, grid, imm)

    E1f = _frame_components(geo, geo.E1)
    E2f = _frame_components(geo, geo.E2)
    B = np.stack([E1f[..., 1:3], E2f[..., 1:3]], axis=-2)  # (n1,n2,2,2)
    sv = np.linalg.svd(B, compute_uv=False)
    cos_theta = np.clip(sv, 0.0, 1.0)
    s_field = np.sqrt(np.maximum(1.0 - cos_theta[..., -1] ** 2, 0.0))
    star = np.einsum("ija,ab,ijb->ij", E1f, _OMEGA_REF, E2f)
    II_dist = np.sqrt(np.maximum(geo.normA2, 0.0))

    # curvature coupling at the foot: y in the vertical frame directions
    # (e0, e3) has components (v1, -v2)
    a_bolt = -2.0 / math.sqrt(model.c)
    Rbolt = ambient._eh_frame_curvature(a_bolt)
    yfr = np.stack([v1, -v2], axis=-1)
    Rv = Rbolt[np.ix_([0, 3], [1, 2], [1, 2], [0, 3])]  # [alpha,i,j,beta]
    S = np.einsum("aijb,xyb->xyaij", Rv, yfr)
    S_norm = np.sqrt((S ** 2).sum(axis=(-1, -2, -3)))
    return TubularDiagnostics(psi, cos_theta, s_field, star, II_dist, S_norm)


def random_tube_samples(model, n, seed=0, u_max=0.3):
    """Random (point, oriented 2-plane) pairs inside the tube with
    Omega(plane) > 0, for the Hessian positivity check."""
    rng = np.random.default_rng(seed)
    s = model.c ** 0.25 / 2.0
    out = []
    while len(out) < n:
        u = rng.uniform(0.0, u_max)
        ubar = s * float(backend.g_of_u(u))
        ang = rng.uniform(0.0, 2.0 * np.pi)
        th = rng.uniform(0.3, np.pi - 0.3)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        x = np.array([ubar * math.cos(ang), ubar * math.sin(ang), th, ph])
        geo = ambient.chart_geometry(model, ambient.BOLT_CHART, x[None])
        g = geo["g"][0]
        C = geo["coframe"][0]
        om = C.T @ _OMEGA_REF @ C
        X = rng.standard_normal(4)
        Y = rng.standard_normal(4)
        X = X / math.sqrt(X @ g @ X)
        Y = Y - (Y @ g @ X) * X
        ny = math.sqrt(Y @ g @ Y)
        if ny < 1e-6:
            continue
        Y = Y / ny
        w = X @ om @ Y
        if abs(w) < 1e-3:
            continue
        if w < 0.0:
            Y = -Y
        out.append((ambient.AmbientPoint(ambient.BOLT_CHART, x), X, Y))
    return out


def hessian_psi_check(model, point, X, Y):
    """Trace of Hess(psi) over the g-orthonormal plane span(X, Y).

    psi is quadratic in the chart, so the straight-line second derivative
    is exact: Hess(psi)(Z, Z) = 2 (Z0^2 + Z1^2) - Z^mu Z^nu Gam^rho_{mu nu}
    d_rho psi.  Returns {'trace', 'ratio'} with ratio = trace/(s^2 + psi)
    (infinite when the denominator degenerates but the trace does not).
    """
    if model.kind != "eh" or point.chart_id != ambient.BOLT_CHART:
        raise OutsideTube("the Hessian check lives on the bolt chart")
    x = point.coords
    geo = ambient.chart_geometry(model, ambient.BOLT_CHART, x[None])
    gam = geo["gamma"][0]
    dpsi = np.array([2.0 * x[0], 2.0 * x[1], 0.0, 0.0])

    def hess_on(Z):
        straight = 2.0 * (Z[0] ** 2 + Z[1] ** 2)
        corr = np.einsum("kab,a,b,k->", gam, Z, Z, dpsi)
        return straight - corr

    trace = hess_on(np.asarray(X, float)) + hess_on(np.asarray(Y, float))
    psi = x[0] ** 2 + x[1] ** 2
    denom = math.sqrt(model.c) / 4.0 + psi
    if denom < 1e-14:
        ratio = math.inf if trace >= 0.0 else -math.inf
    else:
        ratio = trace / denom
    return {"trace": trace, "ratio": ratio, "psi": psi}
