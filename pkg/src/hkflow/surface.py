"""Discretized immersed surfaces and their induced geometry.

A surface is a map f from a parameter grid into one chart of the ambient
model.  Grids come in two topologies:

* ``torus``: both directions periodic with period 2 pi, uniform nodes.
* ``sphere``: x1 = phi in [0, 2 pi) periodic; x2 = theta on the staggered
  nodes theta_j = (j + 1/2) pi / n2 (no node sits on a pole).  Derivatives
  in theta use one-sided second-order stencils on the first and last ring;
  integration uses Fejer first-rule weights in cos(theta), which are
  spectrally accurate for integrands that are smooth across the poles.

The fixed background density rho = rho12 dx1 ^ dx2 is grid data.  From an
immersion f the induced data are: tangents t_k = d_k f, induced metric
G_ij = gbar(t_i, t_j), area density dmu = sqrt(det G), the density ratio
lambda = dmu / rho12, the normal-valued second fundamental form
h_ij = (d_i t_j + Gammabar(t_i, t_j))^N, mean curvature H = G^{ij} h_ij,
and the moment coordinates

    N_a = omegabar_a(t1, t2) / rho12        (so N_a = lambda eta_a)
    eta_a = omegabar_a(t1, t2) / dmu        (sum_a eta_a^2 = 1 exactly).

The flow velocity comes in two equivalent forms:

    moment form    V = sum_a Jbar_a f_*(xi_a),  xi_a the rho-Hamiltonian
                   field of N_a:  xi_a = (d2 N_a, -d1 N_a) / rho12
    gradient form  V = lambda grad(lambda) + lambda^2 H

which agree in the continuum; their discrete difference converges to zero
at second order (this is one of the acceptance checks).
"""

import numpy as np

from . import ambient
from .errors import BadDimensions, BadTopology, DegenerateImmersion


class ParamGrid:
    def __init__(self, topology, n1, n2, x1, x2, rho12, weights, fd_order,
                 pole_policy):
        self.topology = topology
        self.n1 = n1
        self.n2 = n2
        self.x1 = x1
        self.x2 = x2
        self.spacing = (x1[1] - x1[0], x2[1] - x2[0])
        self.rho12 = rho12
        self.weights = weights
        self.fd_order = fd_order
        self.pole_policy = pole_policy

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")


def _fejer_weights(n):
    """Fejer first-rule weights for the nodes cos((j+1/2) pi / n) on
    [-1, 1] (exact for polynomials of degree < n)."""
    j = np.arange(n)
    th = (j + 0.5) * np.pi / n
    m = np.arange(1, n // 2 + 1)
    corr = np.cos(2.0 * np.outer(th, m)) / (4.0 * m * m - 1.0)
    return (2.0 / n) * (1.0 - 2.0 * corr.sum(axis=1))


def build_grid(topology, n1, n2, rho_spec=None, fd_order=2):
    """Make a parameter grid.  rho_spec may be None (density 1), a
    constant, or a callable rho12(x1_mesh, x2_mesh)."""
    if n1 < 8 or n2 < 8:
        raise BadDimensions("grids need at least 8 nodes per direction")
    if topology == "torus":
        x1 = 2.0 * np.pi * np.arange(n1) / n1
        x2 = 2.0 * np.pi * np.arange(n2) / n2
        weights = np.full((n1, n2), (2.0 * np.pi / n1) * (2.0 * np.pi / n2))
        pole_policy = "periodic"
    elif topology == "sphere":
        x1 = 2.0 * np.pi * np.arange(n1) / n1
        x2 = (np.arange(n2) + 0.5) * np.pi / n2
        wth = _fejer_weights(n2) / np.sin(x2)
        weights = np.broadcast_to(
            (2.0 * np.pi / n1) * wth[None, :], (n1, n2)
        ).copy()
        pole_policy = "onesided"
        fd_order = 2  # one-sided pole rings cap the global order anyway
    else:
        raise BadTopology("topology must be 'torus' or 'sphere', got %r" % (topology,))

    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    if rho_spec is None:
        rho12 = np.ones((n1, n2))
    elif callable(rho_spec):
        rho12 = np.asarray(rho_spec(X1, X2), dtype=float) * np.ones((n1, n2))
    else:
        rho12 = float(rho_spec) * np.ones((n1, n2))
    if np.any(rho12 <= 0.0):
        raise BadDimensions("rho must be positive on the grid")
    if fd_order not in (2, 4):
        raise BadDimensions("fd_order must be 2 or 4")
    return ParamGrid(topology, n1, n2, x1, x2, rho12, weights, fd_order,
                     pole_policy)


def _periodic_d(F, axis, h, order):
    if order == 4:
        return (
            -np.roll(F, -2, axis=axis)
            + 8.0 * np.roll(F, -1, axis=axis)
            - 8.0 * np.roll(F, 1, axis=axis)
            + np.roll(F, 2, axis=axis)
        ) / (12.0 * h)
    return (np.roll(F, -1, axis=axis) - np.roll(F, 1, axis=axis)) / (2.0 * h)


def grid_d1(grid, F):
    """d/dx1 of a node field F of shape (n1, n2, ...); x1 is periodic."""
    return _periodic_d(F, 0, grid.spacing[0], grid.fd_order)


def grid_d2(grid, F):
    """d/dx2; periodic on the torus, one-sided at the sphere pole rings."""
    h = grid.spacing[1]
    if grid.topology == "torus":
        return _periodic_d(F, 1, h, grid.fd_order)
    out = np.empty_like(F)
    out[:, 1:-1] = (F[:, 2:] - F[:, :-2]) / (2.0 * h)
    out[:, 0] = (-3.0 * F[:, 0] + 4.0 * F[:, 1] - F[:, 2]) / (2.0 * h)
    out[:, -1] = (3.0 * F[:, -1] - 4.0 * F[:, -2] + F[:, -3]) / (2.0 * h)
    return out


def integrate(grid, field):
    """Quadrature of a node field against dx1 dx2."""
    return float(np.sum(field * grid.weights))


class Immersion:
    """Node positions of the surface in one ambient chart.

    winding[k, mu] records how many chart periods coordinate mu gains as
    x^k runs once around a periodic grid direction (e.g. the identity map
    of the torus has winding eye-like entries).  Tangent stencils unwrap
    with it, so stored coordinates never need manual seam handling.
    """

    def __init__(self, chart_id, points, time=0.0, winding=None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 3 or points.shape[2] != 4:
            raise BadDimensions("immersion points must have shape (n1, n2, 4)")
        self.chart_id = chart_id
        self.points = points
        self.time = float(time)
        if winding is None:
            winding = np.zeros((2, 4))
        self.winding = np.asarray(winding, dtype=float).reshape(2, 4)

    def copy(self):
        return Immersion(self.chart_id, self.points.copy(), self.time,
                         self.winding.copy())


def tangents(grid, imm):
    """Seam-aware first derivatives of the immersion."""
    X1, X2 = grid.mesh()
    w1, w2 = imm.winding
    P1 = imm.points - X1[..., None] * w1
    t1 = grid_d1(grid, P1) + w1
    if grid.topology == "torus":
        P2 = imm.points - X2[..., None] * w2
        t2 = grid_d2(grid, P2) + w2
    else:
        t2 = grid_d2(grid, imm.points)
    return t1, t2


def _ambient_batch(model, imm):
    n1, n2 = imm.points.shape[:2]
    flat = imm.points.reshape(n1 * n2, 4)
    geo = ambient.chart_geometry(model, imm.chart_id, flat)
    return {k: v.reshape((n1, n2) + v.shape[1:]) for k, v in geo.items()}


class MomentData:
    """The light per-step bundle: everything the flow velocity needs."""

    def __init__(self, amb, t1, t2, G, Ginv, dmu, lam, N, xi, V, eta):
        self.amb = amb
        self.t1 = t1
        self.t2 = t2
        self.G = G
        self.Ginv = Ginv
        self.dmu = dmu
        self.lam = lam
        self.N = N
        self.xi = xi
        self.V = V
        self.eta = eta


def _induced_metric(amb, t1, t2, flat=False):
    if flat:
        g11 = np.einsum("ijm,ijm->ij", t1, t1)
        g12 = np.einsum("ijm,ijm->ij", t1, t2)
        g22 = np.einsum("ijm,ijm->ij", t2, t2)
    else:
        g = amb["g"]
        gt1 = np.einsum("ijmk,ijk->ijm", g, t1)
        gt2 = np.einsum("ijmk,ijk->ijm", g, t2)
        g11 = np.einsum("ijm,ijm->ij", t1, gt1)
        g12 = np.einsum("ijm,ijm->ij", t2, gt1)
        g22 = np.einsum("ijm,ijm->ij", t2, gt2)
    det = g11 * g22 - g12 * g12
    if np.any(det <= 0.0):
        raise DegenerateImmersion("induced metric is not positive definite")
    G = np.empty(g11.shape + (2, 2))
    G[..., 0, 0] = g11
    G[..., 0, 1] = g12
    G[..., 1, 0] = g12
    G[..., 1, 1] = g22
    Ginv = np.empty_like(G)
    Ginv[..., 0, 0] = g22 / det
    Ginv[..., 1, 1] = g11 / det
    Ginv[..., 0, 1] = -g12 / det
    Ginv[..., 1, 0] = -g12 / det
    return G, Ginv, det


def _coord_forms(model, triple, amb, sh):
    """Coordinate matrices of the Kahler forms and complex structures at
    every node.  The flat chart is an identity frame, so there the
    constant matrices are just broadcast instead of conjugated."""
    if model.kind == "flat":
        omega_c = np.broadcast_to(triple.omegas(), sh + (3, 4, 4))
        jay_c = np.broadcast_to(triple.jays(), sh + (3, 4, 4))
        return omega_c, jay_c
    omega_c, jay_c = ambient.hyperkahler_coord_batch(
        triple,
        amb["coframe"].reshape(-1, 4, 4),
        amb["vectors"].reshape(-1, 4, 4),
    )
    return omega_c.reshape(sh + (3, 4, 4)), jay_c.reshape(sh + (3, 4, 4))


def moment_data(model, grid, imm, triple=None):
    """Tangents, induced metric, moment coordinates, Hamiltonian fields
    and the moment-form velocity, in one pass."""
    if triple is None:
        triple = ambient.hyperkahler_at(model)
    flat = model.kind == "flat"
    amb = _ambient_batch(model, imm)
    t1, t2 = tangents(grid, imm)
    G, Ginv, det = _induced_metric(amb, t1, t2, flat=flat)
    dmu = np.sqrt(det)
    lam = dmu / grid.rho12

    sh = imm.points.shape[:2]
    omega_c, jay_c = _coord_forms(model, triple, amb, sh)

    if flat:
        # constant form matrices: two small contractions instead of the
        # node-by-node conjugation
        tmp = np.tensordot(t2, triple.omegas(), axes=([2], [2]))
        pull = np.einsum("ijam,ijm->ija", tmp, t1)
    else:
        tmp = np.einsum("ijamk,ijk->ijam", omega_c, t2)
        pull = np.einsum("ijam,ijm->ija", tmp, t1)
    N = pull / grid.rho12[..., None]
    eta = pull / dmu[..., None]

    xi = np.empty(sh + (3, 2))
    for a in range(3):
        xi[..., a, 0] = grid_d2(grid, N[..., a]) / grid.rho12
        xi[..., a, 1] = -grid_d1(grid, N[..., a]) / grid.rho12

    push = (
        xi[..., :, 0, None] * t1[..., None, :]
        + xi[..., :, 1, None] * t2[..., None, :]
    )  # f_*(xi_a), shape (n1, n2, 3, 4)
    if flat:
        V = np.einsum("amk,ijak->ijm", triple.jays(), push, optimize=True)
    else:
        V = np.einsum("ijamk,ijak->ijm", jay_c, push)
    return MomentData(amb, t1, t2, G, Ginv, dmu, lam, N, xi, V, eta)


class HamiltonianData:
    def __init__(self, N, xi):
        self.N = N
        self.xi = xi


def hamiltonian_fields(model, grid, imm):
    """Moment coordinates N_a and their rho-Hamiltonian fields xi_a.

    By construction rho(xi_a, .) = dN_a holds exactly in the discrete
    sense (both sides built from the same difference stencil)."""
    md = moment_data(model, grid, imm)
    return HamiltonianData(md.N, md.xi)


def velocity_moment_form(model, grid, imm):
    """Flow velocity sum_a Jbar_a f_*(xi_a)."""
    return moment_data(model, grid, imm).V


class SurfaceGeometry:
    """Full induced geometry on the grid (the diagnostic bundle)."""

    def __init__(self, **kw):
        self.__dict__.update(kw)

    def node(self, i, j):
        return NodeGeometry(self, i, j)


class NodeGeometry:
    """One node's slice of a SurfaceGeometry."""

    _fields = (
        "g", "g_inv", "dmu", "lam", "tangent", "normal", "h", "H", "eta",
        "grad_lambda", "normA2",
    )

    def __init__(self, geo, i, j):
        self.g = geo.G[i, j]
        self.g_inv = geo.Ginv[i, j]
        self.dmu = geo.dmu[i, j]
        self.lam = geo.lam[i, j]
        self.tangent = np.stack([geo.t1[i, j], geo.t2[i, j]])
        self.normal = geo.normal[i, j]
        self.h = geo.h[i, j]
        self.H = geo.H[i, j]
        self.eta = geo.eta[i, j]
        self.grad_lambda = geo.grad_lambda[i, j]
        self.normA2 = geo.normA2[i, j]


def _normal_frame(amb, E1, E2, jay_c, gdot):
    """Orthonormal normal frame.  Primary choice nu_i = Jbar_3 E_i (exact
    for special immersions); nodes where that degenerates fall back to
    projecting the ambient frame vectors."""
    g = amb["g"]
    cand1 = np.einsum("ijmk,ijk->ijm", jay_c[..., 2, :, :], E1)
    cand2 = np.einsum("ijmk,ijk->ijm", jay_c[..., 2, :, :], E2)

    def project_out(X):
        return (
            X
            - gdot(X, E1)[..., None] * E1
            - gdot(X, E2)[..., None] * E2
        )

    n1r = project_out(cand1)
    sq1 = gdot(n1r, n1r)
    bad = sq1 < 0.25
    if np.any(bad):
        # eta_3 is large here; build the frame from the ambient e_a instead
        vecs = amb["vectors"]
        for (i, j) in zip(*np.nonzero(bad)):
            best = None
            for a in range(4):
                w = project_out(vecs[i : i + 1, j : j + 1, :, a])[0, 0]
                n2 = w @ g[i, j] @ w
                if best is None or n2 > best[0]:
                    best = (n2, w)
            n1r[i, j] = best[1]
            sq1[i, j] = best[0]
    nu1 = n1r / np.sqrt(sq1)[..., None]
    n2r = project_out(cand2)
    n2r = n2r - gdot(n2r, nu1)[..., None] * nu1
    sq2 = gdot(n2r, n2r)
    bad = sq2 < 0.25
    if np.any(bad):
        vecs = amb["vectors"]
        for (i, j) in zip(*np.nonzero(bad)):
            best = None
            for a in range(4):
                w = project_out(vecs[i : i + 1, j : j + 1, :, a])[0, 0]
                w = w - (w @ g[i, j] @ nu1[i, j]) * nu1[i, j]
                n2 = w @ g[i, j] @ w
                if best is None or n2 > best[0]:
                    best = (n2, w)
            n2r[i, j] = best[1]
            sq2[i, j] = best[0]
    nu2 = n2r / np.sqrt(sq2)[..., None]
    return nu1, nu2


def surface_geometry(model, grid, imm):
    """Full geometric bundle: metric, second fundamental form, mean
    curvature, moment coordinates, lambda gradient, |A|^2."""
    triple = ambient.hyperkahler_at(model)
    md = moment_data(model, grid, imm, triple)
    amb = md.amb
    g = amb["g"]
    t1, t2 = md.t1, md.t2

    def gdot(X, Y):
        return np.einsum("ijm,ijmk,ijk->ij", X, g, Y)

    # derivatives of the tangents; the mixed one is symmetrized
    d11 = grid_d1(grid, t1)
    d22 = grid_d2(grid, t2)
    d12 = 0.5 * (grid_d1(grid, t2) + grid_d2(grid, t1))
    gam = amb["gamma"]

    def cov(ti, tj, dij):
        return dij + np.einsum("ijmab,ija,ijb->ijm", gam, ti, tj)

    D = np.empty(imm.points.shape[:2] + (2, 2, 4))
    D[..., 0, 0, :] = cov(t1, t1, d11)
    D[..., 0, 1, :] = cov(t1, t2, d12)
    D[..., 1, 0, :] = D[..., 0, 1, :]
    D[..., 1, 1, :] = cov(t2, t2, d22)

    # tangential projection via the induced metric
    tang = np.stack([t1, t2], axis=-2)  # (n1, n2, 2, 4)
    Dt = np.einsum("ijuvm,ijmk,ijwk->ijuvw", D, g, tang)  # gbar(D_uv, t_w)
    proj = np.einsum("ijuvw,ijwz,ijzm->ijuvm", Dt, md.Ginv, tang)
    h = D - proj
    H = np.einsum("ijuv,ijuvm->ijm", md.Ginv, h)
    normA2 = np.einsum(
        "ijuvm,ijmk,ijabk,ijua,ijvb->ij", h, g, h, md.Ginv, md.Ginv
    )

    dl1 = grid_d1(grid, md.lam)
    dl2 = grid_d2(grid, md.lam)
    dl = np.stack([dl1, dl2], axis=-1)
    grad_lambda = np.einsum("ijuv,iju,ijvm->ijm", md.Ginv, dl, tang)

    # orthonormal tangent frame by Gram-Schmidt, then the normal frame
    E1 = t1 / np.sqrt(gdot(t1, t1))[..., None]
    t2p = t2 - gdot(t2, E1)[..., None] * E1
    E2 = t2p / np.sqrt(gdot(t2p, t2p))[..., None]
    sh = imm.points.shape[:2]
    _, jay_c = _coord_forms(model, triple, amb, sh)
    nu1, nu2 = _normal_frame(amb, E1, E2, jay_c, gdot)
    normal = np.stack([nu1, nu2], axis=-2)

    return SurfaceGeometry(
        amb=amb, G=md.G, Ginv=md.Ginv, dmu=md.dmu, lam=md.lam,
        t1=t1, t2=t2, E1=E1, E2=E2, normal=normal, D=D, h=h, H=H,
        eta=md.eta, N=md.N, xi=md.xi, V=md.V, grad_lambda=grad_lambda,
        normA2=normA2, jay_c=jay_c, triple=triple,
    )


def node_geometry(model, grid, imm, i, j):
    return surface_geometry(model, grid, imm).node(i, j)


def velocity_gradient_form(model, grid, imm):
    """Flow velocity lambda grad(lambda) + lambda^2 H."""
    geo = surface_geometry(model, grid, imm)
    return geo.lam[..., None] * geo.grad_lambda + (geo.lam ** 2)[..., None] * geo.H
