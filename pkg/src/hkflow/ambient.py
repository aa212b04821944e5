"""Ambient hyperkahler 4-manifolds: flat 4-torus and Eguchi-Hanson space.

Two models are supported.

* ``flat``: the 4-torus R^4/(2 pi Z)^4 with the euclidean metric.  Single
  chart ``"t4"``; frame = coordinate basis.

* ``eh``: the Eguchi-Hanson space with parameter c > 0, presented in two
  charts.  The ``"radial"`` chart uses coordinates (r, theta, phi, psi)
  with r > c^(1/4),

      g = dr^2/A + (r^2/4)(sigma1^2 + sigma2^2) + (r^2 A/4) sigma3^2,
      A = 1 - c/r^4,

  where sigma_i are left-invariant coframes on SU(2) realized below.  The
  ``"bolt"`` chart uses coordinates (v1, v2, theta, phi) in a tubular
  neighbourhood of the bolt two-sphere: (v1, v2) are normal-disc
  coordinates in which the fiber metric is exactly euclidean at the bolt
  and |v| is the geodesic distance to it; see backend.py for the profile
  functions.  The bolt sits at v = 0 with radius^2 = sqrt(c)/4.

Orthonormal frames (e_0..e_3) are fixed per chart in closed form, chosen
so that the three Kahler forms are *constant* matrices in frame indices:

    omega_I = w0^w3 + w1^w2,  omega_J = w0^w1 + w2^w3,
    omega_K = w0^w2 - w1^w3,

with quaternionic endomorphisms I, J, K (I J = K).  The labelled triple
(omega_bar_1, omega_bar_2, omega_bar_3) used by the flow is a signed
permutation of these: identity for the flat model and (-K, -I, J) for
Eguchi-Hanson (that choice makes the zero section of the bolt chart
special: it calibrates omega_bar_2 and annihilates omega_bar_3).

Index conventions (used consistently everywhere):

    R(X,Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z
    R_{abcd} = g(R(e_a, e_b) e_c, e_d)
    R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
                + Gamma^l_{im} Gamma^m_{jk} - Gamma^l_{jm} Gamma^m_{ik}
    R_{ijkm} = g_{lm} R^l_{kij}
    Ric_{ab} = sum_m R_{mabm}

so the unit round sphere has sectional curvature R_{0110} = +1 and
Ric = +g (there is a self-test for this in validate_ambient).
"""

import math

import numpy as np

from . import backend
from .errors import BadDimensions, ChartDomain

FLAT_CHART = "t4"
RADIAL_CHART = "radial"
BOLT_CHART = "bolt"

_POLE_EPS = 1e-9


class AmbientPoint:
    """A point of the ambient manifold: chart id plus four coordinates."""

    def __init__(self, chart_id, coords):
        self.chart_id = chart_id
        self.coords = np.asarray(coords, dtype=float).reshape(4)

    def __repr__(self):
        return "AmbientPoint(%r, %s)" % (self.chart_id, self.coords.tolist())


class AmbientModel:
    """Which ambient space we are working in.

    kind: "flat" or "eh"; c: the Eguchi-Hanson parameter (ignored for
    flat); fd_step: base step for the finite-difference curvature checks.
    """

    def __init__(self, kind, c=1.0, fd_step=1e-3):
        if kind not in ("flat", "eh"):
            raise BadDimensions("unknown ambient kind %r" % (kind,))
        if kind == "eh" and not c > 0.0:
            raise ChartDomain("Eguchi-Hanson parameter c must be positive")
        self.kind = kind
        self.c = float(c)
        self.fd_step = float(fd_step)

    def __repr__(self):
        return "AmbientModel(%r, c=%r)" % (self.kind, self.c)


class Frame:
    """Orthonormal frame at a point: vectors[:, a] = e_a (coordinate
    components), coframe[a, :] = omega^a (coordinate components)."""

    def __init__(self, vectors, coframe):
        self.vectors = vectors
        self.coframe = coframe


class ConnectionForms:
    """Levi-Civita connection forms omega^a_b of an orthonormal frame;
    omega[a, b, c] is the frame component omega^a_b(e_c)."""

    def __init__(self, omega):
        self.omega = omega


class CurvatureTensor:
    """R[a, b, c, d] with the slot convention of the module docstring."""

    def __init__(self, R):
        self.R = R


class HyperkahlerTriple:
    """Constant frame-index data of the hyperkahler package.

    I, J, K: quaternionic endomorphisms (matrix acts on frame components,
    column a = image of e_a).  omega1..omega3: the *labelled* two-forms
    as antisymmetric frame matrices.  jay1..jay3: the matching labelled
    endomorphisms.  label_permutation: tuple of (sign, base) pairs
    recording how the labels map onto (I, J, K).
    """

    def __init__(self, I, J, K, omegas, jays, label_permutation):
        self.I = I
        self.J = J
        self.K = K
        self.omega1, self.omega2, self.omega3 = omegas
        self.jay1, self.jay2, self.jay3 = jays
        self.label_permutation = label_permutation

    def omegas(self):
        return np.stack([self.omega1, self.omega2, self.omega3])

    def jays(self):
        return np.stack([self.jay1, self.jay2, self.jay3])


def flat_model(fd_step=1e-3):
    return AmbientModel("flat", fd_step=fd_step)


def eh_model(c=1.0, fd_step=1e-3):
    return AmbientModel("eh", c=c, fd_step=fd_step)


# ----------------------------------------------------------------------
# quaternionic frame matrices (shared by both models)
# ----------------------------------------------------------------------

def _quaternion_matrices():
    I = np.zeros((4, 4))
    I[3, 0] = 1.0
    I[2, 1] = 1.0
    I[1, 2] = -1.0
    I[0, 3] = -1.0
    J = np.zeros((4, 4))
    J[1, 0] = 1.0
    J[0, 1] = -1.0
    J[3, 2] = 1.0
    J[2, 3] = -1.0
    K = np.zeros((4, 4))
    K[2, 0] = 1.0
    K[3, 1] = -1.0
    K[0, 2] = -1.0
    K[1, 3] = 1.0
    return I, J, K


def hyperkahler_at(model, point=None):
    """The hyperkahler triple in frame indices (constant over each model).

    The point argument is accepted for interface symmetry; frame-index
    data does not depend on it.  Use frame coframes/vectors to convert to
    coordinate indices (see hyperkahler_coord_batch).
    """
    I, J, K = _quaternion_matrices()
    if model.kind == "flat":
        perm = ((1.0, "I"), (1.0, "J"), (1.0, "K"))
        jays = (I, J, K)
    else:
        perm = ((-1.0, "K"), (-1.0, "I"), (1.0, "J"))
        jays = (-K, -I, J)
    omegas = tuple(m.T.copy() for m in jays)  # omega(e_a, e_b) = g(J e_a, e_b)
    return HyperkahlerTriple(I, J, K, omegas, jays, perm)


def hyperkahler_coord_batch(triple, coframe, vectors):
    """Coordinate-index two-forms and endomorphisms of the labelled triple.

    coframe: (n, 4, 4) rows = omega^a; vectors: (n, 4, 4) columns = e_a.
    Returns (omega_coord, jay_coord), both (n, 3, 4, 4):
        omega_coord[n, a] = coframe^T Omega_a coframe  (lower indices)
        jay_coord[n, a]   = vectors  J_a    coframe    (mixed indices)
    """
    om = triple.omegas()
    jj = triple.jays()
    half = np.einsum("acd,ndk->nack", om, coframe)
    omega_coord = np.einsum("ncm,nack->namk", coframe, half)
    half = np.einsum("acd,ndk->nack", jj, coframe)
    jay_coord = np.einsum("nmc,nack->namk", vectors, half)
    return omega_coord, jay_coord


# ----------------------------------------------------------------------
# chart geometry batches
# ----------------------------------------------------------------------

def _flat_geometry(coords):
    n = coords.shape[0]
    eye = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    zeros3 = np.zeros((n, 4, 4, 4))
    return {
        "g": eye.copy(),
        "ginv": eye.copy(),
        "dg": zeros3.copy(),
        "gamma": zeros3,
        "coframe": eye.copy(),
        "vectors": eye,
    }


def _radial_geometry(coords, c):
    n = coords.shape[0]
    r = coords[:, 0]
    th = coords[:, 1]
    ps = coords[:, 3]
    A = 1.0 - c / r ** 4
    st = np.sin(th)
    ct = np.cos(th)
    r2q = r * r / 4.0

    g = np.zeros((n, 4, 4))
    g[:, 0, 0] = 1.0 / A
    g[:, 1, 1] = r2q
    g[:, 2, 2] = r2q * st * st + r2q * A * ct * ct
    g[:, 3, 3] = r2q * A
    g[:, 2, 3] = r2q * A * ct
    g[:, 3, 2] = g[:, 2, 3]

    dA = 4.0 * (1.0 - A) / r          # A'
    dr2qA = r * (4.0 - 2.0 * A) / 4.0  # (r^2 A / 4)'
    dg = np.zeros((n, 4, 4, 4))
    dg[:, 0, 0, 0] = -dA / (A * A)
    dg[:, 0, 1, 1] = r / 2.0
    dg[:, 0, 2, 2] = (r / 2.0) * st * st + dr2qA * ct * ct
    dg[:, 1, 2, 2] = 2.0 * st * ct * (r2q - r2q * A)
    dg[:, 0, 3, 3] = dr2qA
    dg[:, 0, 2, 3] = dr2qA * ct
    dg[:, 0, 3, 2] = dg[:, 0, 2, 3]
    dg[:, 1, 2, 3] = -r2q * A * st
    dg[:, 1, 3, 2] = dg[:, 1, 2, 3]

    ginv = np.zeros((n, 4, 4))
    det2 = g[:, 2, 2] * g[:, 3, 3] - g[:, 2, 3] ** 2
    ginv[:, 0, 0] = A
    ginv[:, 1, 1] = 1.0 / r2q
    ginv[:, 2, 2] = g[:, 3, 3] / det2
    ginv[:, 3, 3] = g[:, 2, 2] / det2
    ginv[:, 2, 3] = -g[:, 2, 3] / det2
    ginv[:, 3, 2] = ginv[:, 2, 3]

    gamma = backend.christoffel_from_dmetric(ginv, dg)

    sq = np.sqrt(A)
    sp = np.sin(ps)
    cp = np.cos(ps)
    coframe = np.zeros((n, 4, 4))
    coframe[:, 0, 0] = 1.0 / sq
    coframe[:, 1, 1] = -(r / 2.0) * sp
    coframe[:, 1, 2] = (r / 2.0) * st * cp
    coframe[:, 2, 1] = -(r / 2.0) * cp
    coframe[:, 2, 2] = -(r / 2.0) * st * sp
    coframe[:, 3, 2] = -(r * sq / 2.0) * ct
    coframe[:, 3, 3] = -(r * sq / 2.0)

    vectors = np.zeros((n, 4, 4))
    vectors[:, 0, 0] = sq
    vectors[:, 1, 1] = -2.0 * sp / r
    vectors[:, 2, 1] = 2.0 * cp / (r * st)
    vectors[:, 3, 1] = -2.0 * ct * cp / (r * st)
    vectors[:, 1, 2] = -2.0 * cp / r
    vectors[:, 2, 2] = -2.0 * sp / (r * st)
    vectors[:, 3, 2] = 2.0 * ct * sp / (r * st)
    vectors[:, 3, 3] = -2.0 / (r * sq)

    return {
        "g": g,
        "ginv": ginv,
        "dg": dg,
        "gamma": gamma,
        "coframe": coframe,
        "vectors": vectors,
    }


def _guard_chart(model, chart_id, coords):
    if model.kind == "flat":
        if chart_id != FLAT_CHART:
            raise ChartDomain("flat model has only chart %r" % (FLAT_CHART,))
        return
    if chart_id == RADIAL_CHART:
        rb = model.c ** 0.25
        if np.any(coords[:, 0] <= rb * (1.0 + 1e-14)):
            raise ChartDomain("radial chart needs r > c^(1/4)")
        if np.any(np.sin(coords[:, 1]) <= _POLE_EPS):
            raise ChartDomain("radial chart frame degenerates at the poles")
        return
    if chart_id == BOLT_CHART:
        s = model.c ** 0.25 / 2.0
        ubar_max = s * backend.G_UMAX_VALUE
        W = coords[:, 0] ** 2 + coords[:, 1] ** 2
        if np.any(W >= ubar_max * ubar_max):
            raise ChartDomain("bolt chart limited to |v| < %.6g" % ubar_max)
        if np.any(np.sin(coords[:, 2]) <= _POLE_EPS):
            raise ChartDomain("bolt chart frame degenerates at the poles")
        return
    raise ChartDomain("eh model has charts %r, %r" % (RADIAL_CHART, BOLT_CHART))


def chart_geometry(model, chart_id, coords):
    """Batch metric / inverse / derivative / Christoffel / frame data.

    coords: (n, 4).  Returns a dict with keys g, ginv, dg, gamma, coframe,
    vectors (layouts as in backend.bolt_ambient).  This is the single
    entry point the surface machinery uses.
    """
    coords = np.ascontiguousarray(coords, dtype=float).reshape(-1, 4)
    _guard_chart(model, chart_id, coords)
    if model.kind == "flat":
        return _flat_geometry(coords)
    if chart_id == RADIAL_CHART:
        return _radial_geometry(coords, model.c)
    g, ginv, dg, gamma, coframe, vectors = backend.bolt_ambient(coords, model.c)
    return {
        "g": g,
        "ginv": ginv,
        "dg": dg,
        "gamma": gamma,
        "coframe": coframe,
        "vectors": vectors,
    }


# ----------------------------------------------------------------------
# pointwise operations
# ----------------------------------------------------------------------

def metric_at(model, point):
    geo = chart_geometry(model, point.chart_id, point.coords[None, :])
    return geo["g"][0]


def christoffel_at(model, point):
    geo = chart_geometry(model, point.chart_id, point.coords[None, :])
    return geo["gamma"][0]


def eh_frame_at(model, point):
    if model.kind != "eh":
        raise ChartDomain("frames are chart data of the eh model")
    geo = chart_geometry(model, point.chart_id, point.coords[None, :])
    return Frame(geo["vectors"][0], geo["coframe"][0])


def eh_connection_forms_at(model, point):
    """Connection forms of the radial-chart frame, in closed form.

    With val1 = sqrt(A)/r and val2 = (2-A)/(r sqrt(A)):
        omega^0_1 = -val1 w1   omega^0_2 = -val1 w2   omega^0_3 = -val2 w3
        omega^1_2 =  val2 w3   omega^1_3 = -val1 w2   omega^2_3 =  val1 w1
    """
    if model.kind != "eh" or point.chart_id != RADIAL_CHART:
        raise ChartDomain("connection forms are tabulated on the radial chart")
    _guard_chart(model, RADIAL_CHART, point.coords[None, :])
    r = point.coords[0]
    A = 1.0 - model.c / r ** 4
    val1 = math.sqrt(A) / r
    val2 = (2.0 - A) / (r * math.sqrt(A))
    om = np.zeros((4, 4, 4))
    om[0, 1, 1] = -val1
    om[0, 2, 2] = -val1
    om[0, 3, 3] = -val2
    om[1, 2, 3] = val2
    om[1, 3, 2] = -val1
    om[2, 3, 1] = val1
    for a in range(4):
        for b in range(a):
            om[a, b] = -om[b, a]
    return ConnectionForms(om)


_EH_CURVATURE_PATTERN = (
    (0, 1, 1, 0, 1.0),
    (2, 3, 1, 0, -1.0),
    (0, 2, 2, 0, 1.0),
    (1, 3, 2, 0, 1.0),
    (0, 3, 3, 0, -2.0),
    (1, 2, 3, 0, 2.0),
    (0, 1, 3, 2, -1.0),
    (2, 3, 3, 2, 1.0),
    (0, 2, 3, 1, 1.0),
    (1, 3, 3, 1, 1.0),
    (0, 3, 2, 1, 2.0),
    (1, 2, 2, 1, -2.0),
)


def _eh_frame_curvature(a_val):
    """Frame-index curvature tensor of Eguchi-Hanson, a_val = (2A-2)/r^2.

    Built from the twelve independent components and closed under the
    symmetry group (antisymmetry in each pair, pair exchange); the closure
    asserts it never overwrites an entry with a conflicting value.
    """
    R = np.zeros((4, 4, 4, 4))
    seen = np.zeros((4, 4, 4, 4), dtype=bool)

    def put(i, j, k, l, v):
        if seen[i, j, k, l]:
            if abs(R[i, j, k, l] - v) > 1e-15 * max(1.0, abs(v)):
                raise AssertionError("inconsistent curvature symmetry fill")
            return
        R[i, j, k, l] = v
        seen[i, j, k, l] = True

    for (c, d, b, a, coef) in _EH_CURVATURE_PATTERN:
        v = coef * a_val
        for (i, j, s1) in ((c, d, 1.0), (d, c, -1.0)):
            for (k, l, s2) in ((b, a, 1.0), (a, b, -1.0)):
                w = s1 * s2 * v
                put(i, j, k, l, w)
                put(k, l, i, j, w)
    return R


def _eh_a_of_point(model, point):
    if point.chart_id == RADIAL_CHART:
        r = point.coords[0]
        A = 1.0 - model.c / r ** 4
        return (2.0 * A - 2.0) / (r * r)
    if point.chart_id == BOLT_CHART:
        s = model.c ** 0.25 / 2.0
        ubar = math.hypot(point.coords[0], point.coords[1])
        u = float(backend.u_from_ubar(ubar, s))
        return -2.0 / (math.sqrt(model.c) * math.cosh(u) ** 3)
    raise ChartDomain("unknown eh chart %r" % (point.chart_id,))


def eh_curvature_forms_at(model, point):
    """Closed-form frame curvature R[a,b,c,d]; valid on either eh chart."""
    if model.kind != "eh":
        raise ChartDomain("curvature forms are tabulated for the eh model")
    return CurvatureTensor(_eh_frame_curvature(_eh_a_of_point(model, point)))


def eh_bolt_transition(model, point):
    """Map a point between the radial and bolt charts of the eh model."""
    if model.kind != "eh":
        raise ChartDomain("transition maps belong to the eh model")
    c = model.c
    s = c ** 0.25 / 2.0
    x = point.coords
    if point.chart_id == RADIAL_CHART:
        r, th, ph, ps = x
        w = r * r / math.sqrt(c)
        if w <= 1.0:
            raise ChartDomain("radial chart needs r > c^(1/4)")
        u = math.acosh(w)
        if u >= backend.U_MAX:
            raise ChartDomain("point outside the bolt tube (u >= %g)" % backend.U_MAX)
        ubar = s * float(backend.g_of_u(u))
        return AmbientPoint(
            BOLT_CHART, (ubar * math.cos(ps), ubar * math.sin(ps), th, ph)
        )
    if point.chart_id == BOLT_CHART:
        v1, v2, th, ph = x
        ubar = math.hypot(v1, v2)
        if ubar == 0.0:
            raise ChartDomain("the bolt itself is not covered by the radial chart")
        u = float(backend.u_from_ubar(ubar, s))
        r = c ** 0.25 * math.sqrt(math.cosh(u))
        ps = math.atan2(v2, v1)
        return AmbientPoint(RADIAL_CHART, (r, th, ph, ps))
    raise ChartDomain("unknown eh chart %r" % (point.chart_id,))


# ----------------------------------------------------------------------
# numerical curvature (generic finite-difference pipeline)
# ----------------------------------------------------------------------

def _gamma_fn_for(model, chart_id):
    def gamma_fn(coords):
        return chart_geometry(model, chart_id, coords)["gamma"]

    return gamma_fn


def _dgamma_fd(gamma_fn, x, h):
    """d_mu Gamma^l_{jk} by central differences, one step size."""
    out = np.empty((4, 4, 4, 4))  # [mu, l, j, k]
    for mu in range(4):
        xp = x.copy()
        xm = x.copy()
        xp[mu] += h
        xm[mu] -= h
        gp = gamma_fn(xp[None, :])[0]
        gm = gamma_fn(xm[None, :])[0]
        out[mu] = (gp - gm) / (2.0 * h)
    return out


def riemann_coord_fd(gamma_fn, x, h, richardson=True):
    """Coordinate curvature R^l_{kij} from finite differences of Gamma.

    With richardson=True combines steps h and h/2 for O(h^4) accuracy.
    """
    x = np.asarray(x, dtype=float).reshape(4)
    dg1 = _dgamma_fd(gamma_fn, x, h)
    if richardson:
        dg2 = _dgamma_fd(gamma_fn, x, h / 2.0)
        dgam = (4.0 * dg2 - dg1) / 3.0
    else:
        dgam = dg1
    gam = gamma_fn(x[None, :])[0]
    # R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} + G^l_{im}G^m_{jk} - G^l_{jm}G^m_{ik}
    R = (
        np.einsum("iljk->lkij", dgam)
        - np.einsum("jlik->lkij", dgam)
        + np.einsum("lim,mjk->lkij", gam, gam)
        - np.einsum("ljm,mik->lkij", gam, gam)
    )
    return R


def riemann_at(model, point, frame=False):
    """Curvature at a point by finite differences of Christoffel symbols.

    Returns R[i,j,k,m] in coordinate indices (all slots lowered) by
    default; with frame=True converts to the chart frame.  Flat model
    returns zeros exactly.
    """
    if model.kind == "flat":
        return CurvatureTensor(np.zeros((4, 4, 4, 4)))
    geo = chart_geometry(model, point.chart_id, point.coords[None, :])
    gamma_fn = _gamma_fn_for(model, point.chart_id)
    Rup = riemann_coord_fd(gamma_fn, point.coords, model.fd_step)
    Rlow = np.einsum("lm,lkij->ijkm", geo["g"][0], Rup)
    if not frame:
        return CurvatureTensor(Rlow)
    E = geo["vectors"][0]
    Rf = np.einsum("ijkm,ia,jb,kc,md->abcd", Rlow, E, E, E, E)
    return CurvatureTensor(Rf)


def ricci_at(model, point):
    """Coordinate Ricci tensor Ric_{jk} = g^{ml} R_{mjkl} (zero for both
    models up to discretization error)."""
    if model.kind == "flat":
        return np.zeros((4, 4))
    geo = chart_geometry(model, point.chart_id, point.coords[None, :])
    R = riemann_at(model, point).R
    return np.einsum("ml,mjkl->jk", geo["ginv"][0], R)


# ----------------------------------------------------------------------
# geodesics (used as an oracle for tube distances)
# ----------------------------------------------------------------------

def geodesic_shoot(model, chart_id, x0, v0, t_total, nsteps=200):
    """Integrate the geodesic equation with RK4; returns final (x, v)."""
    gamma_fn = _gamma_fn_for(model, chart_id)

    def acc(state):
        x = state[:4]
        v = state[4:]
        gam = gamma_fn(x[None, :])[0]
        a = -np.einsum("kij,i,j->k", gam, v, v)
        return np.concatenate([v, a])

    state = np.concatenate(
        [np.asarray(x0, dtype=float).reshape(4), np.asarray(v0, dtype=float).reshape(4)]
    )
    h = t_total / nsteps
    for _ in range(nsteps):
        k1 = acc(state)
        k2 = acc(state + 0.5 * h * k1)
        k3 = acc(state + 0.5 * h * k2)
        k4 = acc(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return state[:4], state[4:]


# ----------------------------------------------------------------------
# validation battery
# ----------------------------------------------------------------------

def _d_oneform(fn, x, h):
    """(d alpha)_{ij} = d_i alpha_j - d_j alpha_i by central differences."""
    grad = np.empty((4, 4))
    for mu in range(4):
        xp = x.copy()
        xm = x.copy()
        xp[mu] += h
        xm[mu] -= h
        grad[mu] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad - grad.T


def _d_twoform(fn, x, h):
    """(d omega)_{ijk} (fully antisymmetric convention d_i w_jk + cyc)."""
    grad = np.empty((4, 4, 4))
    for mu in range(4):
        xp = x.copy()
        xm = x.copy()
        xp[mu] += h
        xm[mu] -= h
        grad[mu] = (fn(xp) - fn(xm)) / (2.0 * h)
    d = np.zeros((4, 4, 4))
    for i in range(4):
        for j in range(4):
            for k in range(4):
                d[i, j, k] = grad[i, j, k] + grad[j, k, i] + grad[k, i, j]
    return d


def _wedge(a, b):
    return np.outer(a, b) - np.outer(b, a)


def _sample_coords(model, chart_id, n, rng):
    if model.kind == "flat":
        return rng.uniform(0.0, 2.0 * np.pi, size=(n, 4))
    if chart_id == RADIAL_CHART:
        rb = model.c ** 0.25
        r = rb * rng.uniform(1.05, 3.0, size=n)
        th = rng.uniform(0.3, np.pi - 0.3, size=n)
        ph = rng.uniform(0.0, 2.0 * np.pi, size=n)
        ps = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return np.stack([r, th, ph, ps], axis=1)
    s = model.c ** 0.25 / 2.0
    u = rng.uniform(0.05, 3.0, size=n)
    ubar = s * backend.g_of_u(u)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    th = rng.uniform(0.3, np.pi - 0.3, size=n)
    ph = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.stack([ubar * np.cos(ang), ubar * np.sin(ang), th, ph], axis=1)


def _coframe_fn(model, chart_id):
    def fn(x):
        return chart_geometry(model, chart_id, x[None, :])["coframe"][0]

    return fn


def _omega_coord_fn(model, chart_id, label):
    triple = hyperkahler_at(model)
    Om = triple.omegas()[label]

    def fn(x):
        C = chart_geometry(model, chart_id, x[None, :])["coframe"][0]
        return C.T @ Om @ C

    return fn


def _structure_residual(model, chart_id, coords, h):
    """max |d w^a + w^a_b ^ w^b| over sample points (radial chart)."""
    cf_fn = _coframe_fn(model, chart_id)
    worst = 0.0
    for x in coords:
        geo = chart_geometry(model, chart_id, x[None, :])
        C = geo["coframe"][0]
        conn = eh_connection_forms_at(model, AmbientPoint(chart_id, x)).omega
        for a in range(4):
            dw = _d_oneform(lambda y, a=a: cf_fn(y)[a], x.copy(), h)
            rhs = np.zeros((4, 4))
            for b in range(4):
                omab = conn[a, b] @ C  # coordinate components of omega^a_b
                rhs += _wedge(omab, C[b])
            worst = max(worst, np.abs(dw + rhs).max())
    return worst


def _curvature_structure_residual(model, chart_id, coords, h):
    """max |d w^a_b + w^a_c ^ w^c_b - Omega^a_b| (radial chart)."""
    worst = 0.0
    for x in coords:
        geo = chart_geometry(model, chart_id, x[None, :])
        C = geo["coframe"][0]
        conn_at = lambda y: eh_connection_forms_at(model, AmbientPoint(chart_id, y)).omega
        R = eh_curvature_forms_at(model, AmbientPoint(chart_id, x)).R
        for a in range(4):
            for b in range(4):
                def omab_fn(y, a=a, b=b):
                    Cy = chart_geometry(model, chart_id, y[None, :])["coframe"][0]
                    return conn_at(y)[a, b] @ Cy

                dwab = _d_oneform(omab_fn, x.copy(), h)
                conn = conn_at(x)
                quad = np.zeros((4, 4))
                for cdx in range(4):
                    quad += _wedge(conn[a, cdx] @ C, conn[cdx, b] @ C)
                # Omega^a_b = sum_{c<d} R_{cdba} w^c ^ w^d
                target = C.T @ R[:, :, b, a] @ C
                worst = max(worst, np.abs(dwab + quad - target).max())
    return worst


def _omega_closed_residual(model, chart_id, coords, h):
    worst = 0.0
    for label in range(3):
        fn = _omega_coord_fn(model, chart_id, label)
        for x in coords:
            worst = max(worst, np.abs(_d_twoform(fn, x.copy(), h)).max())
    return worst


def _omega_parallel_residual(model, chart_id, coords, h):
    worst = 0.0
    for label in range(3):
        fn = _omega_coord_fn(model, chart_id, label)
        for x in coords:
            geo = chart_geometry(model, chart_id, x[None, :])
            gam = geo["gamma"][0]
            grad = np.empty((4, 4, 4))
            for mu in range(4):
                xp = x.copy()
                xm = x.copy()
                xp[mu] += h
                xm[mu] -= h
                grad[mu] = (fn(xp) - fn(xm)) / (2.0 * h)
            om = fn(x)
            cov = (
                grad
                - np.einsum("kma,kb->mab", gam, om)
                - np.einsum("kmb,ak->mab", gam, om)
            )
            worst = max(worst, np.abs(cov).max())
    return worst


def _pointwise_algebra_errors(model, chart_id, coords):
    """Quaternion relations, metric compatibility, frame duality."""
    geo = chart_geometry(model, chart_id, coords)
    triple = hyperkahler_at(model)
    jj = triple.jays()
    om = triple.omegas()
    n = coords.shape[0]
    g = geo["g"]
    C = geo["coframe"]
    E = geo["vectors"]

    duality = np.abs(np.einsum("nam,nmb->nab", C, E) - np.eye(4)).max()
    gram = np.abs(np.einsum("nma,nmk,nkb->nab", E, g, E) - np.eye(4)).max()
    recon = np.abs(np.einsum("nam,nak->nmk", C, C) - g).max()

    Jc = np.einsum("nmc,acd,ndk->namk", E, jj, C)
    quat = 0.0
    for a in range(3):
        quat = max(
            quat,
            np.abs(
                np.einsum("nij,njk->nik", Jc[:, a], Jc[:, a]) + np.eye(4)
            ).max(),
        )
    J12 = np.einsum("nij,njk->nik", Jc[:, 0], Jc[:, 1])
    quat = max(quat, np.abs(J12 - Jc[:, 2]).max())

    compat = 0.0
    omc = np.einsum("ncm,acd,ndk->namk", C, om, C)
    for a in range(3):
        JgJ = np.einsum("nim,nij,njk->nmk", Jc[:, a], g, Jc[:, a])
        compat = max(compat, np.abs(JgJ - g).max())
        # omega = g-dual of J
        compat = max(
            compat,
            np.abs(np.einsum("nim,nik->nmk", Jc[:, a], g) - omc[:, a]).max(),
        )
    return {
        "frame_duality": float(duality),
        "frame_orthonormal": float(gram),
        "metric_reconstruction": float(recon),
        "quaternion": float(quat),
        "compatibility": float(compat),
    }


def _sphere_selftest(h=1e-3):
    """Run S^2(1) x T^2 through the generic FD pipeline; pins the sign
    conventions (sectional +1, Ricci +1 on the sphere factor)."""

    def metric_fn(coords):
        n = coords.shape[0]
        g = np.zeros((n, 4, 4))
        g[:, 0, 0] = 1.0
        g[:, 1, 1] = np.sin(coords[:, 0]) ** 2
        g[:, 2, 2] = 1.0
        g[:, 3, 3] = 1.0
        return g

    def gamma_fn(coords):
        n = coords.shape[0]
        out = np.empty((n, 4, 4, 4))
        for i in range(n):
            x = coords[i]
            dg = np.zeros((4, 4, 4))
            for mu in range(4):
                xp = x.copy()
                xm = x.copy()
                xp[mu] += h
                xm[mu] -= h
                dg[mu] = (metric_fn(xp[None])[0] - metric_fn(xm[None])[0]) / (2.0 * h)
            ginv = np.linalg.inv(metric_fn(x[None])[0])
            gam = np.zeros((4, 4, 4))
            for k in range(4):
                for a in range(4):
                    for b in range(4):
                        acc = 0.0
                        for l in range(4):
                            acc += ginv[k, l] * (dg[a, b, l] + dg[b, a, l] - dg[l, a, b])
                        gam[k, a, b] = 0.5 * acc
            out[i] = gam
        return out

    x0 = np.array([1.1, 0.7, 0.0, 0.0])
    Rup = riemann_coord_fd(gamma_fn, x0, 1e-2)
    g0 = metric_fn(x0[None])[0]
    Rlow = np.einsum("lm,lkij->ijkm", g0, Rup)
    E = np.diag([1.0, 1.0 / math.sin(x0[0]), 1.0, 1.0])
    Rf = np.einsum("ijkm,ia,jb,kc,md->abcd", Rlow, E, E, E, E)
    K = Rf[0, 1, 1, 0]
    ric = np.einsum("mabm->ab", Rf)
    return float(K), float(ric[0, 0]), float(np.abs(ric[2:, 2:]).max())


def validate_ambient(model, seed=0, n_points=60):
    """Cross-check every closed form of the model against independent
    finite-difference computations.  Returns a flat report dict."""
    rng = np.random.default_rng(seed)
    h = model.fd_step
    report = {"kind": model.kind, "c": model.c}

    K, ric_s, ric_flat = _sphere_selftest()
    report["selftest_sphere_sectional"] = K
    report["selftest_sphere_ricci"] = ric_s
    report["selftest_flat_factor_ricci"] = ric_flat

    if model.kind == "flat":
        coords = _sample_coords(model, FLAT_CHART, n_points, rng)
        report.update(_pointwise_algebra_errors(model, FLAT_CHART, coords))
        sub = coords[: min(6, n_points)]
        report["omega_closed"] = _omega_closed_residual(model, FLAT_CHART, sub, h)
        report["omega_parallel"] = _omega_parallel_residual(model, FLAT_CHART, sub, h)
        report["ricci"] = 0.0
        return report

    for chart in (RADIAL_CHART, BOLT_CHART):
        coords = _sample_coords(model, chart, n_points, rng)
        alg = _pointwise_algebra_errors(model, chart, coords)
        for k, v in alg.items():
            report["%s_%s" % (chart, k)] = v

        sub = coords[: min(5, n_points)]
        report["%s_omega_closed" % chart] = _omega_closed_residual(model, chart, sub, h)
        report["%s_omega_parallel" % chart] = _omega_parallel_residual(
            model, chart, sub, h
        )

        cur_err = 0.0
        ric_err = 0.0
        for x in sub:
            pt = AmbientPoint(chart, x)
            Rf_num = riemann_at(model, pt, frame=True).R
            Rf_cf = eh_curvature_forms_at(model, pt).R
            cur_err = max(cur_err, np.abs(Rf_num - Rf_cf).max())
            ric_err = max(ric_err, np.abs(ricci_at(model, pt)).max())
        report["%s_curvature_match" % chart] = float(cur_err)
        report["%s_ricci" % chart] = float(ric_err)

    sub = _sample_coords(model, RADIAL_CHART, 4, rng)
    report["structure_eq"] = _structure_residual(model, RADIAL_CHART, sub, h)
    report["curvature_structure_eq"] = _curvature_structure_residual(
        model, RADIAL_CHART, sub[:2], h
    )

    # chart transition round trip
    rt = 0.0
    for x in _sample_coords(model, BOLT_CHART, 20, rng):
        p = AmbientPoint(BOLT_CHART, x)
        q = eh_bolt_transition(model, p)
        back = eh_bolt_transition(model, q)
        rt = max(rt, np.abs(back.coords - p.coords).max())
    report["transition_roundtrip"] = float(rt)

    # metric agreement across the transition (scalar invariant: lambda of
    # the curvature function a(r))
    s = model.c ** 0.25 / 2.0
    agree = 0.0
    for x in _sample_coords(model, BOLT_CHART, 10, rng):
        p = AmbientPoint(BOLT_CHART, x)
        q = eh_bolt_transition(model, p)
        agree = max(agree, abs(_eh_a_of_point(model, p) - _eh_a_of_point(model, q)))
    report["transition_curvature_agree"] = float(agree)

    # cone angle of the fiber disc at the bolt: F/ubar -> 1
    u_small = np.array([1e-4, 1e-3, 1e-2])
    r = model.c ** 0.25 * np.sqrt(np.cosh(u_small))
    A = 1.0 - model.c / r ** 4
    circ = r * np.sqrt(A) / 2.0  # sqrt(g_psipsi) from the radial metric
    arc = s * backend.g_of_u(u_small)
    report["cone_angle"] = float((circ / arc)[0])
    report["cone_angle_err"] = float(abs((circ / arc)[0] - 1.0))
    return report
