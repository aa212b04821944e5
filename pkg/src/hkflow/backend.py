"""Numba/numpy twin kernels for the hot paths.

The flow spends nearly all of its time evaluating the Eguchi-Hanson
bolt-chart ambient geometry (metric, metric derivatives, Christoffel
symbols, orthonormal frame) at every node, four times per RK4 step.  That
pipeline is implemented twice: a vectorized pure-numpy version (reference)
and an @njit scalar-loop version.  Which one runs is read from the
HKFLOW_BACKEND environment variable each time a kernel is dispatched:

    HKFLOW_BACKEND=numpy   force the pure-numpy kernels
    HKFLOW_BACKEND=numba   force the jit kernels (error if numba missing)
    unset                  numba when importable, else numpy

Both twins implement the same closed forms; tests assert bit-level-ish
parity (<= 1e-13) between them.

Geometry conventions used by the kernels (bolt chart):

  coordinates (v1, v2, theta, phi); s = c^(1/4)/2; W = v1^2 + v2^2;
  ubar = sqrt(W) is the geodesic distance to the bolt along the fiber;
  u solves ubar = s*G(u) with G(u) = integral_0^u sqrt(cosh t) dt;
  cosh u = r^2/sqrt(c).  Profile functions of W:
      Q = s^2 cosh u              (sphere radius^2 factor)
      F^2 = s^2 sinh u tanh u     (fiber circumference factor, F = ubar*sqrt(P))
      P = F^2/W,  D = (P-1)/W
  metric:  g11 = 1 + v2^2 D, g22 = 1 + v1^2 D, g12 = -v1 v2 D, g33 = Q,
           g44 = Q sin^2(theta) + W P cos^2(theta),
           g14 = -P cos(theta) v2, g24 = +P cos(theta) v1.

G is represented by a Chebyshev interpolant of sqrt(cosh) on [0, U_MAX]
integrated termwise; the jit kernels evaluate it with a local Clenshaw
recurrence and invert it with Newton (G' = sqrt(cosh) exactly).
"""

import math
import os

import numpy as np
from numpy.polynomial import chebyshev as _chebmod

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


U_MAX = 6.0
_U_SWITCH = 1e-2

_g_cheb = _chebmod.Chebyshev.interpolate(
    lambda t: np.sqrt(np.cosh(t)), 120, domain=[0.0, U_MAX]
).integ(lbnd=0.0)
# coefficients beyond index ~36 sit below 1e-15: dead weight in clenshaw
G_COEF = np.ascontiguousarray(_g_cheb.coef[:40].copy())
_g_cheb = _chebmod.Chebyshev(G_COEF, domain=[0.0, U_MAX])
G_UMAX_VALUE = float(_g_cheb(U_MAX))

# inverse of w = G(u) tabulated on a uniform w grid; linear interpolation
# seeds Newton to ~1e-6, three iterations polish to machine precision
_INV_N = 4096
_u_dense = np.linspace(0.0, U_MAX, 16385)
_W_STEP = G_UMAX_VALUE / _INV_N
_INV_TAB = np.ascontiguousarray(
    np.interp(np.arange(_INV_N + 2) * _W_STEP,
              _g_cheb(_u_dense), _u_dense)
)


def backend_name():
    env = os.environ.get("HKFLOW_BACKEND", "").strip().lower()
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("HKFLOW_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if HAS_NUMBA else "numpy"


def use_numba():
    return backend_name() == "numba"


def set_threads(n):
    if HAS_NUMBA and n is not None and n >= 1:
        try:
            numba.set_num_threads(n)
        except ValueError:
            pass


# ----------------------------------------------------------------------
# G(u) and its Newton inverse
# ----------------------------------------------------------------------

def g_of_u(u):
    """G(u) = integral_0^u sqrt(cosh t) dt, vectorized."""
    return _g_cheb(np.asarray(u, dtype=float))


def u_from_ubar(ubar, s):
    """Invert ubar = s*G(u) for u >= 0 (table seed + Newton polish)."""
    target = np.asarray(ubar, dtype=float) / s
    idx = np.clip(target / _W_STEP, 0.0, _INV_N).astype(np.int64)
    frac = target / _W_STEP - idx
    u = _INV_TAB[idx] * (1.0 - frac) + _INV_TAB[idx + 1] * frac
    u = np.clip(u, 0.0, U_MAX)
    for _ in range(3):
        f = _g_cheb(u) - target
        u = np.maximum(u - f / np.sqrt(np.cosh(u)), 0.0)
    return u


@njit(cache=True)
def _clenshaw(x, coef, lo, hi):
    t = (2.0 * x - (lo + hi)) / (hi - lo)
    b1 = 0.0
    b2 = 0.0
    for k in range(coef.shape[0] - 1, 0, -1):
        b = 2.0 * t * b1 - b2 + coef[k]
        b2 = b1
        b1 = b
    return t * b1 - b2 + coef[0]


@njit(cache=True)
def _u_from_target(target, coef, inv_tab, w_step):
    if target <= 0.0:
        return 0.0
    pos = target / w_step
    idx = int(pos)
    if idx > _INV_N:
        idx = _INV_N
    frac = pos - idx
    u = inv_tab[idx] * (1.0 - frac) + inv_tab[idx + 1] * frac
    if u < 0.0:
        u = 0.0
    elif u > U_MAX:
        u = U_MAX
    for _ in range(3):
        f = _clenshaw(u, coef, 0.0, U_MAX) - target
        u = u - f / math.sqrt(math.cosh(u))
        if u < 0.0:
            u = 0.0
    return u


# ----------------------------------------------------------------------
# profile functions of u (shared algebra, twin implementations)
# ----------------------------------------------------------------------

def _profile_numpy(u, s2):
    ch = np.cosh(u)
    sh = np.sinh(u)
    sqch = np.sqrt(ch)
    G = _g_cheb(u)
    small = u < _U_SWITCH
    u2 = u * u

    Gs = np.where(small, 1.0, G)  # dodge 0/0 in the masked-out branch
    G2 = Gs * Gs
    P_d = sh * (sh / ch) / G2
    D_d = (P_d - 1.0) / (s2 * G2)
    dPdu = sh * (1.0 + 1.0 / (ch * ch)) / G2 - 2.0 * P_d * sqch / Gs
    dWdu = 2.0 * s2 * Gs * sqch
    dPdW_d = dPdu / dWdu
    dQdW_d = sh / (2.0 * Gs * sqch)
    dDdW_d = (dPdW_d - D_d) / (s2 * G2)

    P_s = 1.0 - u2 / 3.0 + 5.0 * u2 * u2 / 36.0
    D_s = (-1.0 / 3.0 + 7.0 * u2 / 36.0) / s2
    dPdW_s = (-1.0 / 3.0 + 7.0 * u2 / 18.0) / s2
    dQdW_s = 0.5 * (1.0 - u2 / 6.0)
    dDdW_s = (7.0 / 36.0) * (1.0 - u2 / 6.0) / (s2 * s2)

    P = np.where(small, P_s, P_d)
    D = np.where(small, D_s, D_d)
    dPdW = np.where(small, dPdW_s, dPdW_d)
    dQdW = np.where(small, dQdW_s, dQdW_d)
    dDdW = np.where(small, dDdW_s, dDdW_d)
    Q = s2 * ch
    return P, Q, D, dPdW, dQdW, dDdW


@njit(cache=True)
def _profile_scalar(u, s2):
    ch = math.cosh(u)
    Q = s2 * ch
    if u < _U_SWITCH:
        u2 = u * u
        P = 1.0 - u2 / 3.0 + 5.0 * u2 * u2 / 36.0
        D = (-1.0 / 3.0 + 7.0 * u2 / 36.0) / s2
        dPdW = (-1.0 / 3.0 + 7.0 * u2 / 18.0) / s2
        dQdW = 0.5 * (1.0 - u2 / 6.0)
        dDdW = (7.0 / 36.0) * (1.0 - u2 / 6.0) / (s2 * s2)
        return P, Q, D, dPdW, dQdW, dDdW
    sh = math.sinh(u)
    sqch = math.sqrt(ch)
    G = _clenshaw(u, G_COEF, 0.0, U_MAX)
    G2 = G * G
    P = sh * (sh / ch) / G2
    D = (P - 1.0) / (s2 * G2)
    dPdu = sh * (1.0 + 1.0 / (ch * ch)) / G2 - 2.0 * P * sqch / G
    dWdu = 2.0 * s2 * G * sqch
    dPdW = dPdu / dWdu
    dQdW = sh / (2.0 * G * sqch)
    # (dPdW - D)/W cancels badly just above the series switch (abs error
    # ~1e-5 at u=0.02, falling like u^-4); harmless because dDdW only
    # ever enters the metric derivatives with a v^3 ~ (s u)^3 prefactor.
    dDdW = (dPdW - D) / (s2 * G2)
    return P, Q, D, dPdW, dQdW, dDdW


# ----------------------------------------------------------------------
# full bolt-chart ambient pipeline
# ----------------------------------------------------------------------

def _bolt_fill_numpy(coords, c):
    n = coords.shape[0]
    v1 = coords[:, 0]
    v2 = coords[:, 1]
    th = coords[:, 2]
    s2 = math.sqrt(c) / 4.0
    s = math.sqrt(s2)

    W = v1 * v1 + v2 * v2
    ubar = np.sqrt(W)
    u = u_from_ubar(ubar, s)
    P, Q, D, dPdW, dQdW, dDdW = _profile_numpy(u, s2)

    st = np.sin(th)
    ct = np.cos(th)

    g = np.zeros((n, 4, 4))
    g[:, 0, 0] = 1.0 + v2 * v2 * D
    g[:, 1, 1] = 1.0 + v1 * v1 * D
    g[:, 0, 1] = -v1 * v2 * D
    g[:, 1, 0] = g[:, 0, 1]
    g[:, 2, 2] = Q
    g[:, 3, 3] = Q * st * st + W * P * ct * ct
    g[:, 0, 3] = -P * ct * v2
    g[:, 3, 0] = g[:, 0, 3]
    g[:, 1, 3] = P * ct * v1
    g[:, 3, 1] = g[:, 1, 3]

    dg = np.zeros((n, 4, 4, 4))  # dg[m, a, b] = d g_ab / d x^m
    WPp = P + W * dPdW  # d(W P)/dW

    def sym(m, a, b, val):
        dg[:, m, a, b] = val
        if a != b:
            dg[:, m, b, a] = val

    sym(0, 0, 0, v2 * v2 * dDdW * 2.0 * v1)
    sym(1, 0, 0, 2.0 * v2 * D + v2 * v2 * dDdW * 2.0 * v2)
    sym(0, 1, 1, 2.0 * v1 * D + v1 * v1 * dDdW * 2.0 * v1)
    sym(1, 1, 1, v1 * v1 * dDdW * 2.0 * v2)
    sym(0, 0, 1, -v2 * D - v1 * v2 * dDdW * 2.0 * v1)
    sym(1, 0, 1, -v1 * D - v1 * v2 * dDdW * 2.0 * v2)
    sym(0, 2, 2, dQdW * 2.0 * v1)
    sym(1, 2, 2, dQdW * 2.0 * v2)
    sym(0, 3, 3, dQdW * 2.0 * v1 * st * st + WPp * 2.0 * v1 * ct * ct)
    sym(1, 3, 3, dQdW * 2.0 * v2 * st * st + WPp * 2.0 * v2 * ct * ct)
    sym(2, 3, 3, 2.0 * st * ct * (Q - W * P))
    sym(0, 0, 3, -dPdW * 2.0 * v1 * ct * v2)
    sym(1, 0, 3, -dPdW * 2.0 * v2 * ct * v2 - P * ct)
    sym(2, 0, 3, P * st * v2)
    sym(0, 1, 3, dPdW * 2.0 * v1 * ct * v1 + P * ct)
    sym(1, 1, 3, dPdW * 2.0 * v2 * ct * v1)
    sym(2, 1, 3, -P * st * v1)

    ginv = np.zeros((n, 4, 4))
    a00 = g[:, 0, 0]
    a01 = g[:, 0, 1]
    a03 = g[:, 0, 3]
    a11 = g[:, 1, 1]
    a13 = g[:, 1, 3]
    a33 = g[:, 3, 3]
    det3 = (
        a00 * (a11 * a33 - a13 * a13)
        - a01 * (a01 * a33 - a13 * a03)
        + a03 * (a01 * a13 - a11 * a03)
    )
    ginv[:, 0, 0] = (a11 * a33 - a13 * a13) / det3
    ginv[:, 1, 1] = (a00 * a33 - a03 * a03) / det3
    ginv[:, 3, 3] = (a00 * a11 - a01 * a01) / det3
    ginv[:, 0, 1] = (a03 * a13 - a01 * a33) / det3
    ginv[:, 1, 0] = ginv[:, 0, 1]
    ginv[:, 0, 3] = (a01 * a13 - a03 * a11) / det3
    ginv[:, 3, 0] = ginv[:, 0, 3]
    ginv[:, 1, 3] = (a01 * a03 - a13 * a00) / det3
    ginv[:, 3, 1] = ginv[:, 1, 3]
    ginv[:, 2, 2] = 1.0 / g[:, 2, 2]

    gamma = christoffel_from_dmetric(ginv, dg)

    sqP = np.sqrt(P)
    sqQ = np.sqrt(Q)
    F = ubar * sqP
    safe = np.where(ubar > 0.0, ubar, 1.0)
    cp = np.where(ubar > 0.0, v1 / safe, 1.0)
    sp = np.where(ubar > 0.0, v2 / safe, 0.0)

    coframe = np.zeros((n, 4, 4))  # coframe[a, mu]
    coframe[:, 0, 0] = cp
    coframe[:, 0, 1] = sp
    coframe[:, 1, 2] = -sqQ * sp
    coframe[:, 1, 3] = sqQ * st * cp
    coframe[:, 2, 2] = -sqQ * cp
    coframe[:, 2, 3] = -sqQ * st * sp
    coframe[:, 3, 0] = sqP * sp
    coframe[:, 3, 1] = -sqP * cp
    coframe[:, 3, 3] = -F * ct

    vectors = np.zeros((n, 4, 4))  # vectors[mu, a] (column a = e_a)
    a1 = F * ct * cp / (sqP * sqQ * st)
    a2 = -F * ct * sp / (sqP * sqQ * st)
    vectors[:, 0, 0] = cp
    vectors[:, 1, 0] = sp
    vectors[:, 0, 1] = a1 * sp
    vectors[:, 1, 1] = -a1 * cp
    vectors[:, 2, 1] = -sp / sqQ
    vectors[:, 3, 1] = cp / (sqQ * st)
    vectors[:, 0, 2] = a2 * sp
    vectors[:, 1, 2] = -a2 * cp
    vectors[:, 2, 2] = -cp / sqQ
    vectors[:, 3, 2] = -sp / (sqQ * st)
    vectors[:, 0, 3] = sp / sqP
    vectors[:, 1, 3] = -cp / sqP

    return g, ginv, dg, gamma, coframe, vectors


@njit(cache=True)
def _bolt_fill_numba(coords, c, coef, inv_tab, w_step,
                     g, ginv, dg, gamma, coframe, vectors):
    n = coords.shape[0]
    s2 = math.sqrt(c) / 4.0
    s = math.sqrt(s2)
    for idx in range(n):
        v1 = coords[idx, 0]
        v2 = coords[idx, 1]
        th = coords[idx, 2]
        W = v1 * v1 + v2 * v2
        ubar = math.sqrt(W)
        u = _u_from_target(ubar / s, coef, inv_tab, w_step)
        P, Q, D, dPdW, dQdW, dDdW = _profile_scalar(u, s2)
        st = math.sin(th)
        ct = math.cos(th)

        g[idx, 0, 0] = 1.0 + v2 * v2 * D
        g[idx, 1, 1] = 1.0 + v1 * v1 * D
        g[idx, 0, 1] = -v1 * v2 * D
        g[idx, 1, 0] = g[idx, 0, 1]
        g[idx, 2, 2] = Q
        g[idx, 3, 3] = Q * st * st + W * P * ct * ct
        g[idx, 0, 3] = -P * ct * v2
        g[idx, 3, 0] = g[idx, 0, 3]
        g[idx, 1, 3] = P * ct * v1
        g[idx, 3, 1] = g[idx, 1, 3]
        g[idx, 0, 2] = 0.0
        g[idx, 2, 0] = 0.0
        g[idx, 1, 2] = 0.0
        g[idx, 2, 1] = 0.0
        g[idx, 2, 3] = 0.0
        g[idx, 3, 2] = 0.0

        WPp = P + W * dPdW
        for m in range(4):
            for a in range(4):
                for b in range(4):
                    dg[idx, m, a, b] = 0.0
        dg[idx, 0, 0, 0] = v2 * v2 * dDdW * 2.0 * v1
        dg[idx, 1, 0, 0] = 2.0 * v2 * D + v2 * v2 * dDdW * 2.0 * v2
        dg[idx, 0, 1, 1] = 2.0 * v1 * D + v1 * v1 * dDdW * 2.0 * v1
        dg[idx, 1, 1, 1] = v1 * v1 * dDdW * 2.0 * v2
        dg[idx, 0, 0, 1] = -v2 * D - v1 * v2 * dDdW * 2.0 * v1
        dg[idx, 1, 0, 1] = -v1 * D - v1 * v2 * dDdW * 2.0 * v2
        dg[idx, 0, 2, 2] = dQdW * 2.0 * v1
        dg[idx, 1, 2, 2] = dQdW * 2.0 * v2
        dg[idx, 0, 3, 3] = dQdW * 2.0 * v1 * st * st + WPp * 2.0 * v1 * ct * ct
        dg[idx, 1, 3, 3] = dQdW * 2.0 * v2 * st * st + WPp * 2.0 * v2 * ct * ct
        dg[idx, 2, 3, 3] = 2.0 * st * ct * (Q - W * P)
        dg[idx, 0, 0, 3] = -dPdW * 2.0 * v1 * ct * v2
        dg[idx, 1, 0, 3] = -dPdW * 2.0 * v2 * ct * v2 - P * ct
        dg[idx, 2, 0, 3] = P * st * v2
        dg[idx, 0, 1, 3] = dPdW * 2.0 * v1 * ct * v1 + P * ct
        dg[idx, 1, 1, 3] = dPdW * 2.0 * v2 * ct * v1
        dg[idx, 2, 1, 3] = -P * st * v1
        for m in range(4):
            dg[idx, m, 1, 0] = dg[idx, m, 0, 1]
            dg[idx, m, 3, 0] = dg[idx, m, 0, 3]
            dg[idx, m, 3, 1] = dg[idx, m, 1, 3]

        a00 = g[idx, 0, 0]
        a01 = g[idx, 0, 1]
        a03 = g[idx, 0, 3]
        a11 = g[idx, 1, 1]
        a13 = g[idx, 1, 3]
        a33 = g[idx, 3, 3]
        det3 = (
            a00 * (a11 * a33 - a13 * a13)
            - a01 * (a01 * a33 - a13 * a03)
            + a03 * (a01 * a13 - a11 * a03)
        )
        for a in range(4):
            for b in range(4):
                ginv[idx, a, b] = 0.0
        ginv[idx, 0, 0] = (a11 * a33 - a13 * a13) / det3
        ginv[idx, 1, 1] = (a00 * a33 - a03 * a03) / det3
        ginv[idx, 3, 3] = (a00 * a11 - a01 * a01) / det3
        ginv[idx, 0, 1] = (a03 * a13 - a01 * a33) / det3
        ginv[idx, 1, 0] = ginv[idx, 0, 1]
        ginv[idx, 0, 3] = (a01 * a13 - a03 * a11) / det3
        ginv[idx, 3, 0] = ginv[idx, 0, 3]
        ginv[idx, 1, 3] = (a01 * a03 - a13 * a00) / det3
        ginv[idx, 3, 1] = ginv[idx, 1, 3]
        ginv[idx, 2, 2] = 1.0 / g[idx, 2, 2]

        for k in range(4):
            for i in range(4):
                for j in range(4):
                    acc = 0.0
                    for l in range(4):
                        acc += ginv[idx, k, l] * (
                            dg[idx, i, j, l] + dg[idx, j, i, l] - dg[idx, l, i, j]
                        )
                    gamma[idx, k, i, j] = 0.5 * acc

        sqP = math.sqrt(P)
        sqQ = math.sqrt(Q)
        F = ubar * sqP
        if ubar > 0.0:
            cp = v1 / ubar
            sp = v2 / ubar
        else:
            cp = 1.0
            sp = 0.0

        for a in range(4):
            for b in range(4):
                coframe[idx, a, b] = 0.0
                vectors[idx, a, b] = 0.0
        coframe[idx, 0, 0] = cp
        coframe[idx, 0, 1] = sp
        coframe[idx, 1, 2] = -sqQ * sp
        coframe[idx, 1, 3] = sqQ * st * cp
        coframe[idx, 2, 2] = -sqQ * cp
        coframe[idx, 2, 3] = -sqQ * st * sp
        coframe[idx, 3, 0] = sqP * sp
        coframe[idx, 3, 1] = -sqP * cp
        coframe[idx, 3, 3] = -F * ct

        a1 = F * ct * cp / (sqP * sqQ * st)
        a2 = -F * ct * sp / (sqP * sqQ * st)
        vectors[idx, 0, 0] = cp
        vectors[idx, 1, 0] = sp
        vectors[idx, 0, 1] = a1 * sp
        vectors[idx, 1, 1] = -a1 * cp
        vectors[idx, 2, 1] = -sp / sqQ
        vectors[idx, 3, 1] = cp / (sqQ * st)
        vectors[idx, 0, 2] = a2 * sp
        vectors[idx, 1, 2] = -a2 * cp
        vectors[idx, 2, 2] = -cp / sqQ
        vectors[idx, 3, 2] = -sp / (sqQ * st)
        vectors[idx, 0, 3] = sp / sqP
        vectors[idx, 1, 3] = -cp / sqP


def bolt_ambient(coords, c, force=None):
    """Full bolt-chart geometry batch.

    coords: (n, 4) array of (v1, v2, theta, phi).
    Returns (g, ginv, dg, gamma, coframe, vectors); see module docstring
    for layouts.  `force` overrides the backend choice ('numpy'/'numba').
    """
    coords = np.ascontiguousarray(coords, dtype=float).reshape(-1, 4)
    which = force if force is not None else backend_name()
    if which == "numba":
        n = coords.shape[0]
        g = np.empty((n, 4, 4))
        ginv = np.empty((n, 4, 4))
        dg = np.empty((n, 4, 4, 4))
        gamma = np.empty((n, 4, 4, 4))
        coframe = np.empty((n, 4, 4))
        vectors = np.empty((n, 4, 4))
        _bolt_fill_numba(coords, c, G_COEF, _INV_TAB, _W_STEP,
                         g, ginv, dg, gamma, coframe, vectors)
        return g, ginv, dg, gamma, coframe, vectors
    return _bolt_fill_numpy(coords, c)


def christoffel_from_dmetric(ginv, dg):
    """Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij), batched."""
    S = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
    # S[n, i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    return 0.5 * np.einsum("nkl,nijl->nkij", ginv, S)
