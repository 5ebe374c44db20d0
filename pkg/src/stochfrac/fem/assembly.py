"""Residuals, tangents and block potentials of the discrete incremental problem.

The plastic strain is eliminated from the unknowns: at each quadrature point

    eps_p = eps_p_n + sqrt(3/2) (alpha - alpha_n) N(u),

with ``N`` the unit deviator of ``eps - eps_p_n``. The three blocks are then

* ``u``: elastic energy of ``(eps, eps_p)`` minus the external work,
* ``alpha``: the same elastic energy plus hardening, yield dissipation,
  viscosity and the gradient term, a quadratic in nodal ``alpha``,
* ``d``: history drive ``X H g(d)``, crack density and viscosity.

Every residual below is the exact gradient of the matching potential, which
the finite-difference checks in the test suite verify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..constitutive import SQRT32
from ..errors import ArgumentError
from .kernels import element_scalar, element_vector, qp_mech
from .problem import DiscreteProblem


# --------------------------------------------------------------------------
# sparsity pattern with deterministic scatter
# --------------------------------------------------------------------------


class SparsePattern:
    """CSR pattern of an element connectivity with a fixed scatter map.

    Element contributions are summed with ``np.bincount`` in a fixed order,
    so the assembled operator does not depend on how element work is split.
    """

    def __init__(self, conn: np.ndarray, n: int):
        conn = np.asarray(conn, dtype=np.int64)
        E, k = conn.shape
        rows = np.repeat(conn, k, axis=1).ravel()
        cols = np.tile(conn, (1, k)).ravel()
        keys = rows * n + cols
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.scatter = self.scatter.ravel()
        self.rows = uniq // n
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.rows, minlength=n), out=self.indptr[1:])
        self.conn = conn
        self.n = n
        self.nnz = len(uniq)
        self.diag = np.flatnonzero(self.rows == self.indices)

    def matrix(self, Ke: np.ndarray) -> sparse.csr_matrix:
        data = np.bincount(self.scatter, weights=Ke.ravel(), minlength=self.nnz)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def vector(self, fe: np.ndarray) -> np.ndarray:
        return np.bincount(self.conn.ravel(), weights=fe.ravel(), minlength=self.n)

    def condense(self, A: sparse.csr_matrix, fixed: np.ndarray) -> sparse.csr_matrix:
        """Zero the rows and columns of ``fixed`` dofs and put 1 on their diagonal."""
        if len(fixed) == 0:
            return A
        mask = np.zeros(self.n, dtype=bool)
        mask[fixed] = True
        data = A.data.copy()
        data[mask[self.rows] | mask[self.indices]] = 0.0
        hit = self.diag[mask[self.rows[self.diag]]]
        data[hit] = 1.0
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=A.shape)


def _cache(problem: DiscreteProblem) -> dict:
    c = problem.__dict__.setdefault("_assembly_cache", {})
    if not c:
        mesh = problem.mesh
        dim = mesh.dim
        conn = mesh.elements
        udofs = (conn[:, :, None] * dim + np.arange(dim)).reshape(len(conn), -1)
        c["udofs"] = udofs
        c["u_pattern"] = SparsePattern(udofs, mesh.n_nodes * dim)
        c["s_pattern"] = SparsePattern(conn, mesh.n_nodes)
    return c


def u_pattern(problem: DiscreteProblem) -> SparsePattern:
    return _cache(problem)["u_pattern"]


def scalar_pattern(problem: DiscreteProblem) -> SparsePattern:
    return _cache(problem)["s_pattern"]


# --------------------------------------------------------------------------
# quadrature-point interpolation
# --------------------------------------------------------------------------


def interpolate(problem: DiscreteProblem, nodal: np.ndarray) -> np.ndarray:
    """Scalar nodal field at all quadrature points, flattened element-major."""
    geo = problem.geometry
    return np.einsum("qa,ea->eq", geo.N, nodal[problem.mesh.elements]).ravel()


def gradient(problem: DiscreteProblem, nodal: np.ndarray) -> np.ndarray:
    """Gradient of a scalar nodal field, shape ``(E, Q, dim)``."""
    return np.einsum("eqad,ea->eqd", problem.geometry.grad, nodal[problem.mesh.elements])


def strain(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    """Mandel strain 4-vectors at all quadrature points, shape ``(P, 4)``."""
    ue = u[_cache(problem)["udofs"]]
    return np.einsum("eqsi,ei->eqs", problem.geometry.B, ue).reshape(-1, 4)


@dataclass
class PointFields:
    """Quadrature-point quantities for fixed ``(u, alpha, d)``."""

    eps: np.ndarray
    c: np.ndarray
    a: np.ndarray
    a_n: np.ndarray
    d: np.ndarray
    g: np.ndarray
    gel: np.ndarray
    gh: np.ndarray
    sig: np.ndarray
    C: np.ndarray
    W: np.ndarray
    psi_plus: np.ndarray
    ne: np.ndarray


def _coef(problem: DiscreteProblem, name: str) -> np.ndarray:
    return problem.materials.at_qp(name, problem.n_qp)


def point_fields(problem: DiscreteProblem, u, alpha, d) -> PointFields:
    st = problem.state
    eps = strain(problem, np.asarray(u, dtype=float))
    a = interpolate(problem, np.asarray(alpha, dtype=float))
    a_n = interpolate(problem, st.alpha_n)
    dq = interpolate(problem, np.asarray(d, dtype=float))
    g = (1.0 - dq) ** 2
    k = _coef(problem, "k_res")
    gel = (1.0 - k) * g + k
    gh = g if problem.materials.hardening == "quadratic" else 1.0 - dq * dq
    c = SQRT32 * (a - a_n)
    K = _coef(problem, "K")
    mu = _coef(problem, "mu")
    sig, C, W, psi_plus = qp_mech(eps, st.eps_p_n, c, gel, K, mu)
    e = eps - st.eps_p_n
    e[:, :3] -= e[:, :3].sum(axis=1, keepdims=True) / 3.0
    ne = np.sqrt(np.einsum("pi,pi->p", e, e))
    return PointFields(eps, c, a, a_n, dq, g, gel, gh, sig, C, W, psi_plus, ne)


def plastic_strain(problem: DiscreteProblem, u, alpha) -> np.ndarray:
    """Updated plastic strain ``eps_p_n + c N`` at all quadrature points."""
    st = problem.state
    eps = strain(problem, np.asarray(u, dtype=float))
    c = SQRT32 * (interpolate(problem, np.asarray(alpha, dtype=float)) - interpolate(problem, st.alpha_n))
    e = eps - st.eps_p_n
    e[:, :3] -= e[:, :3].sum(axis=1, keepdims=True) / 3.0
    ne = np.sqrt(np.einsum("pi,pi->p", e, e))
    safe = np.where(ne > 0, ne, 1.0)
    n = np.where((ne > 0)[:, None], e / safe[:, None], 0.0)
    return st.eps_p_n + c[:, None] * n


def _eq(problem: DiscreteProblem, x: np.ndarray) -> np.ndarray:
    return x.reshape(problem.mesh.n_elements, problem.n_qp)


def _load(problem: DiscreteProblem, load) -> float:
    return problem.state.load if load is None else float(load)


# --------------------------------------------------------------------------
# displacement block
# --------------------------------------------------------------------------


def internal_force(problem: DiscreteProblem, u, alpha, d, pf: PointFields | None = None, with_tangent=True):
    pf = pf or point_fields(problem, u, alpha, d)
    geo = problem.geometry
    E, Q = geo.wdet.shape
    S = 4
    Ke, fe = element_vector(geo.B, geo.wdet, pf.C.reshape(E, Q, S, S), pf.sig.reshape(E, Q, S))
    pat = u_pattern(problem)
    return pat.vector(fe), (pat.matrix(Ke) if with_tangent else None)


def assemble_u(problem: DiscreteProblem, u, alpha, d, load=None, condensed: bool = True):
    """Residual ``f_int - f_ext`` and consistent tangent of the u-block.

    With ``condensed`` the Dirichlet rows of the residual are zeroed and the
    tangent rows/columns replaced by the identity.
    """
    f_int, Kt = internal_force(problem, u, alpha, d)
    r = f_int - problem.layout.external_force(_load(problem, load))
    if condensed:
        fixed = problem.layout.u_fixed
        r[fixed] = 0.0
        Kt = u_pattern(problem).condense(Kt, fixed)
    return r, Kt


def reaction_vector(problem: DiscreteProblem, u, alpha, d, load=None) -> np.ndarray:
    """Unconstrained residual ``f_int - f_ext``; nonzero only at supports."""
    f_int, _ = internal_force(problem, u, alpha, d, with_tangent=False)
    return f_int - problem.layout.external_force(_load(problem, load))


def reaction_force(problem: DiscreteProblem, u, alpha, d, tag: str, load=None) -> float:
    """Normal reaction on ``tag`` from the residual at its nodes; tension positive."""
    mesh = problem.mesh
    if tag not in mesh.boundary_nodes:
        raise ArgumentError(f"unknown boundary tag {tag!r}")
    n = mesh.outward_normal(tag)
    r = reaction_vector(problem, u, alpha, d, load)
    nodes = mesh.boundary_nodes[tag]
    dim = mesh.dim
    return float(sum(n[k] * r[nodes * dim + k].sum() for k in range(dim)))


def potential_u(problem: DiscreteProblem, u, alpha, d, load=None) -> float:
    """Elastic energy at the eliminated plastic strain minus external work."""
    pf = point_fields(problem, u, alpha, d)
    f_ext = problem.layout.external_force(_load(problem, load))
    return float(np.dot(problem.geometry.wdet.ravel(), pf.W) - np.dot(f_ext, u))


# --------------------------------------------------------------------------
# hardening block
# --------------------------------------------------------------------------


def _alpha_coefficients(problem: DiscreteProblem, pf: PointFields, tau: float):
    mu_g = _coef(problem, "mu") * pf.gel
    Hh = _coef(problem, "H") * pf.gh
    visc = _coef(problem, "eta_p") / tau
    sy = pf.g * _coef(problem, "sigma_Y")
    mass = 3.0 * mu_g + Hh + visc
    src = -2.0 * SQRT32 * mu_g * pf.ne - (3.0 * mu_g + visc) * pf.a_n + sy
    stiff = sy * _coef(problem, "l_p") ** 2
    return mass, stiff, src


def assemble_alpha(problem: DiscreteProblem, u, alpha, d, tau: float = 1.0, pf: PointFields | None = None):
    """Residual ``A alpha + b`` and the symmetric matrix ``A`` of the alpha-block.

    The block is an exact quadratic in nodal ``alpha`` for frozen ``u`` and ``d``.
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    pf = pf or point_fields(problem, u, alpha, d)
    mass, stiff, src = _alpha_coefficients(problem, pf, tau)
    A, b = _scalar_system(problem, mass, stiff, src)
    return A @ alpha + b, A


def potential_alpha_terms(problem: DiscreteProblem, u, alpha, d, tau: float = 1.0) -> float:
    """Hardening, yield dissipation, viscosity and gradient energy of ``alpha``."""
    pf = point_fields(problem, u, alpha, d)
    da = pf.a - pf.a_n
    loc = (0.5 * _coef(problem, "H") * pf.gh * pf.a**2 + pf.g * _coef(problem, "sigma_Y") * da
           + 0.5 * _coef(problem, "eta_p") / tau * da**2)
    ga = gradient(problem, np.asarray(alpha, dtype=float))
    grad_term = 0.5 * pf.g * _coef(problem, "sigma_Y") * _coef(problem, "l_p") ** 2 * (ga**2).sum(-1).ravel()
    return float(np.dot(problem.geometry.wdet.ravel(), loc + grad_term))


def potential_mech(problem: DiscreteProblem, u, alpha, d, load=None, tau: float = 1.0) -> float:
    """Mechanical part of the incremental potential; its gradients are the u- and alpha-residuals."""
    return potential_u(problem, u, alpha, d, load) + potential_alpha_terms(problem, u, alpha, d, tau)


# --------------------------------------------------------------------------
# damage block
# --------------------------------------------------------------------------


def _d_coefficients(problem: DiscreteProblem, history: np.ndarray, tau: float):
    mat = problem.materials
    X = _coef(problem, "g_f") / (mat.c_f * _coef(problem, "l_f"))
    visc = _coef(problem, "eta_f") / tau
    d_n = interpolate(problem, problem.state.d_n)
    if mat.at_model == "AT2":
        mass = 2.0 * X * history + 2.0 * X + visc
        src = -2.0 * X * history - visc * d_n
    else:
        mass = 2.0 * X * history + visc
        src = -2.0 * X * history + X - visc * d_n
    stiff = 2.0 * _coef(problem, "g_f") * _coef(problem, "l_f") / mat.c_f
    return mass, stiff, src


def assemble_d(problem: DiscreteProblem, d, history, tau: float = 1.0):
    """Residual ``A d + b`` and symmetric matrix ``A`` of the damage block at frozen history."""
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    history = np.asarray(history, dtype=float)
    if history.shape != (problem.n_points,):
        raise ArgumentError("history must hold one value per quadrature point")
    mass, stiff, src = _d_coefficients(problem, history, tau)
    A, b = _scalar_system(problem, mass, stiff, src)
    return A @ d + b, A


def potential_d(problem: DiscreteProblem, d, history, tau: float = 1.0) -> float:
    """``int X H g(d) + g_f gamma_l(d) + eta_f / (2 tau) (d - d_n)^2``."""
    mat = problem.materials
    dq = interpolate(problem, np.asarray(d, dtype=float))
    gd = gradient(problem, np.asarray(d, dtype=float))
    l_f = _coef(problem, "l_f")
    g_f = _coef(problem, "g_f")
    w = dq if mat.at_model == "AT1" else dq * dq
    gamma = (w / l_f + l_f * (gd**2).sum(-1).ravel()) / mat.c_f
    X = g_f / (mat.c_f * l_f)
    d_n = interpolate(problem, problem.state.d_n)
    dens = X * np.asarray(history) * (1.0 - dq) ** 2 + g_f * gamma + 0.5 * _coef(problem, "eta_f") / tau * (dq - d_n) ** 2
    return float(np.dot(problem.geometry.wdet.ravel(), dens))


def fracture_surface_energy(problem: DiscreteProblem, d) -> float:
    mat = problem.materials
    dq = interpolate(problem, np.asarray(d, dtype=float))
    gd = gradient(problem, np.asarray(d, dtype=float))
    l_f = _coef(problem, "l_f")
    w = dq if mat.at_model == "AT1" else dq * dq
    gamma = (w / l_f + l_f * (gd**2).sum(-1).ravel()) / mat.c_f
    return float(np.dot(problem.geometry.wdet.ravel(), _coef(problem, "g_f") * gamma))


def _scalar_system(problem: DiscreteProblem, mass, stiff, src):
    geo = problem.geometry
    E, Q = geo.wdet.shape
    dim = problem.mesh.dim
    stiff = np.ascontiguousarray(np.broadcast_to(stiff, mass.shape), dtype=float)
    Ae, fe = element_scalar(geo.N, geo.grad, geo.wdet, _eq(problem, mass), _eq(problem, stiff),
                            _eq(problem, src), np.zeros((E, Q, dim)))
    pat = scalar_pattern(problem)
    return pat.matrix(Ae), pat.vector(fe)


# --------------------------------------------------------------------------
# history
# --------------------------------------------------------------------------


def history_candidate(problem: DiscreteProblem, pf: PointFields) -> np.ndarray:
    """``zeta <(psi_plus + psi_p) / psi_c - 1>`` with undegraded energies."""
    psi_p = 0.5 * _coef(problem, "H") * pf.a**2
    x = (pf.psi_plus + psi_p) / _coef(problem, "psi_c") - 1.0
    return _coef(problem, "zeta") * np.maximum(x, 0.0)


def update_history(problem: DiscreteProblem, pf: PointFields) -> np.ndarray:
    return np.maximum(problem.state.history_n, history_candidate(problem, pf))
