"""Shared builders and oracles for the test suite."""

import numpy as np

from stochfrac.constitutive import MaterialParams
from stochfrac.fem import Dirichlet, assemble_alpha, assemble_d, assemble_u, build_structured_mesh, make_problem
from stochfrac.fem.assembly import potential_d, potential_mech


def bar(n=10, E=1.0, length=1.0, schedule=(0.01,), **kw):
    """Uniaxial-strain bar: left end fixed, right end pulled."""
    mesh = build_structured_mesh(1, ((0.0,), (length,)), n)
    p = MaterialParams.from_young(E, 0.0, **kw)
    return make_problem(mesh, p, [Dirichlet("left", 0, 0.0, scaled=False), Dirichlet("right", 0, 1.0)], schedule)


def random_fd_state(n=4, at_model="AT2", seed=0):
    """4x4 quad problem with a random admissible state for derivative checks."""
    gen = np.random.default_rng(seed)
    mesh = build_structured_mesh(2, ((0.0, 0.0), (1.0, 1.0)), (n, n))
    p = MaterialParams.from_young(1.0, 0.3, sigma_Y=0.02, H=0.5, l_p=0.2, l_f=0.3, psi_c=1e-3, eta_f=0.3,
                                  eta_p=0.2, at_model=at_model)
    prob = make_problem(mesh, p, [Dirichlet("left", 0, 0.0), Dirichlet("bottom", 1, 0.0),
                                  Dirichlet("right", 0, 1.0)], [0.05])
    st = prob.state
    nn = mesh.n_nodes
    st.alpha_n = gen.uniform(0.0, 0.05, nn)
    st.d_n = gen.uniform(0.0, 0.4, nn)
    epn = gen.normal(scale=0.01, size=(prob.n_points, 4))
    epn[:, :3] -= epn[:, :3].mean(axis=1, keepdims=True)
    st.eps_p_n = epn
    u = gen.normal(scale=0.05, size=2 * nn)
    alpha = st.alpha_n + gen.uniform(0.0, 0.02, nn)
    d = np.clip(st.d_n + gen.uniform(0.0, 0.4, nn), 0.0, 0.95)
    history = gen.uniform(0.0, 3.0, prob.n_points)
    return prob, u, alpha, d, history, gen


def fd_errors(prob, u, alpha, d, history, gen, h=1e-6, tau=0.7):
    """Relative mismatch between each residual and the directional derivative of its potential."""
    load = 0.05
    r_u, _ = assemble_u(prob, u, alpha, d, load, condensed=False)
    r_a, _ = assemble_alpha(prob, u, alpha, d, tau)
    r_d, _ = assemble_d(prob, d, history, tau)
    out = {}
    v = gen.normal(size=u.shape)
    fd = (potential_mech(prob, u + h * v, alpha, d, load, tau) - potential_mech(prob, u - h * v, alpha, d, load, tau)) / (2 * h)
    out["u"] = abs(fd - r_u @ v) / abs(r_u @ v)
    v = gen.normal(size=alpha.shape)
    fd = (potential_mech(prob, u, alpha + h * v, d, load, tau) - potential_mech(prob, u, alpha - h * v, d, load, tau)) / (2 * h)
    out["alpha"] = abs(fd - r_a @ v) / abs(r_a @ v)
    v = gen.normal(size=d.shape)
    fd = (potential_d(prob, d + h * v, history, tau) - potential_d(prob, d - h * v, history, tau)) / (2 * h)
    out["d"] = abs(fd - r_d @ v) / abs(r_d @ v)
    return out
