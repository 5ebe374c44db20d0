"""Manufactured-solution problem for discretization and sampling error studies.

A bar on ``(0, 1)`` with both ends fixed carries the body force
``f = E_b pi^2 sin(pi x)``. For a spatially constant random modulus ``E``
the exact displacement is ``u = (E_b / E) sin(pi x)``, and with
``E ~ U[E_b - eta, E_b + eta]`` its expectation is known in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constitutive import MaterialParams
from .errors import ArgumentError
from .fem import Dirichlet, build_structured_mesh, make_problem
from .solver import SolverConfig, solve_u
from .stochastic import PerturbedParameterSet, RandomStream, realize_parameters

_ERROR_ORDER = 6


def mean_inverse_modulus(E_b: float, eta: float) -> float:
    """``E[E_b / E]`` for ``E ~ U[E_b - eta, E_b + eta]``."""
    if eta == 0:
        return 1.0
    return E_b / (2.0 * eta) * math.log((E_b + eta) / (E_b - eta))


@dataclass
class ManufacturedBar:
    E_b: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        if not 0 <= self.eta < self.E_b:
            raise ArgumentError("need 0 <= eta < E_b")

    def exact(self, x, E: float) -> np.ndarray:
        return self.E_b / E * np.sin(np.pi * np.asarray(x))

    def exact_mean(self, x) -> np.ndarray:
        return mean_inverse_modulus(self.E_b, self.eta) * np.sin(np.pi * np.asarray(x))

    def moduli(self, samples: int, seed: int, replicate: int | None = None) -> np.ndarray:
        """One homogeneous modulus per sample; sample ``i`` draws from stream ``i``.

        Replicates use further substreams of the same sample streams.
        """
        pset = PerturbedParameterSet({"E": self.E_b}, {"E": self.eta}, "homogeneous")
        out = np.empty(samples)
        for i in range(samples):
            rng = RandomStream(seed, i).child(1)
            if replicate is not None:
                rng = rng.child(replicate)
            out[i] = realize_parameters(pset, rng, 1)["E"][0]
        return out

    def solve(self, n_elements: int, E: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodal coordinates and the P1 finite element displacement."""
        mesh = build_structured_mesh(1, ((0.0,), (1.0,)), n_elements)
        prob = make_problem(mesh, MaterialParams.from_young(E, 0.0), [Dirichlet("left", 0), Dirichlet("right", 0)],
                            [1.0])
        geo = prob.geometry
        f = self.E_b * np.pi**2 * np.sin(np.pi * geo.xq[..., 0])
        fe = np.einsum("qa,eq,eq->ea", geo.N, f, geo.wdet)
        prob.layout.f_fixed = np.bincount(mesh.elements.ravel(), weights=fe.ravel(), minlength=mesh.n_nodes)
        st = prob.state
        u, _ = solve_u(prob, st.u, st.alpha, st.d, 1.0, SolverConfig(newton_tol=1e-13))
        return mesh.nodes[:, 0], u

    def mean_error(self, n_elements: int, moduli: Sequence[float]) -> float:
        """L2 distance between the sample mean of FE solutions and the sample mean of exact solutions."""
        E = np.asarray(moduli, dtype=float)
        x, _ = self.solve(n_elements, 1.0)
        mean_h = np.mean([self.solve(n_elements, e)[1] for e in E], axis=0)
        coef = float(np.mean(self.E_b / E))
        return _l2_error(x, mean_h, lambda s: coef * np.sin(np.pi * s))

    def sampling_error(self, n_elements: int, moduli: Sequence[float]) -> float:
        """L2 distance between the sample mean of FE solutions and the exact expectation."""
        E = np.asarray(moduli, dtype=float)
        x, _ = self.solve(n_elements, 1.0)
        mean_h = np.mean([self.solve(n_elements, e)[1] for e in E], axis=0)
        return _l2_error(x, mean_h, self.exact_mean)

    def sampling_error_exact(self, moduli: Sequence[float]) -> float:
        """Sampling error with the exact solution operator (no mesh error)."""
        coef = float(np.mean(self.E_b / np.asarray(moduli, dtype=float)))
        return abs(coef - mean_inverse_modulus(self.E_b, self.eta)) * math.sqrt(0.5)


def sampling_rms(bar: ManufacturedBar, levels: Sequence[int], replicates: int, seed: int) -> dict[int, float]:
    """RMS over replicates of the exact-operator sampling error at each sample count."""
    if replicates < 1:
        raise ArgumentError("need at least one replicate")
    out = {}
    for m in levels:
        errs = [bar.sampling_error_exact(bar.moduli(int(m), seed, r)) for r in range(replicates)]
        out[int(m)] = math.sqrt(float(np.mean(np.square(errs))))
    return out


def _l2_error(x: np.ndarray, uh: np.ndarray, exact) -> float:
    xi, w = np.polynomial.legendre.leggauss(_ERROR_ORDER)
    total = 0.0
    for a, b, ua, ub in zip(x[:-1], x[1:], uh[:-1], uh[1:]):
        s = 0.5 * (a + b) + 0.5 * (b - a) * xi
        lin = ua * (1 - xi) / 2 + ub * (1 + xi) / 2
        total += 0.5 * (b - a) * float(np.dot(w, (lin - exact(s)) ** 2))
    return math.sqrt(total)


def mesh_levels(coarsest: int, n_levels: int) -> list[int]:
    if n_levels < 2:
        raise ArgumentError("a rate study needs at least two mesh levels")
    return [coarsest * 2**k for k in range(n_levels)]
