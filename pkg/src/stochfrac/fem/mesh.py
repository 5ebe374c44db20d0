"""Structured meshes and element geometry (2-node bars, bilinear quads)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, NumericalError

_GAUSS2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)


@dataclass
class Mesh:
    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    divisions: tuple[int, ...]
    boundary_nodes: dict[str, np.ndarray] = field(default_factory=dict)
    boundary_facets: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> float:
        """Largest element diameter."""
        x = self.nodes[self.elements]
        diam = 0.0
        nen = x.shape[1]
        for a in range(nen):
            for b in range(a + 1, nen):
                diam = max(diam, float(np.sqrt(((x[:, a] - x[:, b]) ** 2).sum(-1)).max()))
        return diam

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def outward_normal(self, tag: str) -> np.ndarray:
        try:
            axis, sign = _FACES[tag]
        except KeyError:
            raise ArgumentError(f"unknown boundary tag {tag!r}") from None
        if axis >= self.dim:
            raise ArgumentError(f"boundary tag {tag!r} does not exist in {self.dim}-D")
        n = np.zeros(self.dim)
        n[axis] = sign
        return n


_FACES = {"left": (0, -1.0), "right": (0, 1.0), "bottom": (1, -1.0), "top": (1, 1.0)}


def build_structured_mesh(dimension: int, box, divisions) -> Mesh:
    """Tensor-product grid on ``box = (lo, hi)``; nodes numbered x-fastest."""
    if dimension not in (1, 2):
        raise ArgumentError("only 1-D and 2-D meshes are supported")
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
    div = tuple(int(n) for n in np.atleast_1d(divisions))
    if len(lo) != dimension or len(hi) != dimension or len(div) != dimension:
        raise ArgumentError("box and divisions must match the dimension")
    if any(n < 1 for n in div):
        raise ArgumentError("divisions must be >= 1 per axis")
    if np.any(hi <= lo):
        raise ArgumentError("box must have positive extent")
    axes = [np.linspace(lo[k], hi[k], div[k] + 1) for k in range(dimension)]

    if dimension == 1:
        nodes = axes[0][:, None]
        elements = np.column_stack([np.arange(div[0]), np.arange(1, div[0] + 1)])
        bnodes = {"left": np.array([0]), "right": np.array([div[0]])}
        bfacets = {"left": np.array([[0]]), "right": np.array([[div[0]]])}
    else:
        nx, ny = div
        xx, yy = np.meshgrid(axes[0], axes[1])
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        nid = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
        elements = np.column_stack(
            [nid[:-1, :-1].ravel(), nid[:-1, 1:].ravel(), nid[1:, 1:].ravel(), nid[1:, :-1].ravel()]
        )
        bnodes = {"left": nid[:, 0], "right": nid[:, -1], "bottom": nid[0, :], "top": nid[-1, :]}
        bfacets = {
            "left": np.column_stack([nid[:-1, 0], nid[1:, 0]]),
            "right": np.column_stack([nid[:-1, -1], nid[1:, -1]]),
            "bottom": np.column_stack([nid[0, :-1], nid[0, 1:]]),
            "top": np.column_stack([nid[-1, :-1], nid[-1, 1:]]),
        }
    return Mesh(dimension, nodes, elements, tuple(lo), tuple(hi), div, bnodes, bfacets)


def reference_rule(dim: int, order: int = 2):
    """Shape functions, reference gradients and weights at Gauss points."""
    if order == 2:
        pts1, w1 = _GAUSS2, np.ones(2)
    else:
        pts1, w1 = np.polynomial.legendre.leggauss(order)
    if dim == 1:
        xi = pts1
        N = np.column_stack([(1 - xi) / 2, (1 + xi) / 2])
        dN = np.stack([np.full_like(xi, -0.5), np.full_like(xi, 0.5)], axis=1)[:, :, None]
        return N, dN, w1
    xi, eta = (a.ravel() for a in np.meshgrid(pts1, pts1))
    w = np.outer(w1, w1).ravel()
    sx = np.array([-1.0, 1.0, 1.0, -1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    N = 0.25 * (1 + xi[:, None] * sx) * (1 + eta[:, None] * sy)
    dN = np.stack([0.25 * sx * (1 + eta[:, None] * sy), 0.25 * sy * (1 + xi[:, None] * sx)], axis=2)
    return N, dN, w


@dataclass
class ElementGeometry:
    """Per-element, per-quadrature-point data for the lowest-order spaces."""

    N: np.ndarray  # (Q, nen)
    grad: np.ndarray  # (E, Q, nen, dim)
    wdet: np.ndarray  # (E, Q)
    xq: np.ndarray  # (E, Q, dim)
    B: np.ndarray  # (E, Q, 4, nen*dim), Mandel strain rows [xx, yy, zz, sqrt2 xy]

    @property
    def n_qp(self) -> int:
        return self.N.shape[0]


def element_geometry(mesh: Mesh, order: int = 2) -> ElementGeometry:
    N, dN, w = reference_rule(mesh.dim, order)
    X = mesh.nodes[mesh.elements]  # (E, nen, dim)
    J = np.einsum("qad,ead->eqd" if mesh.dim == 1 else "qak,eal->eqlk", dN, X)
    if mesh.dim == 1:
        det = J[..., 0]
        inv = 1.0 / det
        grad = dN[None, :, :, 0] * inv[:, :, None]
        grad = grad[..., None]
    else:
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            raise NumericalError("inverted element", min_det=float(det.min()))
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1] / det
        inv[..., 1, 1] = J[..., 0, 0] / det
        inv[..., 0, 1] = -J[..., 0, 1] / det
        inv[..., 1, 0] = -J[..., 1, 0] / det
        # grad_x N_a = dN/dxi_k * dxi_k/dx_l ; J[e,q,l,k] = dx_l/dxi_k
        grad = np.einsum("qak,eqkl->eqal", dN, inv)
    if np.any(det <= 0):
        raise NumericalError("inverted element", min_det=float(det.min()))
    wdet = w[None, :] * det
    xq = np.einsum("qa,ead->eqd", N, X)

    E, Q, nen, dim = grad.shape
    B = np.zeros((E, Q, 4, nen * dim))
    if dim == 1:
        B[:, :, 0, :] = grad[..., 0]
    else:
        r2 = 1.0 / math.sqrt(2.0)
        B[:, :, 0, 0::2] = grad[..., 0]
        B[:, :, 1, 1::2] = grad[..., 1]
        B[:, :, 3, 0::2] = r2 * grad[..., 1]
        B[:, :, 3, 1::2] = r2 * grad[..., 0]
    return ElementGeometry(N, grad, wdet, xq, B)
