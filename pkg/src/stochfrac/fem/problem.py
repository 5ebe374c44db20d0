"""Discrete problem: dof layout, boundary conditions, element materials, state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..constitutive import CRACK_CONSTANTS, MaterialParams, fracture_constant
from ..errors import ArgumentError, ConfigurationError
from ..microstructure import PHASE_CODES, Microstructure, phase_codes_at
from .mesh import ElementGeometry, Mesh, element_geometry

VOID_SCALE = 1.0e-6


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed displacement ``value * load(t)`` (or ``value`` if not scaled)."""

    tag: str
    component: int
    value: float = 0.0
    scaled: bool = True


@dataclass(frozen=True)
class Neumann:
    """Total force ``value * load(t)`` on a boundary tag, spread as a uniform traction."""

    tag: str
    component: int
    value: float
    scaled: bool = True


@dataclass
class FieldLayout:
    """Degree-of-freedom maps for ``u`` (node-major, ``dim`` per node), ``alpha`` and ``d``."""

    n_nodes: int
    dim: int
    dirichlet: list[Dirichlet]
    neumann: list[Neumann]
    u_fixed: np.ndarray
    u_fixed_scaled: np.ndarray
    u_fixed_base: np.ndarray
    f_scaled: np.ndarray
    f_fixed: np.ndarray
    d_fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    alpha_fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_u(self) -> int:
        return self.n_nodes * self.dim

    @property
    def u_free(self) -> np.ndarray:
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.u_fixed] = False
        return mask

    def dirichlet_values(self, load: float) -> np.ndarray:
        return self.u_fixed_base * np.where(self.u_fixed_scaled, load, 1.0)

    def external_force(self, load: float) -> np.ndarray:
        return self.f_scaled * load + self.f_fixed

    def tag_dofs(self, mesh: Mesh, tag: str, component: int) -> np.ndarray:
        if tag not in mesh.boundary_nodes:
            raise ArgumentError(f"unknown boundary tag {tag!r}")
        return mesh.boundary_nodes[tag] * self.dim + component


def build_layout(mesh: Mesh, dirichlet: Sequence[Dirichlet], neumann: Sequence[Neumann] = (),
                 d_fixed_tags: Sequence[str] = (), alpha_fixed_tags: Sequence[str] = ()) -> FieldLayout:
    dim = mesh.dim
    fixed: dict[int, tuple[float, bool]] = {}
    for bc in dirichlet:
        _check_bc(mesh, bc.tag, bc.component)
        for node in mesh.boundary_nodes[bc.tag]:
            dof = int(node) * dim + bc.component
            prev = fixed.get(dof)
            if prev is not None and prev != (bc.value, bc.scaled):
                # corner shared by two tags: the later condition must agree
                if prev[0] != bc.value:
                    raise ConfigurationError(f"conflicting Dirichlet values at dof {dof}")
            fixed[dof] = (float(bc.value), bool(bc.scaled))
    dofs = np.array(sorted(fixed), dtype=np.int64)
    base = np.array([fixed[k][0] for k in dofs], dtype=float)
    scaled = np.array([fixed[k][1] for k in dofs], dtype=bool)

    f_scaled = np.zeros(mesh.n_nodes * dim)
    f_fixed = np.zeros(mesh.n_nodes * dim)
    for bc in neumann:
        _check_bc(mesh, bc.tag, bc.component)
        target = f_scaled if bc.scaled else f_fixed
        facets = mesh.boundary_facets[bc.tag]
        if facets.shape[1] == 1:
            np.add.at(target, facets[:, 0] * dim + bc.component, bc.value / len(facets))
        else:
            lengths = np.linalg.norm(mesh.nodes[facets[:, 1]] - mesh.nodes[facets[:, 0]], axis=1)
            traction = bc.value / lengths.sum()
            for k in range(2):
                np.add.at(target, facets[:, k] * dim + bc.component, 0.5 * traction * lengths)

    def nodes_of(tags):
        if not tags:
            return np.zeros(0, dtype=np.int64)
        for t in tags:
            _check_bc(mesh, t, 0)
        return np.unique(np.concatenate([mesh.boundary_nodes[t] for t in tags])).astype(np.int64)

    return FieldLayout(mesh.n_nodes, dim, list(dirichlet), list(neumann), dofs, scaled, base, f_scaled, f_fixed,
                       nodes_of(d_fixed_tags), nodes_of(alpha_fixed_tags))


def _check_bc(mesh: Mesh, tag: str, component: int) -> None:
    if tag not in mesh.boundary_nodes:
        raise ArgumentError(f"unknown boundary tag {tag!r}")
    if not 0 <= component < mesh.dim:
        raise ArgumentError(f"component {component} out of range for a {mesh.dim}-D mesh")


# --------------------------------------------------------------------------
# element materials
# --------------------------------------------------------------------------


@dataclass
class ElementMaterials:
    """Per-element material coefficients as flat arrays.

    ``X = g_f / (c_f l_f)`` scales the history drive in the damage potential;
    in the ``psi_c`` form it equals ``2 psi_c``.
    """

    params: list[MaterialParams]
    at_model: str
    hardening: str
    K: np.ndarray
    mu: np.ndarray
    sigma_Y: np.ndarray
    H: np.ndarray
    l_p: np.ndarray
    l_f: np.ndarray
    psi_c: np.ndarray
    g_f: np.ndarray
    eta_f: np.ndarray
    eta_p: np.ndarray
    zeta: np.ndarray
    k_res: np.ndarray

    @property
    def c_f(self) -> float:
        return CRACK_CONSTANTS[self.at_model]

    @property
    def X(self) -> np.ndarray:
        return self.g_f / (self.c_f * self.l_f)

    @classmethod
    def from_params(cls, params: Sequence[MaterialParams]) -> "ElementMaterials":
        params = list(params)
        if not params:
            raise ArgumentError("need at least one element")
        models = {p.at_model for p in params}
        hard = {p.hardening_degradation for p in params}
        if len(models) != 1 or len(hard) != 1:
            raise ConfigurationError("at_model and hardening_degradation must be uniform over the mesh")
        cols = {
            "K": [p.K for p in params],
            "mu": [p.mu for p in params],
            "sigma_Y": [p.sigma_Y for p in params],
            "H": [p.H for p in params],
            "l_p": [p.l_p for p in params],
            "l_f": [p.l_f for p in params],
            "psi_c": [p.psi_c for p in params],
            "g_f": [fracture_constant(p) for p in params],
            "eta_f": [p.eta_f for p in params],
            "eta_p": [p.eta_p for p in params],
            "zeta": [p.zeta for p in params],
            "k_res": [p.residual_stiffness for p in params],
        }
        arrays = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
        return cls(params, models.pop(), hard.pop(), **arrays)

    def at_qp(self, name: str, n_qp: int) -> np.ndarray:
        return np.repeat(getattr(self, name), n_qp)


# --------------------------------------------------------------------------
# problem and state
# --------------------------------------------------------------------------


@dataclass
class ProblemState:
    """Nodal fields plus quadrature-point internal variables (current and committed)."""

    u: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    history: np.ndarray
    u_n: np.ndarray
    d_n: np.ndarray
    alpha_n: np.ndarray
    eps_p_n: np.ndarray  # (P, 4) Mandel
    history_n: np.ndarray
    load: float = 0.0
    step: int = 0

    @classmethod
    def zeros(cls, n_nodes: int, dim: int, n_points: int) -> "ProblemState":
        z = np.zeros
        return cls(z(n_nodes * dim), z(n_nodes), z(n_nodes), z(n_points), z(n_nodes * dim), z(n_nodes), z(n_nodes),
                   z((n_points, 4)), z(n_points))

    def copy(self) -> "ProblemState":
        return ProblemState(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})


@dataclass
class DiscreteProblem:
    mesh: Mesh
    layout: FieldLayout
    materials: ElementMaterials
    schedule: np.ndarray
    geometry: ElementGeometry = None
    state: ProblemState = None
    phases: np.ndarray = None

    def __post_init__(self):
        self.schedule = np.asarray(self.schedule, dtype=float)
        if self.schedule.ndim != 1 or self.schedule.size == 0:
            raise ArgumentError("schedule must be a nonempty 1-D array of times")
        if self.schedule[0] <= 0 or np.any(np.diff(self.schedule) <= 0):
            raise ArgumentError("schedule must be strictly increasing and start after t = 0")
        if len(self.materials.K) != self.mesh.n_elements:
            raise ArgumentError("one material record per element is required")
        if self.geometry is None:
            self.geometry = element_geometry(self.mesh)
        if self.state is None:
            self.state = ProblemState.zeros(self.mesh.n_nodes, self.mesh.dim, self.n_points)
        if self.phases is None:
            self.phases = np.zeros(self.mesh.n_elements, dtype=np.int64)

    @property
    def n_qp(self) -> int:
        return self.geometry.n_qp

    @property
    def n_points(self) -> int:
        return self.mesh.n_elements * self.geometry.n_qp

    def reset(self) -> None:
        self.state = ProblemState.zeros(self.mesh.n_nodes, self.mesh.dim, self.n_points)


def make_problem(mesh: Mesh, params, dirichlet: Sequence[Dirichlet], schedule, neumann: Sequence[Neumann] = (),
                 **layout_kw) -> DiscreteProblem:
    """Problem with one :class:`MaterialParams` (or one per element)."""
    plist = [params] * mesh.n_elements if isinstance(params, MaterialParams) else list(params)
    layout = build_layout(mesh, dirichlet, neumann, **layout_kw)
    return DiscreteProblem(mesh, layout, ElementMaterials.from_params(plist), schedule)


def soft_void(params: MaterialParams, scale: float = VOID_SCALE) -> MaterialParams:
    """Very compliant stand-in for a void: stiffness and psi_c scaled down."""
    kw = {"K": params.K * scale, "mu": params.mu * scale, "psi_c": params.psi_c * scale}
    if params.G_c is not None:
        kw["G_c"] = params.G_c * scale
    return params.with_values(**kw)


def scale_params(params: MaterialParams, factors: Mapping[str, float]) -> MaterialParams:
    """Apply relative perturbation factors; ``E`` rescales ``K`` and ``mu`` at fixed Poisson ratio."""
    kw = {}
    K, mu = params.K, params.mu
    if "E" in factors:
        K, mu = K * factors["E"], mu * factors["E"]
    if "K" in factors:
        K = K * factors["K"]
    if "mu" in factors:
        mu = mu * factors["mu"]
    if (K, mu) != (params.K, params.mu):
        kw.update(K=K, mu=mu)
    for name in ("psi_c", "H", "sigma_Y"):
        if name in factors and factors[name] != 1.0:
            kw[name] = getattr(params, name) * factors[name]
    if "G_c" in factors and params.G_c is not None and factors["G_c"] != 1.0:
        kw["G_c"] = params.G_c * factors["G_c"]
    return params.with_values(**kw) if kw else params


def cell_index(mesh: Mesh, cells) -> np.ndarray:
    """Index of the perturbation cell holding each element centroid.

    ``cells`` gives the number of cells per axis of a uniform grid over the
    mesh box; indices are flattened x-fastest.
    """
    n = np.broadcast_to(np.atleast_1d(np.asarray(cells, dtype=np.int64)), (mesh.dim,))
    if np.any(n < 1):
        raise ArgumentError("cells must be >= 1 per axis")
    lo, hi = np.asarray(mesh.lo), np.asarray(mesh.hi)
    ijk = np.floor((mesh.centroids() - lo) / (hi - lo) * n).astype(np.int64)
    ijk = np.clip(ijk, 0, n - 1)
    idx = ijk[:, 0].copy()
    stride = n[0]
    for k in range(1, mesh.dim):
        idx += ijk[:, k] * stride
        stride *= n[k]
    return idx


def assign_materials(problem: DiscreteProblem, ms: Microstructure | None, phase_params: Mapping[str, MaterialParams],
                     realized: Mapping[str, np.ndarray] | None = None,
                     baseline: Mapping[str, float] | None = None, cells=None) -> DiscreteProblem:
    """Assign element materials by the phase at each element centroid.

    ``realized`` holds one value per element (or per perturbation cell when
    ``cells`` is given) for each perturbed parameter, and ``baseline`` the
    matching unperturbed values; every phase is scaled by the same relative
    factor ``realized / baseline``. Voids without an explicit record get a
    soft copy of the matrix.
    """
    mesh = problem.mesh
    cent = mesh.centroids()
    if ms is None:
        codes = np.zeros(mesh.n_elements, dtype=np.int64)
    else:
        if not (np.allclose(ms.lo, mesh.lo, atol=1e-12) and np.allclose(ms.hi, mesh.hi, atol=1e-12)):
            raise ArgumentError("microstructure box does not match the mesh box")
        codes = phase_codes_at(ms, cent)
    if "matrix" not in phase_params:
        raise ConfigurationError("phase_params needs a 'matrix' entry")
    table = dict(phase_params)
    table.setdefault("void", soft_void(table["matrix"]))
    table.setdefault("inclusion", table["matrix"])
    by_code = {PHASE_CODES[name]: p for name, p in table.items()}

    owner = np.arange(mesh.n_elements) if cells is None else cell_index(mesh, cells)
    n_units = mesh.n_elements if cells is None else int(np.prod(np.broadcast_to(np.atleast_1d(cells), (mesh.dim,))))
    factors = {}
    if realized:
        if baseline is None:
            raise ArgumentError("realized perturbations need their baseline values")
        for name, vals in realized.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape == (1,):
                vals = np.full(n_units, vals[0])
            if vals.shape != (n_units,):
                raise ArgumentError(f"realized {name} needs {n_units} values, got {vals.shape}")
            base = float(baseline[name])
            if base == 0.0:
                continue
            factors[name] = (vals / base)[owner]

    plist = []
    cache: dict = {}
    for e in range(mesh.n_elements):
        p = by_code[int(codes[e])]
        if factors:
            key = (int(codes[e]),) + tuple(float(v[e]) for v in factors.values())
            if key not in cache:
                cache[key] = scale_params(p, {k: float(v[e]) for k, v in factors.items()})
            p = cache[key]
        plist.append(p)
    problem.materials = ElementMaterials.from_params(plist)
    problem.phases = codes
    return problem
