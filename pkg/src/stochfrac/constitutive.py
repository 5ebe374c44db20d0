"""Pointwise material laws for the elastic-plastic-damage model.

Tensors are handled in Mandel notation: the first three entries are the
normal components, the remaining ones the shear components scaled by
``sqrt(2)``. The 4-vector ``[xx, yy, zz, sqrt2*xy]`` covers plane strain and
the uniaxial-strain bar; the 6-vector ``[xx, yy, zz, sqrt2*yz, sqrt2*xz,
sqrt2*xy]`` covers full 3-D states. With this scaling the double contraction
is the Euclidean dot product, so tangents are ordinary matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import ArgumentError, ConfigurationError, NumericalError, StateError

SQRT2 = math.sqrt(2.0)
SQRT32 = math.sqrt(1.5)
SQRT23 = math.sqrt(2.0 / 3.0)

AT_MODELS = ("AT1", "AT2")
CRACK_CONSTANTS = {"AT1": 8.0 / 3.0, "AT2": 2.0}
_D_TOL = 1e-10


# --------------------------------------------------------------------------
# tensor helpers
# --------------------------------------------------------------------------


def to_mandel(t) -> np.ndarray:
    """Symmetric ``(..., 3, 3)`` tensor to a Mandel 6-vector."""
    t = np.asarray(t, dtype=float)
    return np.stack(
        [
            t[..., 0, 0],
            t[..., 1, 1],
            t[..., 2, 2],
            SQRT2 * t[..., 1, 2],
            SQRT2 * t[..., 0, 2],
            SQRT2 * t[..., 0, 1],
        ],
        axis=-1,
    )


def from_mandel(v) -> np.ndarray:
    """Mandel 4- or 6-vector back to a symmetric ``(..., 3, 3)`` tensor."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 0] = v[..., 0]
    out[..., 1, 1] = v[..., 1]
    out[..., 2, 2] = v[..., 2]
    if v.shape[-1] == 4:
        out[..., 0, 1] = out[..., 1, 0] = v[..., 3] / SQRT2
    elif v.shape[-1] == 6:
        out[..., 1, 2] = out[..., 2, 1] = v[..., 3] / SQRT2
        out[..., 0, 2] = out[..., 2, 0] = v[..., 4] / SQRT2
        out[..., 0, 1] = out[..., 1, 0] = v[..., 5] / SQRT2
    else:
        raise ArgumentError("Mandel vectors have 4 or 6 components")
    return out


def _mandel(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] == (3, 3):
        return to_mandel(x)
    return x


def trace(v):
    return v[..., 0] + v[..., 1] + v[..., 2]


def identity_vector(n: int) -> np.ndarray:
    one = np.zeros(n)
    one[:3] = 1.0
    return one


def deviator(v):
    v = np.asarray(v, dtype=float)
    return v - trace(v)[..., None] / 3.0 * identity_vector(v.shape[-1])


def norm(v):
    return np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1))


# --------------------------------------------------------------------------
# parameters and state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialParams:
    K: float
    mu: float
    sigma_Y: float = 1.0e30
    H: float = 0.0
    l_p: float = 0.0
    l_f: float = 1.0
    psi_c: float = 1.0
    G_c: float | None = None
    eta_f: float = 0.0
    eta_p: float = 0.0
    zeta: float = 1.0
    at_model: str = "AT2"
    fracture_form: str = "psi_c"
    # stiffness floor: elastic degradation is (1 - k) g(d) + k, so broken zones stay solvable
    residual_stiffness: float = 1.0e-8
    # "quadratic": (1-d)^2 H alpha; "printed": (1-d^2) H alpha
    hardening_degradation: str = "quadratic"

    def __post_init__(self):
        for name in ("K", "mu", "l_f", "psi_c"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("sigma_Y",):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("H", "l_p", "eta_f", "eta_p", "zeta", "residual_stiffness"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.at_model not in AT_MODELS:
            raise ConfigurationError(f"at_model must be one of {AT_MODELS}")
        if self.fracture_form not in ("psi_c", "G_c"):
            raise ConfigurationError("fracture_form must be 'psi_c' or 'G_c'")
        if self.fracture_form == "G_c" and not (self.G_c and self.G_c > 0):
            raise ConfigurationError("fracture_form 'G_c' needs a positive G_c")
        if self.hardening_degradation not in ("quadratic", "printed"):
            raise ConfigurationError("hardening_degradation must be 'quadratic' or 'printed'")

    @classmethod
    def from_young(cls, E: float, nu: float, **kw) -> "MaterialParams":
        if not E > 0 or not -1.0 < nu < 0.5:
            raise ConfigurationError("need E > 0 and -1 < nu < 0.5")
        return cls(K=E / (3.0 * (1.0 - 2.0 * nu)), mu=E / (2.0 * (1.0 + nu)), **kw)

    @property
    def E(self) -> float:
        return 9.0 * self.K * self.mu / (3.0 * self.K + self.mu)

    @property
    def nu(self) -> float:
        return (3.0 * self.K - 2.0 * self.mu) / (2.0 * (3.0 * self.K + self.mu))

    def with_values(self, **kw) -> "MaterialParams":
        return replace(self, **kw)


@dataclass
class MaterialPointState:
    """Internal variables at one material point (plastic strain in Mandel form)."""

    eps_p: np.ndarray = field(default_factory=lambda: np.zeros(6))
    alpha: float = 0.0
    history: float = 0.0
    eps_p_n: np.ndarray = field(default_factory=lambda: np.zeros(6))
    alpha_n: float = 0.0
    d_n: float = 0.0

    def __post_init__(self):
        self.eps_p = _mandel(self.eps_p).copy()
        self.eps_p_n = _mandel(self.eps_p_n).copy()
        if abs(trace(self.eps_p)) > 1e-12 or abs(trace(self.eps_p_n)) > 1e-12:
            raise StateError("plastic strain must be trace-free")
        if self.alpha < 0 or self.alpha_n < 0 or self.history < 0:
            raise StateError("alpha and history must be nonnegative")

    def commit(self) -> None:
        self.eps_p_n = self.eps_p.copy()
        self.alpha_n = self.alpha


# --------------------------------------------------------------------------
# elastic energy
# --------------------------------------------------------------------------


def strain_invariants(eps):
    """``(I1, I2) = (tr eps, tr eps^2)``."""
    v = _mandel(eps)
    return trace(v), np.sum(v**2, axis=-1)


def energy_parts(eps_e, params: MaterialParams):
    """Volumetric ``K/2 I1^2`` and deviatoric ``mu (I2 - I1^2/3)`` energies."""
    i1, i2 = strain_invariants(eps_e)
    psi_vol = 0.5 * params.K * i1**2
    psi_dev = params.mu * np.maximum(i2 - i1**2 / 3.0, 0.0)
    return psi_vol, psi_dev


def elastic_split(eps_e, params: MaterialParams):
    """Tension/compression split ``(psi_plus, psi_minus)``.

    The positive Heaviside of ``I1`` sends the volumetric part to the
    degradable side only under expansion; the deviatoric part always is.
    """
    i1, _ = strain_invariants(eps_e)
    psi_vol, psi_dev = energy_parts(eps_e, params)
    hplus = (i1 > 0).astype(float) if np.ndim(i1) else float(i1 > 0)
    return hplus * psi_vol + psi_dev, (1.0 - hplus) * psi_vol


def elastic_energy(eps_e, params: MaterialParams):
    psi_vol, psi_dev = energy_parts(eps_e, params)
    return psi_vol + psi_dev


def _check_d(d):
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < -_D_TOL) or np.any(d_arr > 1.0 + _D_TOL):
        raise StateError(f"phase field outside [0, 1]: {d}")


def degradation(d):
    """``g(d) = (1 - d)^2``."""
    _check_d(d)
    return (1.0 - np.asarray(d, dtype=float)) ** 2 if np.ndim(d) else (1.0 - d) ** 2


def hardening_degradation(d, params: MaterialParams):
    if params.hardening_degradation == "printed":
        return 1.0 - np.asarray(d) ** 2 if np.ndim(d) else 1.0 - d * d
    return degradation(d)


def degraded_stress(eps_e, d, params: MaterialParams):
    """Stress of the split energy ``g(d) psi_plus + psi_minus`` (no plasticity)."""
    v = _mandel(eps_e)
    _check_d(d)
    k = params.residual_stiffness
    g = (1.0 - k) * (1.0 - np.asarray(d, dtype=float)) ** 2 + k
    i1 = trace(v)
    g_vol = np.where(i1 > 0, g, 1.0)
    one = identity_vector(v.shape[-1])
    return (g_vol * params.K * i1)[..., None] * one + 2.0 * params.mu * np.asarray(g)[..., None] * deviator(v)


# --------------------------------------------------------------------------
# fracture and plastic energies
# --------------------------------------------------------------------------


def crack_function(d, model: str):
    return d if model == "AT1" else d * d


def cf_quadrature(model: str) -> float:
    """``c_f = 4 int_0^1 sqrt(Delta(b)) db`` by adaptive quadrature."""
    if model not in AT_MODELS:
        raise ArgumentError(f"unknown model {model!r}")
    val, _ = integrate.quad(lambda b: math.sqrt(crack_function(b, model)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    return 4.0 * val


def crack_density(d, grad_d, params: MaterialParams):
    """Regularized crack surface density ``gamma_l``."""
    _check_d(d)
    cf = CRACK_CONSTANTS[params.at_model]
    g2 = np.sum(np.atleast_1d(np.asarray(grad_d, dtype=float)) ** 2, axis=-1)
    return (crack_function(d, params.at_model) / params.l_f + params.l_f * g2) / cf


def fracture_constant(params: MaterialParams) -> float:
    """``g_f = 2 l_f c_f psi_c`` (or ``G_c`` for the toughness form)."""
    if params.fracture_form == "G_c":
        return float(params.G_c)
    return 2.0 * params.l_f * CRACK_CONSTANTS[params.at_model] * params.psi_c


def fracture_energy(d, grad_d, params: MaterialParams):
    return fracture_constant(params) * crack_density(d, grad_d, params)


def plastic_energy(alpha, grad_alpha, params: MaterialParams):
    """``H alpha^2 / 2 + sigma_Y l_p^2 |grad alpha|^2 / 2``."""
    if np.any(np.asarray(alpha) < 0):
        raise StateError("alpha must be nonnegative")
    g2 = np.sum(np.atleast_1d(np.asarray(grad_alpha, dtype=float)) ** 2, axis=-1)
    return 0.5 * params.H * np.asarray(alpha) ** 2 + 0.5 * params.sigma_Y * params.l_p**2 * g2


# --------------------------------------------------------------------------
# plasticity
# --------------------------------------------------------------------------


def yield_function(stress, h_p, d, params: MaterialParams):
    """``sqrt(3/2) |dev s| - h_p - g(d) sigma_Y``."""
    s = _mandel(stress)
    return SQRT32 * norm(deviator(s)) - h_p - degradation(d) * params.sigma_Y


@dataclass
class ReturnMapResult:
    stress: np.ndarray
    eps_p: np.ndarray
    delta_alpha: float
    tangent: np.ndarray
    plastic: bool


def return_map(eps, state_n: MaterialPointState, d: float, nonlocal_hardening_force: float,
               params: MaterialParams, tau: float = 1.0) -> ReturnMapResult:
    """Radial return for degraded von Mises plasticity with linear hardening.

    The yield stress and hardening are degraded by ``g(d)``; the viscosity
    ``eta_p / tau`` augments the consistency equation. Linear hardening makes
    the consistency condition linear in the multiplier, so it is solved in
    closed form. All tensors are returned in the Mandel size of ``eps``.
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    _check_d(d)
    v = _mandel(eps)
    n = v.shape[-1]
    ep_n = np.asarray(state_n.eps_p_n, dtype=float)
    if ep_n.shape[-1] != n:
        ep_n = ep_n[[0, 1, 2, 5]] if n == 4 else ep_n
    g = (1.0 - d) ** 2
    g_el = (1.0 - params.residual_stiffness) * g + params.residual_stiffness
    g_h = float(hardening_degradation(d, params))
    mu_g = params.mu * g_el
    i1 = float(trace(v))
    g_vol = g_el if i1 > 0 else 1.0
    one = identity_vector(n)
    p_dev = np.eye(n) - np.outer(one, one) / 3.0

    e_tr = deviator(v - ep_n)
    ne = float(norm(e_tr))
    q_tr = SQRT32 * 2.0 * mu_g * ne
    f_tr = q_tr - (g_h * params.H * state_n.alpha_n + nonlocal_hardening_force) - g * params.sigma_Y
    vol_stress = g_vol * params.K * i1 * one
    c_vol = g_vol * params.K * np.outer(one, one)

    if f_tr <= 0.0 or ne == 0.0:
        stress = vol_stress + 2.0 * mu_g * e_tr
        tangent = c_vol + 2.0 * mu_g * p_dev
        return ReturnMapResult(stress, ep_n.copy(), 0.0, tangent, False)

    denom = 3.0 * mu_g + g_h * params.H + params.eta_p / tau
    if not (denom > 0 and math.isfinite(denom)):
        raise NumericalError("degenerate consistency equation", denominator=denom, trial=f_tr)
    dlam = f_tr / denom
    nvec = e_tr / ne
    c = SQRT32 * dlam
    eps_p = ep_n + c * nvec
    stress = vol_stress + 2.0 * mu_g * (ne - c) * nvec
    ratio = c / ne
    tangent = c_vol + 2.0 * mu_g * ((1.0 - ratio) * p_dev + (ratio - 3.0 * mu_g / denom) * np.outer(nvec, nvec))
    return ReturnMapResult(stress, eps_p, dlam, tangent, True)


# --------------------------------------------------------------------------
# crack driving force
# --------------------------------------------------------------------------


def ramp(x):
    return 0.5 * (x + np.abs(x))


def driving_force(psi_plus, psi_p, state, params: MaterialParams):
    """History update ``max(H, zeta <(psi_plus + psi_p)/psi_c - 1>)``.

    ``state`` is a :class:`MaterialPointState` or the prior history value(s).
    """
    prior = state.history if isinstance(state, MaterialPointState) else state
    candidate = params.zeta * ramp((np.asarray(psi_plus) + np.asarray(psi_p)) / params.psi_c - 1.0)
    new = np.maximum(prior, candidate)
    if isinstance(state, MaterialPointState):
        state.history = float(new)
    return new if np.ndim(new) else float(new)
