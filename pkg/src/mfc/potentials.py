"""Confinement and interaction potentials with declared Hessian bounds.

Only gradients are needed by the dynamics.  Each potential carries the
interval ``[lower, upper]`` its Hessian eigenvalues are claimed to lie in;
:func:`verify_hessian_bounds` spot-checks that claim with central differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ConfinementPotential",
    "InteractionPotential",
    "LipschitzConstants",
    "HessianReport",
    "make_zero_confinement",
    "make_quadratic_confinement",
    "make_quadratic_interaction",
    "make_perturbed_confinement",
    "make_perturbed_interaction",
    "lipschitz_constants",
    "numerical_hessian",
    "verify_hessian_bounds",
    "check_interaction_symmetry",
]

_FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class ConfinementPotential:
    """Exterior potential V.

    ``gradient`` maps an array of shape ``(..., d)`` to the same shape.
    """

    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_lower: float
    hessian_upper: float
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.hessian_lower > self.hessian_upper:
            raise ValueError("hessian_lower must not exceed hessian_upper")

    def gradient_at_zero(self, dim: int) -> np.ndarray:
        return self.gradient(np.zeros(dim))


@dataclass(frozen=True)
class InteractionPotential:
    """Even interaction potential W; its gradient must be odd with ``grad W(0) = 0``."""

    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_lower: float
    hessian_upper: float
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    is_zero: bool = False

    def __post_init__(self):
        if self.hessian_lower > self.hessian_upper:
            raise ValueError("hessian_lower must not exceed hessian_upper")


@dataclass(frozen=True)
class LipschitzConstants:
    B: float
    Gamma: float


@dataclass
class HessianReport:
    min_eigenvalue: float
    max_eigenvalue: float
    declared: tuple
    tol: float
    sample_count: int
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def spread(self) -> float:
        return self.max_eigenvalue - self.min_eigenvalue


class ZeroGradient:
    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class QuadraticGradient:
    """``x -> kappa (x - center)``."""

    def __init__(self, kappa: float, center=0.0):
        self.kappa = float(kappa)
        self.center = np.asarray(center, dtype=float)

    def __call__(self, x):
        return self.kappa * (np.asarray(x, dtype=float) - self.center)


class CosinePerturbedGradient:
    """Gradient of ``kappa/2 |y|^2 + amplitude sum_k cos(frequency y_k)``, ``y = x - center``."""

    def __init__(self, kappa: float, amplitude: float, frequency: float, center=0.0):
        self.kappa = float(kappa)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.center = np.asarray(center, dtype=float)

    def __call__(self, x):
        y = np.asarray(x, dtype=float) - self.center
        return self.kappa * y - self.amplitude * self.frequency * np.sin(self.frequency * y)


def make_quadratic_confinement(kappa: float, center=0.0) -> ConfinementPotential:
    """``V(x) = kappa/2 |x - center|^2``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    kappa = float(kappa)
    grad = QuadraticGradient(kappa, center)
    return ConfinementPotential(
        grad, kappa, kappa, "quadratic", {"kappa": kappa, "center": grad.center.tolist()}
    )


def make_zero_confinement() -> ConfinementPotential:
    """``V = 0``; pure diffusion when combined with a zero interaction."""
    return ConfinementPotential(ZeroGradient(), 0.0, 0.0, "zero", {})


def make_quadratic_interaction(kappa_w: float) -> InteractionPotential:
    """``W(z) = kappa_w/2 |z|^2``; ``kappa_w = 0`` gives the non-interacting system."""
    kappa_w = float(kappa_w)
    return InteractionPotential(
        QuadraticGradient(kappa_w), kappa_w, kappa_w, "quadratic", {"kappa": kappa_w}, is_zero=kappa_w == 0.0
    )


def make_perturbed_confinement(
    kappa: float, center=0.0, amplitude: float = 0.1, frequency: float = 1.0
) -> ConfinementPotential:
    """Quadratic plus ``amplitude * sum_k cos(frequency * (x_k - c_k))``.

    The cosine term has Hessian eigenvalues in ``[-a w^2, a w^2]``, so the
    declared bounds are ``kappa -/+ amplitude * frequency**2``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    grad = CosinePerturbedGradient(kappa, amplitude, frequency, center)
    spread = abs(grad.amplitude) * grad.frequency**2
    params = {"kappa": grad.kappa, "center": grad.center.tolist(), "amplitude": grad.amplitude, "frequency": grad.frequency}
    return ConfinementPotential(grad, grad.kappa - spread, grad.kappa + spread, "quadratic_perturbed", params)


def make_perturbed_interaction(
    kappa_w: float, amplitude: float = 0.1, frequency: float = 1.0
) -> InteractionPotential:
    """Quadratic plus the even perturbation ``amplitude * sum_k cos(frequency * z_k)``."""
    grad = CosinePerturbedGradient(kappa_w, amplitude, frequency)
    spread = abs(grad.amplitude) * grad.frequency**2
    params = {"kappa": grad.kappa, "amplitude": grad.amplitude, "frequency": grad.frequency}
    return InteractionPotential(grad, grad.kappa - spread, grad.kappa + spread, "quadratic_perturbed", params)


def lipschitz_constants(V: ConfinementPotential, W: InteractionPotential) -> LipschitzConstants:
    return LipschitzConstants(
        B=max(abs(V.hessian_lower), abs(V.hessian_upper)),
        Gamma=max(abs(W.hessian_lower), abs(W.hessian_upper)),
    )


def numerical_hessian(gradient, x) -> np.ndarray:
    """Central-difference Hessian from a gradient evaluator, symmetrised."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    h = _FD_EPS * (1.0 + np.linalg.norm(x))
    H = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        H[:, k] = (gradient(x + e) - gradient(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def verify_hessian_bounds(
    pot, sample_count: int, box_radius: float, tol: float = 1e-5, dim: int = 1, seed: int = 0
) -> HessianReport:
    """Check declared Hessian bounds at points drawn uniformly in ``[-r, r]^dim``.

    Failures are collected in the report rather than raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    points = rng.uniform(-box_radius, box_radius, size=(sample_count, dim))
    lo_decl, hi_decl = pot.hessian_lower, pot.hessian_upper
    lo, hi = np.inf, -np.inf
    failures = []
    for x in points:
        eig = np.linalg.eigvalsh(numerical_hessian(pot.gradient, x))
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
        if eig[0] < lo_decl - tol or eig[-1] > hi_decl + tol:
            failures.append((x.tolist(), float(eig[0]), float(eig[-1])))
    return HessianReport(float(lo), float(hi), (lo_decl, hi_decl), tol, sample_count, failures)


def check_interaction_symmetry(W: InteractionPotential, sample_count: int = 64, box_radius: float = 3.0,
                               dim: int = 1, tol: float = 1e-12, seed: int = 0) -> bool:
    """``grad W(0) = 0`` and ``grad W(-z) = -grad W(z)`` on random probes."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(-box_radius, box_radius, size=(sample_count, dim))
    if np.max(np.abs(W.gradient(np.zeros(dim)))) > tol:
        return False
    scale = 1.0 + np.max(np.abs(W.gradient(z)))
    return bool(np.max(np.abs(W.gradient(-z) + W.gradient(z))) <= tol * scale)
