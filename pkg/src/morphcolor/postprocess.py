"""Luminance-coupled TV cleanup of transported chrominance, with debiasing.

The chrominance pair ``u = (U, V)`` is stored as an array of shape
``(2, n1, n2)``. Dual variables have six components per pixel: the row and
column derivatives of ``U``, those of ``V``, and two slots coupled to the
luminance gradient.

Inputs and outputs are in ``[0, 1]`` channel units. Internally the model is
solved on values multiplied by ``PostParams.intensity_scale`` (8-bit units
by default), which is the scale the default weights and step sizes are
tuned for.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import grid
from .errors import DivergenceError, SizeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PostParams:
    gamma: float = 50.0
    alpha: float = 0.005
    sigma0: float = 0.001
    tau0: float = 20.0
    max_iterations: int = 2000
    fixpoint_tol: float = 1e-6
    intensity_scale: float = 255.0
    # True divides by max(1, |p|^2) instead of projecting onto the unit ball
    squared_norm: bool = False

    def __post_init__(self):
        for name in ("gamma", "alpha", "sigma0", "tau0", "intensity_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.fixpoint_tol >= 0:
            raise ValueError(f"fixpoint_tol must be non-negative, got {self.fixpoint_tol}")
        # |grad|^2 <= 8 for the forward-difference gradient
        if self.sigma0 * self.tau0 * 8.0 > 1.0:
            raise ValueError(
                f"sigma0 * tau0 = {self.sigma0 * self.tau0:g} exceeds the primal-dual "
                "stability bound 1/8")


def coupling_gradient(y, gamma: float) -> np.ndarray:
    """Gradient of ``sqrt(gamma) * y``, the luminance term fed to the dual prox."""
    return grid.gradient(np.sqrt(gamma) * np.asarray(y, dtype=np.float64))


def _grad6(u: np.ndarray) -> np.ndarray:
    out = np.zeros((6,) + u.shape[1:])
    out[0:2] = grid.gradient(u[0])
    out[2:4] = grid.gradient(u[1])
    return out


def _div6(p: np.ndarray) -> np.ndarray:
    return np.stack([grid.divergence(p[0:2]), grid.divergence(p[2:4])])


def _shift(p: np.ndarray, sigma: float, grad_y: np.ndarray) -> np.ndarray:
    p_hat = np.array(p, dtype=np.float64, copy=True)
    p_hat[4:6] -= sigma * grad_y
    return p_hat


def prox_PB(p, sigma: float, grad_y, squared_norm: bool = False) -> np.ndarray:
    """Pixel-wise dual prox: shift the luminance slots, then normalize.

    ``p`` has shape ``(6, ...)`` and ``grad_y`` shape ``(2, ...)``.
    """
    p_hat = _shift(p, sigma, grad_y)
    n2 = np.sum(p_hat * p_hat, axis=0)
    scale = n2 if squared_norm else np.sqrt(n2)
    return p_hat / np.maximum(1.0, scale)


def prox_Pi(anchor, tilde, sigma: float, grad_y) -> np.ndarray:
    """Linearization of the dual prox at ``anchor`` applied to ``tilde``.

    Where the shifted anchor lies inside the unit ball ``tilde`` passes
    unchanged; elsewhere its component along the shifted anchor is removed
    and the rest is scaled by the anchor's inverse norm.
    """
    p_hat = _shift(anchor, sigma, grad_y)
    t_hat = np.asarray(tilde, dtype=np.float64)
    norm = np.sqrt(np.sum(p_hat * p_hat, axis=0))
    outside = norm >= 1.0
    safe = np.where(outside, norm, 1.0)
    inner = np.sum(p_hat * t_hat, axis=0)
    tangential = (t_hat - (inner / safe**2) * p_hat) / safe
    return np.where(outside, tangential, t_hat)


def tv_objective(u, b, y, params: PostParams) -> float:
    """Coupled TV plus quadratic fidelity at the model's internal scale."""
    s = params.intensity_scale
    gamma, alpha = params.gamma, params.alpha
    u = s * np.asarray(u, dtype=np.float64)
    b = s * np.asarray(b, dtype=np.float64)
    gy = grid.gradient(s * np.asarray(y, dtype=np.float64))
    gu = grid.gradient(u[0])
    gv = grid.gradient(u[1])
    tv = np.sqrt(gamma * np.sum(gy**2, axis=0) + np.sum(gu**2, axis=0) + np.sum(gv**2, axis=0))
    return float(tv.sum() + alpha * np.sum((u - b) ** 2))


def _check_inputs(b, y):
    b = np.asarray(b, dtype=np.float64)
    y = grid.as_field(y, "y")
    if b.shape != (2,) + y.shape:
        raise SizeError(f"chrominance pair shape {b.shape} does not match luminance {y.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("chrominance contains non-finite values")
    return b, y


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = np.linalg.norm(new - old)
    ref = np.linalg.norm(old)
    return float(diff / ref) if ref > 0 else float(diff)


def tv_chrominance(b, y, params: PostParams, return_info: bool = False):
    """Minimize the luminance-coupled TV model by accelerated primal-dual steps.

    Parameters
    ----------
    b : array, shape (2, n1, n2)
        Transported chrominance ``(U, V)``.
    y : array, shape (n1, n2)
        Target luminance.
    params : PostParams
    return_info : bool
        Also return a dict with ``iterations``, ``converged``, ``taus`` and
        ``sigmas`` (step sizes after each iteration).

    Raises
    ------
    DivergenceError
        If an iterate becomes non-finite.
    """
    b, y = _check_inputs(b, y)
    scale = params.intensity_scale
    b = scale * b
    gy = coupling_gradient(scale * y, params.gamma)
    alpha = params.alpha
    sigma, tau = params.sigma0, params.tau0

    u = b.copy()
    u_bar = u
    p = _grad6(u)
    taus, sigmas = [], []
    converged = False
    n = 0
    for n in range(1, params.max_iterations + 1):
        p = prox_PB(p + sigma * _grad6(u_bar), sigma, gy, params.squared_norm)
        u_new = (u + tau * (_div6(p) + alpha * b)) / (1.0 + tau * alpha)
        theta = 1.0 / np.sqrt(1.0 + tau * alpha)
        tau *= theta
        sigma /= theta
        u_bar = u_new + theta * (u_new - u)
        if not np.all(np.isfinite(u_new)):
            raise DivergenceError(
                f"primal-dual iterate became non-finite at iteration {n} "
                f"(sigma={sigma:g}, tau={tau:g}, sigma*tau={sigma * tau:g})")
        change = _rel_change(u_new, u)
        u = u_new
        taus.append(tau)
        sigmas.append(sigma)
        if change < params.fixpoint_tol:
            converged = True
            break
    log.info("stage=tv iterations=%d converged=%s", n, converged)
    u = u / scale
    if return_info:
        return u, {"iterations": n, "converged": converged, "taus": taus, "sigmas": sigmas}
    return u


def debias(b, u_hat, y, params: PostParams, return_info: bool = False):
    """Restore contrast lost by :func:`tv_chrominance`.

    Runs the primal-dual iteration again alongside its linearization in the
    direction of the residual ``b - u_hat`` and adds back the best-fitting
    multiple ``rho`` of the linearized solution.

    Returns ``u_hat + rho * u_tilde``; with ``return_info`` also a dict
    holding ``rho``, ``u_tilde``, ``iterations`` and ``converged``.
    """
    b, y = _check_inputs(b, y)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u_hat.shape != b.shape:
        raise SizeError(f"u_hat shape {u_hat.shape} does not match {b.shape}")
    scale = params.intensity_scale
    u_hat_in = u_hat
    b = scale * b
    u_hat = scale * u_hat
    gy = coupling_gradient(scale * y, params.gamma)
    alpha = params.alpha
    sigma, tau = params.sigma0, params.tau0

    delta = b - u_hat
    u, u_bar = b.copy(), b.copy()
    ut, ut_bar = delta.copy(), delta.copy()
    p = _grad6(u)
    pt = _grad6(ut)
    converged = False
    n = 0
    for n in range(1, params.max_iterations + 1):
        anchor = p + sigma * _grad6(u_bar)
        p = prox_PB(anchor, sigma, gy, params.squared_norm)
        pt = prox_Pi(anchor, pt + sigma * _grad6(ut_bar), sigma, gy)
        u_new = (u + tau * (_div6(p) + alpha * b)) / (1.0 + tau * alpha)
        ut_new = (ut + tau * (_div6(pt) + alpha * delta)) / (1.0 + tau * alpha)
        theta = 1.0 / np.sqrt(1.0 + tau * alpha)
        tau *= theta
        sigma /= theta
        u_bar = u_new + theta * (u_new - u)
        ut_bar = ut_new + theta * (ut_new - ut)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(ut_new))):
            raise DivergenceError(
                f"debiasing iterate became non-finite at iteration {n} "
                f"(sigma={sigma:g}, tau={tau:g}, sigma*tau={sigma * tau:g})")
        change = max(_rel_change(u_new, u), _rel_change(ut_new, ut))
        u, ut = u_new, ut_new
        if change < params.fixpoint_tol:
            converged = True
            break

    norm2 = float(np.sum(ut * ut))
    rho = float(np.sum(ut * delta)) / norm2 if norm2 > 0.0 else 1.0
    u_tilde = ut / scale
    out = u_hat_in + rho * u_tilde
    log.info("stage=debias iterations=%d converged=%s rho=%.6g", n, converged, rho)
    if return_info:
        return out, {"rho": rho, "u_tilde": u_tilde, "iterations": n, "converged": converged}
    return out
