"""Elastic image registration by Gauss-Newton with Armijo line search.

The objective for a displacement ``v`` is

    J(v) = sum((warp(moving, v) - fixed) ** 2) + S(v)

where ``S`` is the discrete linearized elastic potential. All derivatives
use the forward-difference stencil of :func:`morphcolor.grid.gradient`, which
places the strain components on the cell faces between pixels.
"""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.fft import dctn, idctn

from . import grid
from .errors import DivergenceError, SizeError

log = logging.getLogger(__name__)

CG_RTOL = 1e-3
CG_MAXITER = 200
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 20
DAMPING = 1e-6


def strain(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the strain components ``(e11, e22, e12)`` of a displacement."""
    g1 = grid.gradient(v[0])
    g2 = grid.gradient(v[1])
    return g1[0], g2[1], 0.5 * (g1[1] + g2[0])


def elastic_potential(v, mu: float, lam: float) -> float:
    """Discrete linearized elastic energy ``sum mu tr(e^T e) + lam/2 tr(e)^2``."""
    e11, e22, e12 = strain(np.asarray(v, dtype=np.float64))
    density = mu * (e11**2 + e22**2 + 2.0 * e12**2) + 0.5 * lam * (e11 + e22) ** 2
    return float(density.sum())


def elastic_gradient(v: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Gradient of :func:`elastic_potential` with respect to ``v``.

    The potential is quadratic, so this is also the action of its Hessian.
    """
    e11, e22, e12 = strain(v)
    tr = e11 + e22
    s11 = 2.0 * mu * e11 + lam * tr
    s22 = 2.0 * mu * e22 + lam * tr
    s12 = 2.0 * mu * e12
    return -np.stack([
        grid.divergence(np.stack([s11, s12])),
        grid.divergence(np.stack([s12, s22])),
    ])


def _forward_difference(n: int) -> sp.csr_matrix:
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
    d[n - 1, n - 1] = 0.0
    return d.tocsr()


@lru_cache(maxsize=16)
def elastic_matrix(shape: tuple[int, int], mu: float, lam: float) -> sp.csr_matrix:
    """Sparse Hessian of :func:`elastic_potential` on flattened ``(v1, v2)``.

    ``elastic_matrix(v.shape[1:], mu, lam) @ v.ravel()`` equals
    ``elastic_gradient(v, mu, lam).ravel()``.
    """
    n1, n2 = shape
    d1 = sp.kron(_forward_difference(n1), sp.identity(n2), format="csr")
    d2 = sp.kron(sp.identity(n1), _forward_difference(n2), format="csr")
    zero = sp.csr_matrix(d1.shape)
    e11 = sp.hstack([d1, zero])
    e22 = sp.hstack([zero, d2])
    e12 = 0.5 * sp.hstack([d2, d1])
    tr = e11 + e22
    a = 2.0 * mu * (e11.T @ e11 + e22.T @ e22 + 2.0 * e12.T @ e12) + lam * (tr.T @ tr)
    return a.tocsr()


def _neumann_eigenvalues(n: int) -> np.ndarray:
    # spectrum of d^T d for the forward difference d, eigenvectors are DCT-II modes
    return 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)


def _dct_preconditioner(shape, mu: float, lam: float, shift: float):
    """Inverse of the elastic operator without its cross terms, plus ``shift``."""
    n1, n2 = shape
    l1 = _neumann_eigenvalues(n1)[:, None]
    l2 = _neumann_eigenvalues(n2)[None, :]
    s1 = (2.0 * mu + lam) * l1 + mu * l2 + shift
    s2 = mu * l1 + (2.0 * mu + lam) * l2 + shift
    m = n1 * n2

    def solve(r: np.ndarray) -> np.ndarray:
        w1 = idctn(dctn(r[:m].reshape(shape), norm="ortho") / s1, norm="ortho")
        w2 = idctn(dctn(r[m:].reshape(shape), norm="ortho") / s2, norm="ortho")
        return np.concatenate([w1.ravel(), w2.ravel()])

    return solve


def registration_energy(fixed, moving, v, mu: float, lam: float) -> float:
    r = grid.warp(moving, v) - fixed
    return float(np.sum(r * r)) + elastic_potential(v, mu, lam)


def _pcg(apply_a, b: np.ndarray, precond, rtol: float, maxiter: int) -> np.ndarray:
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    z = precond(r)
    p = z.copy()
    rz = np.vdot(r, z)
    for _ in range(maxiter):
        ap = apply_a(p)
        pap = np.vdot(p, ap)
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= rtol * bnorm:
            break
        z = precond(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def register(fixed, moving, v_init, params) -> np.ndarray:
    """Register ``moving`` onto ``fixed`` starting from ``v_init``.

    Returns a displacement whose objective value is never larger than the
    value at ``v_init``. Steps that would fold the deformation (non-positive
    Jacobian determinant) are rejected by the line search whenever the
    starting deformation is unfolded.

    Raises
    ------
    DivergenceError
        If the objective becomes non-finite.
    """
    fixed = grid.as_field(fixed, "fixed")
    moving = grid.as_field(moving, "moving")
    v = grid.as_vector_field(v_init, "v_init").copy()
    if fixed.shape != moving.shape or v.shape[1:] != fixed.shape:
        raise SizeError("fixed, moving and v_init must share dimensions")
    mu, lam = params.mu, params.lam

    dm = np.stack(np.gradient(moving))
    x = grid.identity_grid(fixed.shape)
    guard_folds = grid.jacobian_determinant(v).min() > 0.0
    a_el = elastic_matrix(fixed.shape, float(mu), float(lam))

    energy = registration_energy(fixed, moving, v, mu, lam)
    if not np.isfinite(energy):
        raise DivergenceError("registration energy is not finite at the initial displacement")

    it = 0
    for it in range(1, params.reg_iterations + 1):
        p1, p2 = x[0] - v[0], x[1] - v[1]
        r = grid.sample(moving, p1, p2) - fixed
        g = np.stack([grid.sample(dm[0], p1, p2), grid.sample(dm[1], p1, p2)])
        grad = (-2.0 * r * g).ravel() + a_el @ v.ravel()
        gnorm = np.linalg.norm(grad)
        if gnorm <= 1e-12 * max(1.0, energy):
            break

        # Gauss-Newton data term: 2 g g^T per pixel
        g1, g2 = g[0].ravel(), g[1].ravel()

        def apply_h(w, g1=g1, g2=g2):
            m = w.size // 2
            gw = g1 * w[:m] + g2 * w[m:]
            return np.concatenate([2.0 * g1 * gw, 2.0 * g2 * gw]) + a_el @ w + DAMPING * w

        shift = 2.0 * float(np.mean(g1 * g1 + g2 * g2)) + DAMPING
        precond = _dct_preconditioner(fixed.shape, mu, lam, shift)
        d = _pcg(apply_h, -grad, precond, CG_RTOL, CG_MAXITER).reshape(v.shape)
        grad = grad.reshape(v.shape)
        slope = float(np.vdot(grad, d))
        if not slope < 0.0:
            break

        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = v + t * d
            e_trial = registration_energy(fixed, moving, trial, mu, lam)
            if not np.isfinite(e_trial):
                raise DivergenceError(
                    f"registration energy became non-finite (mu={mu}, lambda={lam}); "
                    "try a larger mu")
            if e_trial <= energy + ARMIJO_C * t * slope and (
                    not guard_folds or grid.jacobian_determinant(trial).min() > 0.0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        decrease = energy - e_trial
        v, energy = trial, e_trial
        if decrease <= 1e-9 * max(energy, 1e-300):
            break
    log.debug("register iterations=%d energy=%.6g", it, energy)
    return v
