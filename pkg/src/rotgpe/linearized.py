"""The non-degenerate linearized operator about Q and its constrained inverse.

L phi = -Lap phi + phi - Q^2 phi - 2 Re(Q phi) Q acts diagonally on the
real/imaginary split of phi: (-Lap + 1 - 3Q^2) on real parts and
(-Lap + 1 - Q^2) on imaginary parts.  Its kernel is spanned by iQ and the
two translation modes dQ/dx_j, which are deflated explicitly inside the
MINRES iteration (the real-part block is indefinite, so a conjugate-direction
method that tolerates indefiniteness is required).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, minres

from .fields import (ComplexField2D, Grid2D, gradient, laplacian, norm2,
                     re_inner, same_grid)


class FredholmError(ValueError):
    """Right-hand side has a kernel component beyond discretization error."""


class SingularPinningError(RuntimeError):
    """The origin Hessian of Q is too ill-conditioned to pin translations."""


def apply_L(field: ComplexField2D, q_field: ComplexField2D) -> ComplexField2D:
    """-Lap(phi) + phi - Q^2 phi - 2 Re(Q phi) Q with a spectral Laplacian."""
    same_grid(field, q_field)
    q = q_field.values.real
    phi = field.values
    out = -laplacian(phi, field.grid) + phi - q * q * phi - 2.0 * (q * phi).real * q
    return ComplexField2D(field.grid, out)


@dataclass
class KernelBasis:
    """Mass-normalized kernel fields iQ, d1Q, d2Q on one grid."""

    iq: ComplexField2D
    d1q: ComplexField2D
    d2q: ComplexField2D

    @classmethod
    def from_q_field(cls, q_field: ComplexField2D) -> "KernelBasis":
        grid = q_field.grid
        q = q_field.values.real
        gx, gy = gradient(q, grid)
        fields = []
        for vals in (1j * q, gx.real.astype(np.complex128), gy.real.astype(np.complex128)):
            f = ComplexField2D(grid, vals)
            f.values /= norm2(f.values, grid)
            fields.append(f)
        return cls(*fields)

    def elements(self):
        return (self.iq, self.d1q, self.d2q)

    def gram(self) -> np.ndarray:
        """Real-inner-product Gram matrix (diagonal by parity)."""
        els = self.elements()
        grid = els[0].grid
        return np.array([[re_inner(a.values, b.values, grid) for b in els] for a in els])

    def residual_norms(self, q_field: ComplexField2D):
        return tuple(norm2(apply_L(e, q_field).values, e.grid) /
                     norm2(e.values, e.grid) for e in self.elements())


def kernel_projection_norm(rhs: ComplexField2D, q_field: ComplexField2D) -> float:
    """|P_ker rhs| / |rhs|: how far the rhs is from the operator's range."""
    basis = KernelBasis.from_q_field(q_field)
    grid = rhs.grid
    total = 0.0
    for e in basis.elements():
        total += re_inner(rhs.values, e.values, grid) ** 2
    nrm = norm2(rhs.values, grid)
    return float(np.sqrt(total) / nrm) if nrm > 0 else 0.0


def _deflated_minres(apply_real, rhs, deflate, grid, rtol):
    """Solve the real symmetric system on the complement of `deflate`."""
    n = grid.n
    k2 = grid.k2()

    def project(phi):
        for e in deflate:
            phi = phi - re_inner(phi, e, grid) * e
        return phi

    def matvec(v):
        phi = project(v.reshape(n, n))
        return project(apply_real(phi)).ravel()

    def precond(v):
        phi = v.reshape(n, n)
        return sfft.ifft2(sfft.fft2(phi) / (1.0 + k2)).real.ravel()

    op = LinearOperator((n * n, n * n), matvec=matvec, dtype=float)
    mop = LinearOperator((n * n, n * n), matvec=precond, dtype=float)
    b = project(rhs).ravel()
    sol, info = minres(op, b, M=mop, rtol=rtol, maxiter=20 * n)
    if info != 0:
        raise RuntimeError(f"MINRES did not converge (info={info})")
    return project(sol.reshape(n, n))


def solve_constrained(rhs: ComplexField2D, q_field: ComplexField2D,
                      rtol: float = 1e-12, fredholm_tol: float = 1e-4) -> ComplexField2D:
    """Solve L psi = P(rhs) and pin the kernel ambiguity.

    P removes the kernel projection of the rhs (raising FredholmError if it
    exceeds fredholm_tol relatively).  The returned psi satisfies the two
    side conditions: grad Re(psi)(0) = 0, fixed through the invertible origin
    Hessian of Q, and Re int psi (iQ) = 0 through the gauge mode.
    """
    grid = same_grid(rhs, q_field)
    q = q_field.values.real
    basis = KernelBasis.from_q_field(q_field)

    nrm_rhs = norm2(rhs.values, grid)
    if nrm_rhs == 0.0:
        return ComplexField2D(grid, np.zeros_like(rhs.values))
    proj = np.sqrt(sum(re_inner(rhs.values, e.values, grid) ** 2
                       for e in basis.elements()))
    if proj / nrm_rhs > fredholm_tol:
        raise FredholmError(
            f"rhs kernel projection {proj / nrm_rhs:.3e} exceeds {fredholm_tol:.0e}")
    rhs_p = rhs.values.copy()
    for e in basis.elements():
        rhs_p -= re_inner(rhs.values, e.values, grid) * e.values

    q2 = q * q

    def l_plus(phi):
        return -laplacian(phi, grid).real + phi - 3.0 * q2 * phi

    def l_minus(phi):
        return -laplacian(phi, grid).real + phi - q2 * phi

    re_part = _deflated_minres(l_plus, rhs_p.real,
                               [basis.d1q.values.real, basis.d2q.values.real],
                               grid, rtol)
    if np.abs(rhs_p.imag).max() > 0.0:
        im_part = _deflated_minres(l_minus, rhs_p.imag,
                                   [q / norm2(q, grid)], grid, rtol)
    else:
        im_part = np.zeros_like(re_part)
    psi = re_part + 1j * im_part

    # pinning: psi += c0 iQ + c1 d1Q + c2 d2Q
    i0 = grid.origin_index
    b = q[i0, i0]  # Q(0) = shoot height on a centered grid
    qpp0 = 0.5 * (b - b**3)
    if abs(qpp0) < 1e-8:
        raise SingularPinningError("origin Hessian of Q is numerically singular")
    gx, gy = gradient(psi.real, grid)
    c1 = -gx.real[i0, i0] / qpp0
    c2 = -gy.real[i0, i0] / qpp0
    a_star_grid = re_inner(q, q, grid)
    c0 = -re_inner(psi.imag, q, grid) / a_star_grid
    d1 = basis.d1q.values.real * norm2(gradient(q, grid)[0].real, grid)
    d2 = basis.d2q.values.real * norm2(gradient(q, grid)[1].real, grid)
    psi = psi + c1 * d1 + c2 * d2 + 1j * c0 * q
    return ComplexField2D(grid, psi)


def compute_psi_k(k: int, q_field: ComplexField2D, A: float | None = None,
                  omega: float = 0.0, psi1: ComplexField2D | None = None,
                  rtol: float = 1e-12) -> ComplexField2D:
    """Correction profiles psi_1..psi_3 from their forcing terms.

    k=1: f = -(omega^2/4 |x|^2 + 4 x2^2) Q           (real, even-even)
    k=2: f = -(4|x|^2 + 8A) x2 Q                      (real, odd in x2)
    k=3: f = -(|x|^4 + 4A|x|^2 + 8A x2^2 + 4A^2) Q - i omega (xperp . grad psi1)
    """
    grid = q_field.grid
    q = q_field.values.real
    X, Y = grid.mesh()
    r2 = X * X + Y * Y
    if k == 1:
        f = -(omega**2 / 4.0 * r2 + 4.0 * Y * Y) * q + 0j
    elif k == 2:
        if A is None:
            raise ValueError("k=2 needs the peak-offset coefficient A")
        f = -(4.0 * r2 + 8.0 * A) * Y * q + 0j
    elif k == 3:
        if A is None or psi1 is None:
            raise ValueError("k=3 needs A and psi1")
        same_grid(q_field, psi1)
        gx, gy = gradient(psi1.values, grid)
        xperp_grad = -Y * gx + X * gy
        f = (-(r2**2 + 4.0 * A * r2 + 8.0 * A * Y * Y + 4.0 * A**2) * q
             - 1j * omega * xperp_grad)
    else:
        raise ValueError("k must be 1, 2 or 3")
    return solve_constrained(ComplexField2D(grid, f), q_field, rtol=rtol)
