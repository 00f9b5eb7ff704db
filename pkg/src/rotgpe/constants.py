"""Closed-form constants and predicted profiles of the blow-up expansion.

Everything here is algebra on top of the soliton profile's moments plus the
linearized response psi1: the critical coupling, the limit mass fractions,
the blow-up scale, the peak-offset coefficient, the B-coefficients, and the
order-2/4 correction profiles used to predict the rescaled minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .fields import ComplexField2D, Grid2D, integrate, re_inner, same_grid
from .soliton import RadialSolitonProfile, radial_moment, rasterize


class ParameterWindowError(ValueError):
    """Coupling parameters outside the existence / blow-up window."""


@dataclass(frozen=True)
class CouplingParams:
    """Interaction strengths (a1, a2, beta) and rotational velocity omega."""

    a1: float
    a2: float
    beta: float
    omega: float

    def validate(self, a_star: float, require_blowup: bool = False) -> None:
        if not (0.0 < self.a1 < a_star and 0.0 < self.a2 < a_star):
            raise ParameterWindowError(
                f"need 0 < a1, a2 < a* = {a_star:.6f}, got ({self.a1}, {self.a2})")
        bstar = beta_star(self.a1, self.a2, a_star)
        if not (0.0 < self.beta < bstar):
            raise ParameterWindowError(
                f"need 0 < beta < beta* = {bstar:.6f}, got {self.beta}")
        if not (0.0 < self.omega < np.inf):
            raise ParameterWindowError(f"need 0 < omega < inf, got {self.omega}")
        if require_blowup and self.beta <= max(self.a1, self.a2):
            raise ParameterWindowError(
                "blow-up analysis needs beta > max(a1, a2) for positive rho_j")


def gammas(a1: float, a2: float, a_star: float):
    """Limit mass fractions (gamma1, gamma2); gamma1 + gamma2 = 1."""
    if not (0.0 < a1 < a_star and 0.0 < a2 < a_star):
        raise ParameterWindowError("gammas need 0 < a_j < a*")
    s1 = np.sqrt(a_star - a1)
    s2 = np.sqrt(a_star - a2)
    return 1.0 - s1 / (s1 + s2), 1.0 - s2 / (s1 + s2)


def beta_star(a1: float, a2: float, a_star: float) -> float:
    """Critical interspecies coupling a* + sqrt((a*-a1)(a*-a2))."""
    if not (0.0 < a1 < a_star and 0.0 < a2 < a_star):
        raise ParameterWindowError("beta_star needs 0 < a_j < a*")
    return a_star + np.sqrt((a_star - a1) * (a_star - a2))


def alpha_beta(params: CouplingParams, constants: "ExpansionConstants") -> float:
    """Blow-up scale alpha = (8 g1 g2 (beta*-beta) / ((omega^2+8) m2))^(1/4)."""
    if params.beta >= constants.beta_star:
        raise ParameterWindowError("alpha_beta needs beta < beta*")
    m2 = -constants.A * constants.a_star  # int |x|^2 Q^2
    num = 8.0 * constants.gamma1 * constants.gamma2 * (constants.beta_star - params.beta)
    return float((num / ((params.omega**2 + 8.0) * m2)) ** 0.25)


def rho_jbeta(params: CouplingParams, a_star: float):
    """Amplitudes (rho1, rho2) of the limiting pair (rho1 Q, rho2 Q)."""
    if params.beta <= max(params.a1, params.a2):
        raise ParameterWindowError("rho_jbeta needs beta > max(a1, a2)")
    den = params.beta**2 - params.a1 * params.a2
    rho1 = np.sqrt(a_star * (params.beta - params.a2) / den)
    rho2 = np.sqrt(a_star * (params.beta - params.a1) / den)
    return float(rho1), float(rho2)


def constant_A(profile: RadialSolitonProfile) -> float:
    """Peak-offset coefficient A = -int |x|^2 Q^2 / a* (always negative)."""
    return -radial_moment(profile, "|x|^2") / profile.mass()


@dataclass(frozen=True)
class ExpansionConstants:
    """All scalar constants of the expansion at one (a1, a2, omega)."""

    a_star: float
    gamma1: float
    gamma2: float
    beta_star: float
    A: float
    B1: float
    B2: float
    B3: float
    B4: float
    omega: float
    a1: float
    a2: float

    def as_dict(self) -> dict:
        return asdict(self)


def constants_B(profile: RadialSolitonProfile, psi1: ComplexField2D,
                params: CouplingParams, a_star: float, A: float):
    """Expansion coefficients (B1, B2, B3, B4).

    B3 integrates Q * psi1 against the k=1 forcing weight on psi1's grid;
    psi1 must have been computed at the same omega.  psi1 is real up to
    solver noise, which is asserted rather than silently discarded.
    """
    om = params.omega
    m2 = radial_moment(profile, "|x|^2")
    m4 = radial_moment(profile, "|x|^4")
    b1 = (om**2 + 8.0) / 4.0 * m2
    b2 = 2.0 * (m4 + 4.0 * A * m2)

    grid = psi1.grid
    imag_level = np.abs(psi1.values.imag).max()
    real_level = max(np.abs(psi1.values.real).max(), 1e-300)
    if imag_level > 1e-8 * real_level:
        raise ValueError(f"psi1 has imaginary content {imag_level:.2e}; "
                         "expected a real k=1 response")
    q = rasterize(profile, grid).values.real
    X, Y = grid.mesh()
    weight = om**2 / 4.0 * (X**2 + Y**2) + 4.0 * Y**2
    b3 = 3.0 * float(integrate(weight * q * psi1.values.real, grid))

    g1, g2 = gammas(params.a1, params.a2, a_star)
    bstar = beta_star(params.a1, params.a2, a_star)
    b4 = b3 / b1 + (1.0 - 4.0 * g1 * g2) * b1 / ((2.0 * bstar - params.a1 - params.a2)
                                                 * 4.0 * g1**2 * g2**2)
    return float(b1), float(b2), float(b3), float(b4)


def build_constants(profile: RadialSolitonProfile, psi1: ComplexField2D,
                    params: CouplingParams) -> ExpansionConstants:
    a_star = profile.mass()
    g1, g2 = gammas(params.a1, params.a2, a_star)
    A = constant_A(profile)
    b1, b2, b3, b4 = constants_B(profile, psi1, params, a_star, A)
    return ExpansionConstants(a_star=a_star, gamma1=g1, gamma2=g2,
                              beta_star=beta_star(params.a1, params.a2, a_star),
                              A=A, B1=b1, B2=b2, B3=b3, B4=b4,
                              omega=params.omega, a1=params.a1, a2=params.a2)


def profile_C(order: int, profile: RadialSolitonProfile, psi1: ComplexField2D,
              constants: ExpansionConstants, grid: Grid2D) -> ComplexField2D:
    """Correction profiles C1 (order 2) and C2 (order 4) of the expansion."""
    B1, B2, B4 = constants.B1, constants.B2, constants.B4
    q = rasterize(profile, grid).values.real
    d1, d2 = rasterize(profile, grid, derivative_order=1)
    X, Y = grid.mesh()
    x_dot_grad = X * d1.values.real + Y * d2.values.real
    dilation = q + x_dot_grad

    if order == 1:
        return ComplexField2D(grid, (B2 / (4.0 * B1) * dilation).astype(np.complex128))
    if order == 2:
        if psi1.grid != grid:
            raise ValueError("psi1 grid must match the assembly grid")
        h11, h12, h22 = rasterize(profile, grid, derivative_order=2)
        xhx = (X * X * h11.values.real + 2.0 * X * Y * h12.values.real
               + Y * Y * h22.values.real)
        c2 = ((8.0 * B1**2 * B4 - 7.0 * B2**2) / (32.0 * B1**2) * dilation
              + B2**2 / (32.0 * B1**2) * xhx
              + B2**2 / (16.0 * B1**2) * x_dot_grad
              + psi1.values)
        return ComplexField2D(grid, c2)
    raise ValueError("order must be 1 or 2")


def predicted_epsilon(alpha: float, constants: ExpansionConstants) -> float:
    """Blow-up length predicted from alpha through fifth order."""
    B1, B2, B4 = constants.B1, constants.B2, constants.B4
    return float(alpha - B2 / (4.0 * B1) * alpha**3
                 + (9.0 * B2**2 - 8.0 * B1**2 * B4) / (32.0 * B1**2) * alpha**5)


def predicted_peak_offset(epsilon: float, A: float) -> float:
    """Radial peak offset p - 1 = A eps^2 - (A^2/2) eps^4."""
    return float(A * epsilon**2 - 0.5 * A**2 * epsilon**4)


def limit_pair(params: CouplingParams, profile: RadialSolitonProfile, grid: Grid2D):
    """The limiting-system solution (rho1 Q, rho2 Q) rasterized on the grid."""
    rho1, rho2 = rho_jbeta(params, profile.mass())
    q = rasterize(profile, grid)
    return (ComplexField2D(grid, rho1 * q.values),
            ComplexField2D(grid, rho2 * q.values))


def predicted_blowup_profile(j: int, params: CouplingParams,
                             constants: ExpansionConstants,
                             profile: RadialSolitonProfile,
                             psi1: ComplexField2D, grid: Grid2D,
                             order: int = 4) -> ComplexField2D:
    """rho_j (Q + alpha^2 C1 + alpha^4 C2) truncated at the given order."""
    if j not in (1, 2):
        raise ValueError("component index j must be 1 or 2")
    rho = rho_jbeta(params, constants.a_star)[j - 1]
    alpha = alpha_beta(params, constants)
    vals = rasterize(profile, grid).values.copy()
    if order >= 2:
        vals += alpha**2 * profile_C(1, profile, psi1, constants, grid).values
    if order >= 4:
        vals += alpha**4 * profile_C(2, profile, psi1, constants, grid).values
    return ComplexField2D(grid, rho * vals)


def quartic_weight_integrals(profile: RadialSolitonProfile, A: float) -> dict:
    """The two quartic-weight combinations that consolidate into B2.

    Returns both sides' weights and their difference; the difference minus B2
    is reported so the consolidation can be checked rather than assumed.
    """
    m2 = radial_moment(profile, "|x|^2")
    m4 = radial_moment(profile, "|x|^4")
    a_star = profile.mass()
    lhs = m4 + 8.0 * A * m2 + 4.0 * A**2 * a_star
    rhs = 3.0 * m4 + 16.0 * A * m2 + 4.0 * A**2 * a_star
    b2 = 2.0 * (m4 + 4.0 * A * m2)
    return {"dilation_pairing": lhs, "virial_pairing": rhs,
            "difference": rhs - lhs, "B2": b2,
            "consolidation_defect": abs((rhs - lhs) - b2)}
