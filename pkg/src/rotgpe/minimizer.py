"""Constrained minimization of the two-component rotational energy.

The energy is minimized over the unit-total-mass manifold by projected
gradient descent in a preconditioned metric: the descent direction is
S (c - Lap)^{-1} S (g - lam u) with S = (1 + V_eff/c)^{-1/2} and
c = |mu_est| + 1, which bounds the preconditioned Hessian spectrum by O(1)
so the step size stays O(1) independent of grid and trap strength.  A
backtracking line search (halve on energy increase, grow on success)
globalizes the descent; once the residual is small the line search can no
longer rank steps against energy roundoff and a fixed-step polish phase
finishes the job.  Runs warm-start through a coarse-to-fine cascade whose
coarse levels must still resolve the spike (h <= alpha/3), since an
under-resolved grid admits a spurious collapsed minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import RectBivariateSpline

from .constants import (CouplingParams, ExpansionConstants, alpha_beta,
                        predicted_epsilon, predicted_peak_offset, rho_jbeta)
from .fields import ComplexField2D, Grid2D, same_grid
from .soliton import RadialSolitonProfile


class ResolutionError(ValueError):
    """Requested beta needs a finer grid than configured (h > alpha/6)."""


class MaxIterationsError(RuntimeError):
    """Descent did not reach the tolerance within the iteration budget."""


class StagnationError(RuntimeError):
    """Backtracking exhausted its budget without an acceptable step."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 30000
    seed: int = 0
    cascade: bool = True
    polish_threshold: float = 1e-4
    tau_max: float = 1.9
    verbose: bool = False


@dataclass
class TwoComponentState:
    """Pair (u1, u2) on a shared grid, stored stacked as (2, n, n)."""

    grid: Grid2D
    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.complex128)
        if self.u.shape != (2, self.grid.n, self.grid.n):
            raise ValueError("state array must be (2, n, n)")

    @property
    def u1(self) -> ComplexField2D:
        return ComplexField2D(self.grid, self.u[0])

    @property
    def u2(self) -> ComplexField2D:
        return ComplexField2D(self.grid, self.u[1])

    def total_mass(self) -> float:
        return float((np.abs(self.u) ** 2).sum() * self.grid.h ** 2)

    def normalized(self) -> "TwoComponentState":
        return TwoComponentState(self.grid, self.u / np.sqrt(self.total_mass()))

    def density(self) -> np.ndarray:
        return (np.abs(self.u) ** 2).sum(axis=0)

    def copy(self) -> "TwoComponentState":
        return TwoComponentState(self.grid, self.u.copy())


@dataclass
class GroundState:
    state: TwoComponentState
    energy: float
    mu: float
    el_residual: float
    iterations: int
    peak: tuple
    converged: bool
    mass_error: float


class _Workspace:
    """Precomputed grid arrays for the hot loop."""

    def __init__(self, grid: Grid2D, omega: float):
        self.grid = grid
        self.h = grid.h
        self.X, self.Y = grid.mesh()
        self.KX, self.KY = grid.wavenumbers()
        self.K2 = self.KX ** 2 + self.KY ** 2
        r2 = self.X ** 2 + self.Y ** 2
        self.R2 = r2
        self.Vt = (r2 - 1.0) ** 2
        self.Veff = self.Vt + 0.25 * omega ** 2 * r2


def trap_values(grid: Grid2D) -> np.ndarray:
    """The anharmonic ring trap (|x|^2 - 1)^2 on the grid."""
    r2 = grid.rsq()
    return (r2 - 1.0) ** 2


def _gradient_array(u: np.ndarray, w: _Workspace, params: CouplingParams) -> np.ndarray:
    uh = sfft.fft2(u, axes=(-2, -1))
    lap = sfft.ifft2(-w.K2 * uh, axes=(-2, -1))
    dx = sfft.ifft2(1j * w.KX * uh, axes=(-2, -1))
    dy = sfft.ifft2(1j * w.KY * uh, axes=(-2, -1))
    dens = np.abs(u) ** 2
    aj = np.array([params.a1, params.a2])[:, None, None]
    return (-lap + 1j * params.omega * (-w.Y * dx + w.X * dy) + w.Veff * u
            - aj * dens * u - params.beta * dens[::-1] * u)


def _energy_array(u: np.ndarray, w: _Workspace, params: CouplingParams,
                  form: str = "covariant") -> float:
    uh = sfft.fft2(u, axes=(-2, -1))
    dx = sfft.ifft2(1j * w.KX * uh, axes=(-2, -1))
    dy = sfft.ifft2(1j * w.KY * uh, axes=(-2, -1))
    dens = np.abs(u) ** 2
    aj = np.array([params.a1, params.a2])[:, None, None]
    om = params.omega
    if form == "covariant":
        d1 = dx - 1j * (om / 2.0) * (-w.Y) * u
        d2 = dy - 1j * (om / 2.0) * w.X * u
        kin = (np.abs(d1) ** 2 + np.abs(d2) ** 2).sum()
    elif form == "expanded":
        xperp_grad = -w.Y * dx + w.X * dy
        kin = ((np.abs(dx) ** 2 + np.abs(dy) ** 2).sum()
               + om * (1j * xperp_grad * u.conj()).real.sum()
               + 0.25 * om ** 2 * (w.R2 * dens).sum())
    else:
        raise ValueError("form must be 'covariant' or 'expanded'")
    e = kin + (w.Vt * dens).sum() - 0.5 * (aj * dens ** 2).sum()
    e -= params.beta * (dens[0] * dens[1]).sum()
    return float(e * w.h ** 2)


def energy(state: TwoComponentState, params: CouplingParams,
           form: str = "covariant") -> float:
    """Value of the constrained energy functional on the state."""
    w = _Workspace(state.grid, params.omega)
    return _energy_array(state.u, w, params, form)


def el_gradient(state: TwoComponentState, params: CouplingParams):
    """Unconstrained first variation (g1, g2) of the energy."""
    w = _Workspace(state.grid, params.omega)
    g = _gradient_array(state.u, w, params)
    return (ComplexField2D(state.grid, g[0]), ComplexField2D(state.grid, g[1]))


def chemical_potential(state: TwoComponentState, params: CouplingParams,
                       energy_value: float | None = None) -> float:
    """mu = E - int (a1/2 |u1|^4 + a2/2 |u2|^4 + beta |u1|^2 |u2|^2)."""
    if energy_value is None:
        energy_value = energy(state, params)
    dens = np.abs(state.u) ** 2
    inter = (0.5 * params.a1 * dens[0] ** 2 + 0.5 * params.a2 * dens[1] ** 2
             + params.beta * dens[0] * dens[1]).sum() * state.grid.h ** 2
    return float(energy_value - inter)


def el_residual_norm(state: TwoComponentState, params: CouplingParams):
    """(||g - mu u||_2, mu) with the variational multiplier mu = Re<g, u>."""
    w = _Workspace(state.grid, params.omega)
    g = _gradient_array(state.u, w, params)
    mu = float((g * state.u.conj()).real.sum() * w.h ** 2)
    r = g - mu * state.u
    return float(np.sqrt((np.abs(r) ** 2).sum() * w.h ** 2)), mu


def check_resolution(alpha: float, grid: Grid2D, factor: float = 6.0) -> None:
    if grid.h > alpha / factor:
        raise ResolutionError(
            f"grid spacing h = {grid.h:.4f} exceeds alpha/{factor:.0f} = "
            f"{alpha / factor:.4f}; refine the grid or back off beta")


def predicted_seed(params: CouplingParams, grid: Grid2D,
                   profile: RadialSolitonProfile, constants: ExpansionConstants,
                   peak_angle: float = np.pi / 2.0,
                   phases: tuple = (0.0, 0.0)) -> TwoComponentState:
    """Lab-frame seed built from the predicted blow-up profile and peak."""
    a_star = constants.a_star
    alpha = alpha_beta(params, constants)
    eps = predicted_epsilon(alpha, constants)
    p = 1.0 + predicted_peak_offset(eps, constants.A)
    xb = np.array([p * np.cos(peak_angle), p * np.sin(peak_angle)])
    xbp = np.array([-xb[1], xb[0]])
    rho = rho_jbeta(params, a_star)
    X, Y = grid.mesh()
    rrel = np.hypot(X - xb[0], Y - xb[1])
    core = profile(rrel / eps) / (np.sqrt(a_star) * eps)
    gauge = np.exp(1j * (params.omega / 2.0)
                   * ((X - xb[0]) * xbp[0] + (Y - xb[1]) * xbp[1]))
    u = np.stack([rho[0] * core * gauge * np.exp(1j * phases[0]),
                  rho[1] * core * gauge * np.exp(1j * phases[1])])
    return TwoComponentState(grid, u).normalized()


def gaussian_seed(params: CouplingParams, grid: Grid2D, width: float = 0.4,
                  peak_angle: float = np.pi / 2.0) -> TwoComponentState:
    """Plain Gaussian blob on the trap circle, split evenly between components."""
    xb = np.array([np.cos(peak_angle), np.sin(peak_angle)])
    X, Y = grid.mesh()
    blob = np.exp(-((X - xb[0]) ** 2 + (Y - xb[1]) ** 2) / (2.0 * width ** 2))
    u = np.stack([blob + 0j, blob + 0j])
    return TwoComponentState(grid, u).normalized()


def fourier_upsample(state: TwoComponentState, n2: int) -> TwoComponentState:
    """Zero-padded spectral interpolation onto a finer grid (same extent)."""
    n = state.grid.n
    if n2 == n:
        return state.copy()
    uh = sfft.fftshift(sfft.fft2(state.u, axes=(-2, -1)), axes=(-2, -1))
    pad = (n2 - n) // 2
    uh2 = np.pad(uh, ((0, 0), (pad, pad), (pad, pad)))
    u2 = sfft.ifft2(sfft.ifftshift(uh2, axes=(-2, -1)), axes=(-2, -1)) * (n2 / n) ** 2
    return TwoComponentState(Grid2D(n2, state.grid.extent), u2)


def _descend(u, w, params, tol, max_iter, options):
    """Two-phase preconditioned projected descent; returns (u, mu, res, iters)."""
    E = _energy_array(u, w, params)
    tau = 1.0
    polish = False
    best_res = np.inf
    it = 0
    res = np.inf
    mu = 0.0
    for it in range(max_iter):
        g = _gradient_array(u, w, params)
        mu = float((g * u.conj()).real.sum() * w.h ** 2)
        r = g - mu * u
        res = float(np.sqrt((np.abs(r) ** 2).sum() * w.h ** 2))
        if res < tol:
            return u, mu, res, it
        c = abs(mu) + 1.0
        sv = 1.0 / np.sqrt(1.0 + w.Veff / c)
        d = sv * r
        d = sfft.ifft2(sfft.fft2(d, axes=(-2, -1)) / (c + w.K2), axes=(-2, -1))
        d = sv * d
        if not polish and res < options.polish_threshold:
            polish = True
            tau = min(tau, 0.8 * options.tau_max)
        if polish:
            # fixed step; halve only if the residual runs away
            if res < 0.5 * best_res:
                best_res = res
            elif res > 20.0 * best_res:
                tau *= 0.5
                best_res = res
            u = u - tau * d
            u = u / np.sqrt((np.abs(u) ** 2).sum() * w.h ** 2)
        else:
            for _ in range(60):
                unew = u - tau * d
                unew = unew / np.sqrt((np.abs(unew) ** 2).sum() * w.h ** 2)
                Enew = _energy_array(unew, w, params)
                if Enew <= E + 1e-13 * abs(E):
                    break
                tau *= 0.5
            else:
                raise StagnationError(
                    f"no acceptable step at iteration {it} (res {res:.2e})")
            u, E = unew, Enew
            tau = min(tau * 1.2, options.tau_max)
        if options.verbose and it % 500 == 0:
            print(f"    it {it:6d}  E {E:+.12f}  res {res:.3e}  tau {tau:.2f}")
    raise MaxIterationsError(f"residual {res:.2e} after {max_iter} iterations")


def _cascade_levels(n_final: int, extent: float, alpha: float):
    """Grid sizes from the coarsest spike-resolving level up to n_final."""
    n = 64
    while 2.0 * extent / n > alpha / 3.0:
        n *= 2
    n = min(n, n_final)
    levels = [n]
    while levels[-1] < n_final:
        levels.append(levels[-1] * 2)
    return levels


def locate_peak_node(state: TwoComponentState):
    dens = state.density()
    i, j = np.unravel_index(int(np.argmax(dens)), dens.shape)
    x = state.grid.x
    return float(x[i]), float(x[j])


def minimize(params: CouplingParams, grid: Grid2D, profile: RadialSolitonProfile,
             constants: ExpansionConstants, options: SolverOptions = SolverOptions(),
             init: str | TwoComponentState = "predicted",
             enforce_resolution: bool = True) -> GroundState:
    """Minimize the energy at fixed params; returns the certified ground state.

    init may be a warm-start TwoComponentState on any power-of-two grid with
    the same extent (it is spectrally upsampled), or one of the seed modes
    'predicted' / 'gaussian'.
    """
    params.validate(constants.a_star, require_blowup=True)
    alpha = alpha_beta(params, constants)
    if enforce_resolution:
        check_resolution(alpha, grid)

    if isinstance(init, TwoComponentState):
        if init.grid.extent != grid.extent:
            raise ValueError("warm start must share the grid extent")
        levels = [grid.n]
        state = fourier_upsample(init, grid.n).normalized()
        u = state.u
    else:
        levels = _cascade_levels(grid.n, grid.extent, alpha) if options.cascade else [grid.n]
        seed_grid = Grid2D(levels[0], grid.extent)
        if init == "predicted":
            u = predicted_seed(params, seed_grid, profile, constants).u
        elif init == "gaussian":
            u = gaussian_seed(params, seed_grid).u
        else:
            raise ValueError(f"unknown init mode {init!r}")

    total_iters = 0
    mu = 0.0
    res = np.inf
    for n_level in levels:
        w = _Workspace(Grid2D(n_level, grid.extent), params.omega)
        if u.shape[-1] != n_level:
            st = fourier_upsample(TwoComponentState(Grid2D(u.shape[-1], grid.extent), u),
                                  n_level)
            u = st.normalized().u
        level_tol = options.tol if n_level == grid.n else max(3e-6 * (64 / n_level), 3e-7)
        u, mu, res, iters = _descend(u, w, params, level_tol, options.max_iter, options)
        total_iters += iters

    state = TwoComponentState(grid, u)
    e_val = energy(state, params)
    peak = locate_peak_node(state)
    return GroundState(state=state, energy=e_val, mu=mu, el_residual=res,
                       iterations=total_iters, peak=peak, converged=res < options.tol,
                       mass_error=abs(state.total_mass() - 1.0))


# ---------------------------------------------------------------------------
# gauge fixing and the uniqueness probe

def _state_splines(state: TwoComponentState):
    x = state.grid.x
    return [(RectBivariateSpline(x, x, state.u[j].real, kx=5, ky=5),
             RectBivariateSpline(x, x, state.u[j].imag, kx=5, ky=5))
            for j in range(2)]


def rotate_state(state: TwoComponentState, angle: float) -> TwoComponentState:
    """Rotate the plane so field features move by +angle about the origin."""
    if angle == 0.0:
        return state.copy()
    X, Y = state.grid.mesh()
    ca, sa = np.cos(angle), np.sin(angle)
    # sample at R(-angle) x
    xs = ca * X + sa * Y
    ys = -sa * X + ca * Y
    L = state.grid.extent
    xs = np.clip(xs, -L, L - state.grid.h)
    ys = np.clip(ys, -L, L - state.grid.h)
    splines = _state_splines(state)
    u = np.stack([sre(xs, ys, grid=False) + 1j * sim(xs, ys, grid=False)
                  for sre, sim in splines])
    return TwoComponentState(state.grid, u)


def frame_phase(state: TwoComponentState, component: int, scale: float,
                x_beta, params: CouplingParams, profile: RadialSolitonProfile,
                frame_n: int = 128, frame_extent: float = 8.0) -> float:
    """Alignment phase theta = -arg int w Q for the unphased blow-up samples."""
    fg = Grid2D(frame_n, frame_extent)
    X, Y = fg.mesh()
    xs = scale * X + x_beta[0]
    ys = scale * Y + x_beta[1]
    L = state.grid.extent
    xs = np.clip(xs, -L, L - state.grid.h)
    ys = np.clip(ys, -L, L - state.grid.h)
    sre, sim = _state_splines(state)[component]
    usamp = sre(xs, ys, grid=False) + 1j * sim(xs, ys, grid=False)
    xbp = np.array([-x_beta[1], x_beta[0]])
    gauge = np.exp(-1j * (scale * params.omega / 2.0) * (X * xbp[0] + Y * xbp[1]))
    w = scale * usamp * gauge
    q = profile(np.hypot(X, Y))
    integral = (w * q).sum() * fg.h ** 2
    return float(np.mod(-np.angle(integral), 2.0 * np.pi))


def gauge_fix(state: TwoComponentState, params: CouplingParams,
              profile: RadialSolitonProfile, mu: float,
              peak: tuple) -> tuple[TwoComponentState, tuple]:
    """Rotate the peak onto the positive x2-axis and align component phases."""
    angle_now = np.arctan2(peak[1], peak[0])
    rot = np.pi / 2.0 - angle_now
    if abs(rot) > 1e-12:
        state = rotate_state(state, rot)
    else:
        state = state.copy()
    p = float(np.hypot(*peak))
    xb = (0.0, p)
    eps = 1.0 / np.sqrt(-mu)
    u = state.u.copy()
    for j in range(2):
        theta = frame_phase(state, j, eps, xb, params, profile)
        u[j] *= np.exp(1j * theta)
    return TwoComponentState(state.grid, u).normalized(), xb


def uniqueness_probe(params: CouplingParams, grid: Grid2D,
                     profile: RadialSolitonProfile, constants: ExpansionConstants,
                     n_inits: int = 4, options: SolverOptions = SolverOptions(),
                     rng_seed: int | None = None) -> dict:
    """Minimize from random peak angles and phases; report aligned distances.

    Each result is rotated so its peak sits on the positive x2-axis, then a
    single constant phase per component (closed form arg<u_ref, u>) is
    optimized before measuring pairwise L2 distances.
    """
    seed = options.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    runs = []
    for trial in range(n_inits):
        angle = float(rng.uniform(0.0, 2.0 * np.pi))
        phases = tuple(rng.uniform(0.0, 2.0 * np.pi, size=2))
        seed_state = predicted_seed(params, grid, profile, constants,
                                    peak_angle=angle, phases=phases)
        gs = minimize(params, grid, profile, constants, options=options, init=seed_state)
        if not gs.converged:
            raise MaxIterationsError(f"probe run {trial} failed to converge")
        fixed, xb = gauge_fix(gs.state, params, profile, gs.mu, gs.peak)
        runs.append((fixed, gs))

    h2 = grid.h ** 2
    m = len(runs)
    dists = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            ui, uj = runs[i][0].u, runs[j][0].u
            d2 = 0.0
            for comp in range(2):
                ip = (ui[comp] * uj[comp].conj()).sum() * h2
                phase = np.exp(1j * np.angle(ip)) if ip != 0 else 1.0
                d2 += (np.abs(ui[comp] - phase * uj[comp]) ** 2).sum() * h2
            dists[i, j] = dists[j, i] = np.sqrt(d2)
    return {
        "pairwise_distances": dists,
        "max_distance": float(dists.max()),
        "energies": [gs.energy for _, gs in runs],
        "residuals": [gs.el_residual for _, gs in runs],
    }
