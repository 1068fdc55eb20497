"""Steady semilinear reaction-advection-diffusion data generation.

Solves the two-parameter family

    -nu u'' + beta u' + f(u, theta) = 0   on (0, 1),
    u(0) = 0.2,  u(1) = 0,
    f(y, theta) = A y (C - y) exp(-E / (D - y)),  theta = (ln A, E),

on a uniform grid with centered diffusion, first-order upwinded advection
(beta > 0), and a damped Newton iteration started from the linear (A = 0)
solution.  The Arrhenius factor is singular at y = D; evaluations clip the
argument just below D and count how often that guard fired (zero on the
sampled parameter domain).

The solve runs in the deviation variable w = C - u, not in u itself.  The
inlet value equals the reaction zero C, so the solution hugs u = C over most
of the domain and drops to 0 in a thin exit layer.  Linearized about that
plateau the discrete operator has two downstream-growing modes (f'(C) < 0),
and its inverse amplifies upstream perturbations by orders of magnitude per
cell travelled.  Evaluating the residual in u leaves ulp(C)-sized absolute
rounding noise on the plateau, which that amplification turns into garbage
Newton steps.  In w the plateau is exactly 0.0, the reaction factor
w (C - w) vanishes exactly there, and every tail quantity is computed with
relative accuracy, so roundoff decays upstream at the same rate the
linearized modes grow and the amplification cancels.

The default mesh keeps the cell Peclet number beta h / nu below 20: coarser
grids distort the (always real) continuous linearized modes into complex
pairs whose rotation makes the elimination pivots oscillate through zero and
can make the discrete Jacobian itself resonate with the boundary conditions
and go numerically singular at isolated parameters.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, SolverError
from ..resnet import LabeledSet

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-10
REFERENCE_THETA = (6.4, 0.11)


@dataclass(frozen=True)
class RdConfig:
    nu: float = 5e-6
    beta: float = 0.2
    C: float = 0.2
    D: float = 0.4
    u_left: float = 0.2
    u_right: float = 0.0
    n_grid: int = 2048
    theta_bounds: tuple = ((5.0, 7.25), (0.05, 0.15))
    points_per_parameter: int = 50

    def __post_init__(self):
        if self.nu <= 0 or self.beta <= 0:
            raise ConfigError("nu and beta must be positive")
        if self.n_grid < 3:
            raise ConfigError("n_grid must be at least 3")
        if self.points_per_parameter < 2:
            raise ConfigError("need at least 2 points per parameter")
        (a_lo, a_hi), (e_lo, e_hi) = self.theta_bounds
        if not (a_lo < a_hi and e_lo < e_hi):
            raise ConfigError("theta bounds must be increasing")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_grid - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_grid)


class _GuardCounter:
    def __init__(self):
        self.count = 0


def _tridiag_solve(lower, diag, upper, rhs):
    """Tridiagonal solve by elimination without pivoting.

    No pivoting is deliberate.  Exactly-zero leading rhs entries then stay
    exactly zero, so a correction driven by a plateau-hugging iterate is as
    localized as its residual; the forward-sweep multiplier of this operator
    equals the slow upstream decay ratio of its solution modes, so rounding
    seeded in the tail never outgrows the true tail values; and the one-term
    back substitution decays upstream until it underflows to exact zeros
    instead of smearing noise across the plateau.  Row swaps would break all
    three properties.  Pivots are bounded away from zero whenever the
    discrete characteristic roots are real (see the module docstring); the
    guard below catches configurations where they are not.
    """
    n = len(diag)
    piv = np.empty(n)
    mod_rhs = np.empty(n)
    piv[0], mod_rhs[0] = diag[0], rhs[0]
    scale = np.max(np.abs(diag))
    for i in range(1, n):
        if abs(piv[i - 1]) < 1e-10 * scale:
            raise SolverError("vanishing pivot in tridiagonal elimination")
        m = lower[i - 1] / piv[i - 1]
        piv[i] = diag[i] - m * upper[i - 1]
        mod_rhs[i] = rhs[i] - m * mod_rhs[i - 1]
    if abs(piv[-1]) < 1e-10 * scale:
        raise SolverError("vanishing pivot in tridiagonal elimination")
    x = np.empty(n)
    x[-1] = mod_rhs[-1] / piv[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (mod_rhs[i] - upper[i] * x[i + 1]) / piv[i]
    return x


def _deviation_reaction(w, A, E, cfg, guard=None):
    """f and df/dw at u = C - w, evaluated in the deviation variable.

    Products are arranged so that w == 0.0 gives f == 0.0 exactly and tiny
    tail values keep full relative accuracy; the u-space form C - u would
    quantize the tail to multiples of ulp(C).  The u >= D singularity guard
    becomes a floor at C - D + 1e-8.
    """
    w = np.asarray(w, dtype=float)
    floor = cfg.C - cfg.D + 1e-8
    clipped = np.maximum(w, floor)
    if guard is not None:
        guard.count += int(np.count_nonzero(w < floor))
    s = (cfg.D - cfg.C) + clipped  # = D - u
    with np.errstate(over="ignore", invalid="ignore"):
        expo = np.exp(-E / s)
        f = A * (cfg.C - clipped) * clipped * expo
        dfdw = A * expo * (
            (cfg.C - 2 * clipped) + (cfg.C - clipped) * clipped * E / s**2
        )
    dfdw = np.where(w < floor, 0.0, dfdw)
    return f, dfdw


def _deviation_residual(w, A, E, cfg, guard=None):
    """Interior residual of -nu w'' + beta w' - f = 0, the u-equation negated."""
    h = cfg.h
    diff = -cfg.nu * (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    adv = cfg.beta * (w[1:-1] - w[:-2]) / h  # upwind, beta > 0
    f, _ = _deviation_reaction(w[1:-1], A, E, cfg, guard)
    return diff + adv - f


def _linear_deviation(cfg):
    """Deviation-form solution for A = 0, the Newton starting guess.

    The right-boundary source is the only nonzero in the eliminated system,
    so back substitution builds the exit layer with relative arithmetic and
    the plateau underflows to exact zeros.
    """
    n, h = cfg.n_grid, cfg.h
    w_left = cfg.C - cfg.u_left
    w_right = cfg.C - cfg.u_right
    lower = np.full(n - 3, -cfg.nu / h**2 - cfg.beta / h)
    diag = np.full(n - 2, 2 * cfg.nu / h**2 + cfg.beta / h)
    upper = np.full(n - 3, -cfg.nu / h**2)
    rhs = np.zeros(n - 2)
    rhs[0] += (cfg.nu / h**2 + cfg.beta / h) * w_left
    rhs[-1] += (cfg.nu / h**2) * w_right
    interior = _tridiag_solve(lower, diag, upper, rhs)
    return np.concatenate([[w_left], interior, [w_right]])


def rd_solve(theta, cfg: RdConfig, return_diagnostics: bool = False):
    """Solve for one parameter pair theta = (ln A, E).

    Damped Newton on the interior unknowns until the residual max norm is
    at or below 1e-10.  Returns the full grid vector including boundary
    values (and a diagnostics dict when requested).
    """
    ln_a, E = float(theta[0]), float(theta[1])
    A = np.exp(ln_a)
    n, h = cfg.n_grid, cfg.h
    guard = _GuardCounter()

    w = _linear_deviation(cfg)
    res = _deviation_residual(w, A, E, cfg, guard)
    res_norm = np.max(np.abs(res))
    history = [res_norm]

    lower = np.full(n - 3, -cfg.nu / h**2 - cfg.beta / h)
    upper = np.full(n - 3, -cfg.nu / h**2)
    for _ in range(NEWTON_MAX_ITER):
        if res_norm <= NEWTON_TOL:
            break
        _, dfdw = _deviation_reaction(w[1:-1], A, E, cfg)
        diag = 2 * cfg.nu / h**2 + cfg.beta / h - dfdw
        step = _tridiag_solve(lower, diag, upper, res)

        # halve the step until the residual actually drops
        damping = 1.0
        while damping >= 2**-20:
            trial = w.copy()
            trial[1:-1] -= damping * step
            trial_res = _deviation_residual(trial, A, E, cfg, guard)
            trial_norm = np.max(np.abs(trial_res))
            if np.isfinite(trial_norm) and trial_norm < res_norm:
                w, res, res_norm = trial, trial_res, trial_norm
                break
            damping /= 2
        else:
            break  # no productive step left; report via history
        history.append(res_norm)

    if res_norm > NEWTON_TOL:
        raise SolverError(
            f"Newton stalled at residual {res_norm:.3e} for theta=({ln_a}, {E})",
            residual_history=history,
        )
    u = cfg.C - w
    if return_diagnostics:
        return u, {"residual_history": history, "guard_activations": guard.count}
    return u


def theta_grid(cfg: RdConfig) -> np.ndarray:
    """Equidistant parameter grid, ln A fastest in memory layout (rows)."""
    (a_lo, a_hi), (e_lo, e_hi) = cfg.theta_bounds
    k = cfg.points_per_parameter
    ln_a = np.linspace(a_lo, a_hi, k)
    e = np.linspace(e_lo, e_hi, k)
    pairs = np.array([(a, ev) for a in ln_a for ev in e])
    return pairs


def rd_training_set(cfg: RdConfig) -> LabeledSet:
    """Full-field solutions over the parameter grid (k^2 pairs)."""
    thetas = theta_grid(cfg)
    outputs = np.empty((len(thetas), cfg.n_grid))
    for i, theta in enumerate(thetas):
        outputs[i] = rd_solve(theta, cfg)
    return LabeledSet(thetas, outputs)


def rd_reference(cfg: RdConfig):
    """Held-out evaluation pair; its theta is never a grid point."""
    theta = np.array(REFERENCE_THETA)
    return theta, rd_solve(theta, cfg)
