"""Kuramoto-Sivashinsky data generation.

Pseudo-spectral solver for

    u_t = -u_xxxx - u_xx - u u_x    on the periodic domain (0, M),

with the stiff linear part advanced by Crank-Nicolson and the advective
nonlinearity by second-order Adams-Bashforth (explicit Euler on the first
step).  The nonlinearity is evaluated in conservative form -(u^2/2)_x with
2/3-rule dealiasing, so the spatial mean is conserved exactly up to
roundoff.  All trajectories in a batch advance together in one vectorized
pass; randomness enters only through the initial conditions.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import BlowUpError, ConfigError, DimensionError
from ..resnet import LabeledSet
from ..scaling import MinMaxScaler
from ..trainer import derive_seed

_BLOWUP_LIMIT = 1e6


@dataclass(frozen=True)
class KsConfig:
    domain_length: float = 200.0
    dt: float = 0.01
    n_grid: int = 1600
    burn_in: float = 200.0
    snapshot_interval: float = 0.1
    snapshots_per_trajectory: int = 38
    n_trajectories: int = 1000
    ic_seed: int = 0

    def __post_init__(self):
        if self.domain_length <= 0 or self.dt <= 0:
            raise ConfigError("domain_length and dt must be positive")
        if self.n_grid < 4 or self.n_grid % 2:
            raise ConfigError("n_grid must be even and at least 4")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if self.snapshots_per_trajectory < 2 or self.n_trajectories < 1:
            raise ConfigError("need at least 2 snapshots and 1 trajectory")
        steps = self.snapshot_interval / self.dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigError(
                "snapshot_interval must be a positive integer multiple of dt"
            )

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_grid

    @property
    def grid(self) -> np.ndarray:
        return self.dx * np.arange(self.n_grid)

    @property
    def steps_per_snapshot(self) -> int:
        return round(self.snapshot_interval / self.dt)


class _Stepper:
    """Precomputed CNAB2 update for a batch of Fourier-space states."""

    def __init__(self, cfg: KsConfig):
        self.n = cfg.n_grid
        self.dt = cfg.dt
        k = 2.0 * np.pi * np.fft.rfftfreq(cfg.n_grid, d=cfg.dx)
        lin = k**2 - k**4
        self.expl = 1.0 + 0.5 * cfg.dt * lin
        self.impl_inv = 1.0 / (1.0 - 0.5 * cfg.dt * lin)
        # 2/3 rule: drop the top third of the spectrum in the product term
        self.mask = np.ones_like(k)
        self.mask[cfg.n_grid // 3 + 1 :] = 0.0
        self.deriv = -0.5j * k * self.mask

    def nonlinear(self, u_hat):
        u = np.fft.irfft(u_hat, n=self.n, axis=-1)
        return self.deriv * np.fft.rfft(u * u, axis=-1)

    def advance(self, u_hat, n_steps, t0=0.0, history=None):
        """Take n_steps CNAB2 steps, raising on numerical blow-up.

        ``history`` is the nonlinear term of the preceding step, None only
        at the very start of an integration (that one step uses Euler).
        Returns (state, history) so that snapshot recording can continue
        the multistep scheme instead of restarting it.
        """
        prev = history
        for step in range(n_steps):
            nl = self.nonlinear(u_hat)
            if prev is None:
                increment = self.dt * nl  # Euler start for the AB2 history
            else:
                increment = self.dt * (1.5 * nl - 0.5 * prev)
            u_hat = (self.expl * u_hat + increment) * self.impl_inv
            prev = nl
            peak = np.max(np.abs(u_hat))
            if not np.isfinite(peak) or peak > _BLOWUP_LIMIT * self.n:
                raise BlowUpError(
                    "solution magnitude diverged", when=t0 + (step + 1) * self.dt
                )
        return u_hat, prev


def _record(stepper, u_hat, n_snapshots, steps_between, t0=0.0, history=None,
            first=None):
    out = np.empty((u_hat.shape[0], n_snapshots, stepper.n))
    # keep the caller's real-space state bitwise when it is available, so
    # the t=0 snapshot is the sampled IC itself rather than its FFT round trip
    if first is not None:
        out[:, 0, :] = first
    else:
        out[:, 0, :] = np.fft.irfft(u_hat, n=stepper.n, axis=-1)
    for s in range(1, n_snapshots):
        u_hat, history = stepper.advance(
            u_hat,
            steps_between,
            t0=t0 + (s - 1) * steps_between * stepper.dt,
            history=history,
        )
        out[:, s, :] = np.fft.irfft(u_hat, n=stepper.n, axis=-1)
    return out


def ks_solve(u0, T: float, cfg: KsConfig) -> np.ndarray:
    """Integrate one initial state for time T.

    Returns real-space snapshots every ``cfg.snapshot_interval``, the
    initial state included: shape (1 + T/interval, n_grid).
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (cfg.n_grid,):
        raise DimensionError(f"u0 must have shape ({cfg.n_grid},), got {u0.shape}")
    n_rec = T / cfg.snapshot_interval
    if abs(n_rec - round(n_rec)) > 1e-9 or T <= 0:
        raise ConfigError("T must be a positive multiple of snapshot_interval")
    stepper = _Stepper(cfg)
    u_hat = np.fft.rfft(u0)[None, :]
    snaps = _record(
        stepper, u_hat, round(n_rec) + 1, cfg.steps_per_snapshot, first=u0[None]
    )
    return snaps[0]


def reference_initial_condition(cfg: KsConfig) -> np.ndarray:
    x = cfg.grid
    return np.cos(x) + 0.1 * np.cos(x / 16.0) * (1.0 + 2.0 * np.sin(x / 16.0))


def ks_reference(cfg: KsConfig, horizon: float = 10.0) -> np.ndarray:
    """Reference trajectory over ``horizon`` time units.

    Starts from cos(x) + (1/10)cos(x/16)(1 + 2 sin(x/16)); when
    ``cfg.burn_in`` is positive the state is first advanced by that much
    unrecorded time, so the recorded window lies on the attractor.
    """
    u0 = reference_initial_condition(cfg)
    stepper = _Stepper(cfg)
    u_hat = np.fft.rfft(u0)[None, :]
    history, first = None, u0[None]
    if cfg.burn_in > 0:
        u_hat, history = stepper.advance(u_hat, round(cfg.burn_in / cfg.dt))
        first = None
    n_rec = round(horizon / cfg.snapshot_interval)
    snaps = _record(
        stepper, u_hat, n_rec + 1, cfg.steps_per_snapshot, t0=cfg.burn_in,
        history=history, first=first,
    )
    return snaps[0]


def random_initial_conditions(cfg: KsConfig) -> np.ndarray:
    """Random-coefficient low-mode initial states, one row per trajectory.

    u0 = (1/10) r1 + r2 sin(x) + r3 cos(x) + r4 sin(2x) + r5 cos(2x) with
    standard-normal r; each trajectory draws from its own derived seed so
    any subset can be regenerated independently.
    """
    x = cfg.grid
    modes = np.stack(
        [np.full_like(x, 0.1), np.sin(x), np.cos(x), np.sin(2 * x), np.cos(2 * x)]
    )
    out = np.empty((cfg.n_trajectories, cfg.n_grid))
    for i in range(cfg.n_trajectories):
        r = np.random.default_rng(derive_seed(cfg.ic_seed, i)).standard_normal(5)
        out[i] = r @ modes
    return out


def ks_trajectory_ensemble(cfg: KsConfig) -> np.ndarray:
    """Post-burn-in snapshot tensor (n_trajectories, snapshots, n_grid)."""
    u0 = random_initial_conditions(cfg)
    stepper = _Stepper(cfg)
    u_hat = np.fft.rfft(u0, axis=-1)
    history, first = None, u0
    if cfg.burn_in > 0:
        u_hat, history = stepper.advance(u_hat, round(cfg.burn_in / cfg.dt))
        first = None
    return _record(
        stepper,
        u_hat,
        cfg.snapshots_per_trajectory,
        cfg.steps_per_snapshot,
        t0=cfg.burn_in,
        history=history,
        first=first,
    )


def ks_training_set(trajectories, selection, stencils):
    """One-step training pairs at each interpolation point.

    ``trajectories`` is the (n_traj, n_snap, n_grid) ensemble tensor.  For
    point j with stencil indices (positions within the selection), inputs
    are the scaled stencil values at snapshot k and the output is the
    scaled value at j at snapshot k+1, for all k and all trajectories.
    Returns (labeled sets keyed by point index, the fitted scaler); the
    scaler's components are the selection's points in selection order.
    """
    trajectories = np.asarray(trajectories, dtype=float)
    if trajectories.ndim != 3:
        raise DimensionError("trajectories must be (n_traj, n_snap, n_grid)")
    n_traj, n_snap, _ = trajectories.shape
    if n_snap < 2:
        raise ConfigError("need at least 2 snapshots for one-step pairs")

    reduced = trajectories[:, :, selection.indices]  # (n_traj, n_snap, m)
    scaler = MinMaxScaler.fit(reduced.reshape(-1, selection.m))
    scaled = scaler.scale(reduced.reshape(-1, selection.m)).reshape(reduced.shape)

    sets = {}
    for j, members in stencils.items():
        inputs = scaled[:, :-1, members].reshape(n_traj * (n_snap - 1), -1)
        outputs = scaled[:, 1:, j].reshape(-1, 1)
        sets[j] = LabeledSet(inputs, outputs)
    return sets, scaler
