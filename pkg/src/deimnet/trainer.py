"""Training: box initialization, dense BFGS with validation-based early
stopping, and embarrassingly parallel per-unit training.

Every unit's result is a pure function of (its data, its derived seed,
the architecture, the config), so the parallel map is bit-reproducible
regardless of worker count or completion order.
"""

import hashlib
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .errors import DimensionError
from .resnet import (
    LossConfig,
    ResNetParams,
    flatten_params,
    forward,
    loss,
    loss_gradient,
    unflatten_params,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "UnitResult",
    "box_init",
    "bfgs_minimize",
    "train_unit",
    "train_parallel",
    "derive_seed",
]

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
MAX_LINE_SEARCH_STEPS = 40


@dataclass(frozen=True)
class TrainConfig:
    reg_weight: float = 1e-7
    ordering_weight: float = 1000.0
    patience: int = 400
    max_iterations: int = 5000
    grad_tol: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")

    @property
    def loss_config(self):
        return LossConfig(
            reg_weight=self.reg_weight, ordering_weight=self.ordering_weight
        )


@dataclass
class TrainReport:
    final_loss: float
    best_validation_error: float
    iterations_run: int
    stopped_by: str  # patience | max_iterations | gradient_tolerance | line_search_failure
    wall_time: float
    skipped_updates: int = 0
    history: list = field(default_factory=list, repr=False)


@dataclass
class UnitResult:
    params: ResNetParams | None
    report: TrainReport | None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def derive_seed(base_seed, unit_id):
    """Stable per-unit seed: low 8 bytes of sha256 over (base_seed, unit_id)."""
    digest = hashlib.sha256(f"{base_seed}:{unit_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def box_init(arch, data_bounds, seed):
    """Seeded parameter initialization.

    First-layer rows are random unit directions scaled by the inverse
    diameter of the data bounding box, with biases chosen so each
    hyperplane crosses the box at a uniformly random point; rows are then
    permuted so the biases come out nondecreasing (the ordering constraint
    holds exactly at the start).  Deeper layers get uniform
    +-sqrt(6/(fan_in+fan_out)) weights and zero biases.
    """
    lo = np.asarray(data_bounds[0], dtype=float)
    hi = np.asarray(data_bounds[1], dtype=float)
    if lo.shape != (arch.d,) or hi.shape != (arch.d,):
        raise DimensionError(f"bounds must have length d={arch.d}")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
        raise ValueError("data bounds must be finite with min <= max")
    if np.all(hi == lo):
        warnings.warn(
            "degenerate data bounding box; falling back to a unit box "
            "centered at the data point",
            stacklevel=2,
        )
        lo, hi = lo - 0.5, hi + 0.5

    rng = np.random.default_rng(int(seed))

    directions = rng.standard_normal((arch.width, arch.d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    W0 = directions / np.linalg.norm(hi - lo)
    crossings = lo + rng.random((arch.width, arch.d)) * (hi - lo)
    b0 = -np.sum(W0 * crossings, axis=1)
    order = np.argsort(b0, kind="stable")
    W0, b0 = W0[order], b0[order]

    weights = [W0]
    biases = [b0]
    for fan_out, fan_in in arch.weight_shapes()[1:]:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        if len(weights) < arch.n_layers:
            biases.append(np.zeros(fan_out))
    return ResNetParams(weights, biases, arch.step_size, arch.act_eps)


class _CachedObjective:
    """Share one evaluation between the f and grad callables the line
    search invokes at the same point."""

    def __init__(self, fun_grad):
        self._fun_grad = fun_grad
        self._x = None
        self._f = None
        self._g = None
        self.n_evals = 0

    def _eval(self, x):
        if self._x is None or not np.array_equal(x, self._x):
            f, g = self._fun_grad(x)
            if not np.isfinite(f):
                f = np.inf
            self._x = np.array(x)
            self._f, self._g = f, np.asarray(g, dtype=float)
            self.n_evals += 1

    def f(self, x):
        self._eval(x)
        return self._f

    def g(self, x):
        self._eval(x)
        return self._g


def bfgs_minimize(fun_grad, x0, cfg, validation=None):
    """Dense BFGS with strong-Wolfe line search and early stopping.

    ``fun_grad(x)`` returns (value, gradient).  If a ``validation``
    callable is given, its value is tracked every accepted iteration and
    optimization stops after ``cfg.patience`` consecutive iterations
    without improvement, returning the best-validation iterate; otherwise
    the final iterate is returned.  Returns ``(x, TrainReport)``.
    """
    t0 = time.perf_counter()
    obj = _CachedObjective(fun_grad)
    x = np.asarray(x0, dtype=float).copy()
    f = obj.f(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial point")
    g = obj.g(x)

    n = x.size
    H = np.eye(n)
    first_update = True
    skipped = 0
    history = []

    best_val = np.inf
    x_best = x.copy()
    bad_streak = 0
    if validation is not None:
        best_val = float(validation(x))
        history.append((0, float(f), best_val, float(np.linalg.norm(g))))

    stopped_by = "max_iterations"
    iterations = 0
    f_prev = None
    for k in range(1, cfg.max_iterations + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= cfg.grad_tol:
            stopped_by = "gradient_tolerance"
            break

        d = -H @ g
        if d @ g >= 0:  # numerical loss of descent; restart on steepest descent
            H = np.eye(n)
            d = -g
            first_update = True

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, _, _, f_new, _, _ = line_search(
                obj.f,
                obj.g,
                x,
                d,
                gfk=g,
                old_fval=f,
                old_old_fval=f_prev,
                c1=WOLFE_C1,
                c2=WOLFE_C2,
                maxiter=MAX_LINE_SEARCH_STEPS,
            )
        if alpha is None:
            stopped_by = "line_search_failure"
            break

        x_new = x + alpha * d
        g_new = obj.g(x_new)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 0:
            if first_update:
                H *= sy / (y @ y)
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H -= rho * (np.outer(s, Hy) + np.outer(Hy, s))
            H += rho * (rho * (y @ Hy) + 1.0) * np.outer(s, s)
        else:
            skipped += 1

        f_prev, x, f, g = f, x_new, f_new, g_new
        iterations = k

        if validation is not None:
            val = float(validation(x))
            history.append((k, float(f), val, float(np.linalg.norm(g))))
            if val < best_val:
                best_val = val
                x_best = x.copy()
                bad_streak = 0
            else:
                bad_streak += 1
                if bad_streak > cfg.patience:
                    stopped_by = "patience"
                    break

    if validation is None:
        x_best = x
        best_val = np.nan

    report = TrainReport(
        final_loss=float(obj.f(x_best)),
        best_validation_error=float(best_val),
        iterations_run=iterations,
        stopped_by=stopped_by,
        wall_time=time.perf_counter() - t0,
        skipped_updates=skipped,
        history=history,
    )
    return x_best, report


def split_train_validation(n_samples, fraction, seed):
    """Seeded shuffle, then leading rows train / trailing rows validation."""
    if n_samples < 2:
        raise ValueError("need at least 2 samples to split")
    n_val = min(max(1, int(round(n_samples * fraction))), n_samples - 1)
    perm = np.random.default_rng(int(seed)).permutation(n_samples)
    return perm[: n_samples - n_val], perm[n_samples - n_val :]


def train_unit(data, cfg, arch, validation_data=None):
    """Train one network; returns ``(ResNetParams, TrainReport)``.

    Without ``validation_data`` the samples get an 80/20-style seeded
    split and the held-back part drives early stopping; with it, all of
    ``data`` is trained on and the supplied set validates.
    """
    if validation_data is None:
        train_idx, val_idx = split_train_validation(
            len(data), cfg.validation_fraction, cfg.seed
        )
        train_set, val_set = data.subset(train_idx), data.subset(val_idx)
    else:
        train_set, val_set = data, validation_data

    bounds = (train_set.inputs.min(axis=0), train_set.inputs.max(axis=0))
    params0 = box_init(arch, bounds, cfg.seed)
    template = params0
    loss_cfg = cfg.loss_config

    def fun_grad(x):
        p = unflatten_params(x, template)
        return loss(p, loss_cfg, train_set), flatten_params(
            loss_gradient(p, loss_cfg, train_set)
        )

    def validation(x):
        p = unflatten_params(x, template)
        out = forward(p, val_set.inputs)
        return 0.5 * np.sum((out - val_set.outputs) ** 2) / len(val_set)

    x_best, report = bfgs_minimize(fun_grad, flatten_params(params0), cfg, validation)
    return unflatten_params(x_best, template), report


def _train_unit_task(payload):
    unit_id, data, arch, val_data, cfg = payload
    try:
        params, report = train_unit(data, cfg, arch, validation_data=val_data)
        return unit_id, UnitResult(params, report)
    except Exception as exc:  # isolate per-unit failures
        return unit_id, UnitResult(None, None, error=f"{type(exc).__name__}: {exc}")


def train_parallel(units, cfg, workers=1):
    """Train every (unit_id, data, architecture[, validation]) independently.

    Each unit gets the derived seed ``derive_seed(cfg.seed, unit_id)``, so
    results do not depend on scheduling or on ``workers``.  Failures are
    isolated and reported in that unit's ``UnitResult``.
    """
    payloads = []
    for unit in units:
        uid, data, arch = unit[:3]
        val_data = unit[3] if len(unit) > 3 else None
        payloads.append(
            (uid, data, arch, val_data, replace(cfg, seed=derive_seed(cfg.seed, uid)))
        )
    results = {}
    if workers <= 1 or len(payloads) <= 1:
        for payload in payloads:
            uid, result = _train_unit_task(payload)
            results[uid] = result
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for uid, result in pool.map(_train_unit_task, payloads):
                results[uid] = result
    return results
