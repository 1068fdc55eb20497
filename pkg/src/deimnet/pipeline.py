"""Offline surrogate assembly and online evaluation.

Ties the pieces together for the three supported tasks: classify images
from a handful of pixels, map PDE parameters to a full solution field, and
propagate a PDE state one timestep at a time.  The offline stage reduces
the training data with a POD basis and greedy interpolation indices, then
trains one small network per class or per interpolation point; the online
operations evaluate those networks and reconstruct full fields from the
interpolated values.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .datagen import class_subsets, ks_training_set
from .errors import BlowUpError, ConfigError, DimensionError, RankDeficiencyError
from .reduction import (
    EimSelection,
    PodBasis,
    eim_approximate,
    eim_select,
    pod_basis,
    trajectory_l2_errors,
)
from .resnet import Architecture, LabeledSet, forward, param_count
from .scaling import MinMaxScaler
from .trainer import train_parallel

_SCALED_LIMIT = 1e3


class CaseKind(Enum):
    CLASSIFICATION = "classification"
    PARAM_TO_SOLUTION = "param_to_solution"
    ONE_STEP = "one_step"


@dataclass(frozen=True)
class StencilMap:
    """Per interpolation point: itself plus its nearest selected neighbors.

    ``members`` maps each selection position j to the positions (not grid
    indices) forming point j's network input, ordered by physical
    coordinate.
    """

    members: dict
    size: int

    def __post_init__(self):
        for j, group in self.members.items():
            if j not in group:
                raise ConfigError(f"stencil {j} does not contain its own point")
            if len(set(group)) != len(group) or len(group) != self.size:
                raise ConfigError(f"stencil {j} has malformed member list")


def build_stencils(selection: EimSelection, coords, size: int,
                   topology: str = "bounded") -> StencilMap:
    """Group each selected point with its ``size - 1`` nearest peers.

    Distances are Euclidean in ``coords``; with periodic topology the
    domain period is inferred from the (uniform) grid spacing.  Ties go to
    the smaller grid index, and each member list is ordered by coordinate.
    """
    coords = np.asarray(coords, dtype=float)
    if size < 1 or size > selection.m:
        raise ConfigError(f"stencil size {size} not in 1..{selection.m}")
    if topology not in ("bounded", "periodic"):
        raise ConfigError(f"unknown topology {topology!r}")
    pts = coords[selection.indices]
    delta = np.abs(pts[:, None] - pts[None, :])
    if topology == "periodic":
        period = len(coords) * (coords[1] - coords[0])
        delta = np.minimum(delta, period - delta)
    members = {}
    for j in range(selection.m):
        # sort peers by distance, breaking ties by smaller grid index
        ranked = sorted(range(selection.m),
                        key=lambda k: (delta[j, k], selection.indices[k]))
        chosen = ranked[:size]
        chosen.sort(key=lambda k: pts[k])
        members[j] = tuple(chosen)
    return StencilMap(members, size)


@dataclass(frozen=True)
class SurrogateBundle:
    case: CaseKind
    basis: PodBasis
    selection: EimSelection
    networks: dict  # unit id (digit or selection position) -> ResNetParams
    architecture: Architecture
    m_requested: int
    stencils: StencilMap = None
    scaler: MinMaxScaler = None
    input_hull: tuple = None  # (lower, upper) bounds of the training inputs
    reports: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.selection.m

    @property
    def capped(self) -> bool:
        """True when the data could not support the requested reduction."""
        return self.selection.m < self.m_requested


def _capped_basis(snapshots, m: int):
    """POD basis of rank m, or the largest numerically meaningful rank.

    Snapshot families of low intrinsic dimension run out of meaningful
    modes early; silently padding with noise vectors would poison the
    interpolation, so the basis is truncated instead and the shortfall is
    visible as ``bundle.capped``.
    """
    try:
        return pod_basis(snapshots, rank=m)
    except RankDeficiencyError as err:
        return pod_basis(snapshots, rank=err.achievable)


def _run_units(units, train_cfg, workers):
    results = train_parallel(units, train_cfg, workers)
    networks, reports, failures = {}, {}, {}
    for uid, res in results.items():
        if res.error is None:
            networks[uid] = res.params
            reports[uid] = res.report
        else:
            failures[uid] = res.error
    return networks, reports, failures


def offline(case: CaseKind, data, *, m: int, width: int, residual_blocks: int,
            train_cfg, workers: int = 1, act_eps: float = 1e-2,
            stencil_size: int = 3, topology: str = "periodic",
            digits=range(10), per_class_train: int = 5000,
            per_class_val: int = 1000, reduction=None) -> SurrogateBundle:
    """Run the full offline stage for one case and return the bundle.

    ``data`` is case-specific: (train_pool, val_pool) image sets for
    classification, a parameter->solution LabeledSet for the parameter
    map, and (trajectory_tensor, grid_coords) for one-step propagation.
    ``reduction`` optionally injects a precomputed (basis, selection)
    pair so several methods can share one reduced space.

    Unit training failures are collected in ``bundle.failures`` instead
    of aborting the remaining units.
    """
    if case is CaseKind.CLASSIFICATION:
        train_pool, val_pool = data
        snapshots = train_pool.images.T
    elif case is CaseKind.PARAM_TO_SOLUTION:
        snapshots = data.outputs.T
    elif case is CaseKind.ONE_STEP:
        trajectories, coords = data
        trajectories = np.asarray(trajectories, dtype=float)
        snapshots = trajectories.reshape(-1, trajectories.shape[-1]).T
    else:
        raise ConfigError(f"unknown case {case!r}")

    if reduction is None:
        basis = _capped_basis(snapshots, m)
        selection = eim_select(basis)
    else:
        basis, selection = reduction

    stencils = None
    scaler = None
    hull = None

    if case is CaseKind.CLASSIFICATION:
        arch = Architecture(selection.m, width, residual_blocks, 1, act_eps)
        subsets = class_subsets(
            train_pool, val_pool, digits=digits, seed=train_cfg.seed,
            per_class_train=per_class_train, per_class_val=per_class_val,
        )
        units = []
        for digit, (tr, va) in subsets.items():
            units.append((
                digit,
                LabeledSet(tr.inputs[:, selection.indices], tr.outputs),
                arch,
                LabeledSet(va.inputs[:, selection.indices], va.outputs),
            ))
    elif case is CaseKind.PARAM_TO_SOLUTION:
        thetas = np.asarray(data.inputs, dtype=float)
        arch = Architecture(thetas.shape[1], width, residual_blocks, 1, act_eps)
        hull = (thetas.min(axis=0), thetas.max(axis=0))
        units = [
            (j, LabeledSet(thetas, data.outputs[:, [selection.indices[j]]]), arch)
            for j in range(selection.m)
        ]
    else:
        arch = Architecture(stencil_size, width, residual_blocks, 1, act_eps)
        stencils = build_stencils(selection, coords, stencil_size, topology)
        sets, scaler = ks_training_set(trajectories, selection, stencils.members)
        units = [(j, sets[j], arch) for j in sorted(sets)]

    networks, reports, failures = _run_units(units, train_cfg, workers)
    return SurrogateBundle(
        case=case, basis=basis, selection=selection, networks=networks,
        architecture=arch, m_requested=m, stencils=stencils, scaler=scaler,
        input_hull=hull, reports=reports, failures=failures,
    )


def _require_case(bundle: SurrogateBundle, case: CaseKind, op: str):
    if bundle.case is not case:
        raise ConfigError(f"{op} needs a {case.value} bundle, got {bundle.case.value}")


def classify(bundle: SurrogateBundle, pixels):
    """Digit prediction from the image values at the selected pixels.

    Accepts one length-m vector or a (k, m) batch.  Ties resolve to the
    smallest digit.
    """
    _require_case(bundle, CaseKind.CLASSIFICATION, "classify")
    x = np.asarray(pixels, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != bundle.selection.m:
        raise DimensionError(
            f"expected {bundle.selection.m} pixel values, got {x.shape[1]}"
        )
    digits = sorted(bundle.networks)
    scores = np.column_stack(
        [forward(bundle.networks[d], x)[:, 0] for d in digits]
    )
    winners = np.asarray(digits)[np.argmax(scores, axis=1)]
    return int(winners[0]) if single else winners


@dataclass(frozen=True)
class Prediction:
    field: np.ndarray
    at_points: np.ndarray
    extrapolated: bool


def predict_solution(bundle: SurrogateBundle, theta) -> Prediction:
    """Full solution field at parameter ``theta``.

    Each per-point network supplies the value at its interpolation index
    and the remaining entries are reconstructed through the basis.  A
    ``theta`` outside the training bounding box is legal but flagged.
    """
    _require_case(bundle, CaseKind.PARAM_TO_SOLUTION, "predict_solution")
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (bundle.architecture.d,):
        raise DimensionError(
            f"theta must have {bundle.architecture.d} components"
        )
    vals = np.array([
        forward(bundle.networks[j], theta[None, :])[0, 0]
        for j in range(bundle.selection.m)
    ])
    lo, hi = bundle.input_hull
    outside = bool(np.any(theta < lo) or np.any(theta > hi))
    return Prediction(
        field=eim_approximate(bundle.basis, bundle.selection, vals),
        at_points=vals,
        extrapolated=outside,
    )


@dataclass(frozen=True)
class Rollout:
    at_points: np.ndarray  # (steps + 1, m)
    fields: np.ndarray     # (steps + 1, n) reconstructed for reporting


def rollout(bundle: SurrogateBundle, initial_full_state, steps: int) -> Rollout:
    """Autonomous propagation of the state at the interpolation points.

    Each step scales the current point values, feeds every point's stencil
    through its network, and unscales the outputs into the next state.
    Full fields are reconstructed once at the end, for reporting only; the
    dynamics never leave the interpolation points.
    """
    _require_case(bundle, CaseKind.ONE_STEP, "rollout")
    steps = int(steps)
    if steps < 0:
        raise ConfigError("steps must be nonnegative")
    state = np.asarray(initial_full_state, dtype=float)
    if state.shape != (bundle.basis.V.shape[0],):
        raise DimensionError(
            f"initial state must have length {bundle.basis.V.shape[0]}"
        )
    m = bundle.selection.m
    pts = state[bundle.selection.indices]
    record = [pts]
    scaled = bundle.scaler.scale(pts[None, :])[0]
    members = bundle.stencils.members
    nets = bundle.networks
    for step in range(1, steps + 1):
        nxt = np.array([
            forward(nets[j], scaled[list(members[j])][None, :])[0, 0]
            for j in range(m)
        ])
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > _SCALED_LIMIT:
            raise BlowUpError(
                f"rollout diverged in scaled units at step {step}", when=step
            )
        record.append(bundle.scaler.unscale(nxt[None, :])[0])
        scaled = nxt
    at_points = np.vstack(record)
    fields = eim_approximate(bundle.basis, bundle.selection, at_points.T).T
    return Rollout(at_points=at_points, fields=fields)


@dataclass(frozen=True)
class TimeAveragedError:
    value: float
    instantaneous: bool = False

    def __float__(self):
        return float(self.value)


def tare(trajectory_a, trajectory_b, dt: float, dx: float) -> TimeAveragedError:
    """Time-averaged spatial L2 distance between two trajectories.

    (1/T) integral of ||a(t) - b(t)||_{L2} with the trapezoid rule over
    snapshots dt apart; the spatial norm is sqrt(dx * sum of squares).  A
    single-snapshot pair has T = 0, so the instantaneous norm is returned
    with ``instantaneous`` set.
    """
    a = np.atleast_2d(np.asarray(trajectory_a, dtype=float))
    b = np.atleast_2d(np.asarray(trajectory_b, dtype=float))
    if a.shape != b.shape:
        raise DimensionError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    errs = trajectory_l2_errors(a - b, dx)
    if len(errs) == 1:
        return TimeAveragedError(float(errs[0]), instantaneous=True)
    horizon = (len(errs) - 1) * dt
    return TimeAveragedError(float(np.trapezoid(errs, dx=dt) / horizon))


def add_class(bundle: SurrogateBundle, digit: int, train_pool, val_pool,
              train_cfg, workers: int = 1, per_class_train: int = 5000,
              per_class_val: int = 1000) -> SurrogateBundle:
    """Extend a classification bundle with one more class network.

    Exactly one network is trained; every existing network object is
    carried over untouched, so adding a class never perturbs previous
    classes.  The per-digit seed derivation makes the result identical to
    having trained the digit in the original run.
    """
    _require_case(bundle, CaseKind.CLASSIFICATION, "add_class")
    if digit in bundle.networks:
        raise ConfigError(f"class {digit} already present in bundle")
    subsets = class_subsets(
        train_pool, val_pool, digits=(digit,), seed=train_cfg.seed,
        per_class_train=per_class_train, per_class_val=per_class_val,
    )
    tr, va = subsets[digit]
    idx = bundle.selection.indices
    units = [(
        digit,
        LabeledSet(tr.inputs[:, idx], tr.outputs),
        bundle.architecture,
        LabeledSet(va.inputs[:, idx], va.outputs),
    )]
    networks, reports, failures = _run_units(units, train_cfg, workers)
    return replace(
        bundle,
        networks={**bundle.networks, **networks},
        reports={**bundle.reports, **reports},
        failures={**bundle.failures, **failures},
    )


# ---------------------------------------------------------------------------
# Baseline comparisons: POD and single-network variants against the
# per-unit surrogate, all sharing one reduced space of dimension m.


def _row(method, n_nets, arch, extra):
    out = {
        "method": method,
        "n_resnets": n_nets,
        "layers": arch.residual_blocks + 2,
        "width": arch.width,
        "params": param_count(arch.d, arch.width, arch.residual_blocks, arch.d_star),
        "total_params": n_nets * param_count(
            arch.d, arch.width, arch.residual_blocks, arch.d_star
        ),
    }
    out.update(extra)
    return out


def _wall(reports):
    return float(sum(r.wall_time for r in reports))


def _single_net(uid, data, arch, train_cfg, workers, validation=None):
    unit = (uid, data, arch) if validation is None else (uid, data, arch, validation)
    results = train_parallel([unit], train_cfg, workers)
    res = results[uid]
    if res.error is not None:
        raise RuntimeError(f"baseline {uid} failed to train: {res.error}")
    return res.params, res.report


def _classification_baselines(data, test_data, *, m, train_cfg, workers,
                              unit_width, unit_blocks, single_width,
                              single_blocks, digits, per_class_train,
                              per_class_val, act_eps=1e-2):
    train_pool, val_pool = data
    basis = _capped_basis(train_pool.images.T, m)
    selection = eim_select(basis)
    digits = list(digits)
    n_classes = len(digits)
    onehot = np.eye(n_classes)

    # every method trains and is scored on the configured classes only
    # (a no-op when digits covers the whole pool)
    def restrict(images, labels):
        keep = np.isin(labels, digits)
        return images[keep], labels[keep]

    tr_images, tr_labels = restrict(train_pool.images, train_pool.labels)
    va_images, va_labels = restrict(val_pool.images, val_pool.labels)
    test_images, test_labels = restrict(test_data.images, test_data.labels)

    def targets(labels):
        cols = {d: i for i, d in enumerate(digits)}
        return onehot[[cols[int(l)] for l in labels]]

    rows = []

    # POD: one network on basis-projected full images
    arch = Architecture(selection.m, single_width, single_blocks, n_classes, act_eps)
    proj = basis.V[:, : selection.m]
    params, report = _single_net(
        "pod", LabeledSet(tr_images @ proj, targets(tr_labels)),
        arch, train_cfg, workers,
        LabeledSet(va_images @ proj, targets(va_labels)),
    )
    scores = forward(params, test_images @ proj)
    preds = np.asarray(digits)[np.argmax(scores, axis=1)]
    rows.append(_row("POD", 1, arch, {
        "accuracy": float(np.mean(preds == test_labels)),
        "wall_time": _wall([report]),
    }))

    # single network on the raw selected pixels
    arch = Architecture(selection.m, single_width, single_blocks, n_classes, act_eps)
    idx = selection.indices
    params, report = _single_net(
        "single", LabeledSet(tr_images[:, idx], targets(tr_labels)),
        arch, train_cfg, workers,
        LabeledSet(va_images[:, idx], targets(va_labels)),
    )
    scores = forward(params, test_images[:, idx])
    preds = np.asarray(digits)[np.argmax(scores, axis=1)]
    rows.append(_row("DNN-EIM (s)", 1, arch, {
        "accuracy": float(np.mean(preds == test_labels)),
        "wall_time": _wall([report]),
    }))

    # one network per class on the selected pixels
    bundle = offline(
        CaseKind.CLASSIFICATION, data, m=m, width=unit_width,
        residual_blocks=unit_blocks, train_cfg=train_cfg, workers=workers,
        digits=digits, per_class_train=per_class_train,
        per_class_val=per_class_val, reduction=(basis, selection),
        act_eps=act_eps,
    )
    preds = classify(bundle, test_images[:, idx])
    rows.append(_row("DNN-EIM", len(bundle.networks), bundle.architecture, {
        "accuracy": float(np.mean(preds == test_labels)),
        "wall_time": _wall(bundle.reports.values()),
    }))
    return rows, bundle


def _param_map_baselines(data, reference, *, m, train_cfg, workers,
                         unit_width, unit_blocks, single_width,
                         single_blocks, act_eps=1e-2):
    theta_ref, u_ref = reference
    theta_ref = np.asarray(theta_ref, dtype=float)
    basis = _capped_basis(data.outputs.T, m)
    selection = eim_select(basis)
    d_in = data.inputs.shape[1]
    ref_norm = np.linalg.norm(u_ref)
    rows = []

    # POD: predict the projection coefficients, reconstruct through V
    arch = Architecture(d_in, single_width, single_blocks, selection.m, act_eps)
    proj = basis.V[:, : selection.m]
    params, report = _single_net(
        "pod", LabeledSet(data.inputs, data.outputs @ proj),
        arch, train_cfg, workers,
    )
    field = proj @ forward(params, theta_ref[None, :])[0]
    rows.append(_row("POD", 1, arch, {
        "l2_error": float(np.linalg.norm(field - u_ref) / ref_norm),
        "wall_time": _wall([report]),
    }))

    # single network predicting all interpolation values at once
    arch = Architecture(d_in, single_width, single_blocks, selection.m, act_eps)
    params, report = _single_net(
        "single", LabeledSet(data.inputs, data.outputs[:, selection.indices]),
        arch, train_cfg, workers,
    )
    vals = forward(params, theta_ref[None, :])[0]
    field = eim_approximate(basis, selection, vals)
    rows.append(_row("DNN-EIM (s)", 1, arch, {
        "l2_error": float(np.linalg.norm(field - u_ref) / ref_norm),
        "wall_time": _wall([report]),
    }))

    bundle = offline(
        CaseKind.PARAM_TO_SOLUTION, data, m=m, width=unit_width,
        residual_blocks=unit_blocks, train_cfg=train_cfg, workers=workers,
        reduction=(basis, selection), act_eps=act_eps,
    )
    pred = predict_solution(bundle, theta_ref)
    rows.append(_row("DNN-EIM", len(bundle.networks), bundle.architecture, {
        "l2_error": float(np.linalg.norm(pred.field - u_ref) / ref_norm),
        "wall_time": _wall(bundle.reports.values()),
    }))
    return rows, bundle


def _one_step_baselines(data, reference_trajectory, *, m, dt, dx, train_cfg,
                        workers, unit_width, unit_blocks, single_width,
                        single_blocks, stencil_size=3, topology="periodic",
                        act_eps=1e-2):
    trajectories, coords = data
    trajectories = np.asarray(trajectories, dtype=float)
    reference_trajectory = np.asarray(reference_trajectory, dtype=float)
    steps = len(reference_trajectory) - 1
    rows = []

    bundle = offline(
        CaseKind.ONE_STEP, data, m=m, width=unit_width,
        residual_blocks=unit_blocks, train_cfg=train_cfg, workers=workers,
        stencil_size=stencil_size, topology=topology, act_eps=act_eps,
    )
    run = rollout(bundle, reference_trajectory[0], steps)
    err = tare(run.fields, reference_trajectory, dt, dx)
    rows.append(_row("DNN-EIM", len(bundle.networks), bundle.architecture, {
        "tare": err.value,
        "wall_time": _wall(bundle.reports.values()),
    }))

    # single wide network advancing all scaled point values at once,
    # trained under the same iteration budget
    selection, scaler = bundle.selection, bundle.scaler
    n_traj, n_snap, _ = trajectories.shape
    reduced = trajectories[:, :, selection.indices]
    scaled = scaler.scale(reduced.reshape(-1, selection.m)).reshape(reduced.shape)
    pairs = LabeledSet(
        scaled[:, :-1].reshape(n_traj * (n_snap - 1), selection.m),
        scaled[:, 1:].reshape(n_traj * (n_snap - 1), selection.m),
    )
    arch = Architecture(selection.m, single_width, single_blocks,
                        selection.m, act_eps)
    params, report = _single_net("single", pairs, arch, train_cfg, workers)

    state = scaler.scale(reference_trajectory[0][selection.indices][None, :])[0]
    record = [scaler.unscale(state[None, :])[0]]
    diverged_at = None
    for step in range(1, steps + 1):
        state = forward(params, state[None, :])[0]
        if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > _SCALED_LIMIT:
            diverged_at = step
            break
        record.append(scaler.unscale(state[None, :])[0])
    fields = eim_approximate(bundle.basis, selection, np.vstack(record).T).T
    single_err = tare(
        fields, reference_trajectory[: len(fields)], dt, dx
    )
    rows.append(_row("DNN-EIM (s)", 1, arch, {
        "tare": single_err.value,
        "diverged_at": diverged_at,
        "wall_time": _wall([report]),
    }))
    return rows, bundle


def evaluate_baselines(case: CaseKind, data, **options):
    """Train and score POD / single-network / per-unit variants.

    All variants share one reduced space of dimension ``m``.  Returns
    (rows, bundle): one comparison row per method with parameter counts
    and the task metric, plus the per-unit bundle for reuse.
    """
    if case is CaseKind.CLASSIFICATION:
        return _classification_baselines(data, options.pop("test_data"), **options)
    if case is CaseKind.PARAM_TO_SOLUTION:
        return _param_map_baselines(data, options.pop("reference"), **options)
    if case is CaseKind.ONE_STEP:
        return _one_step_baselines(
            data, options.pop("reference_trajectory"), **options
        )
    raise ConfigError(f"unknown case {case!r}")
