from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from deimnet.datagen import MnistSet
from deimnet.errors import BlowUpError, ConfigError, DimensionError
from deimnet.pipeline import (
    CaseKind,
    StencilMap,
    SurrogateBundle,
    add_class,
    build_stencils,
    classify,
    evaluate_baselines,
    offline,
    predict_solution,
    rollout,
    tare,
)
from deimnet.reduction import eim_approximate, eim_select, pod_basis
from deimnet.resnet import Architecture, LabeledSet, ResNetParams, flatten_params
from deimnet.scaling import MinMaxScaler
from deimnet.trainer import TrainConfig


def fake_selection(indices):
    indices = np.asarray(indices)
    return SimpleNamespace(indices=indices, m=len(indices))


def constant_net(arch: Architecture, value: float) -> ResNetParams:
    """Network ignoring its input and returning ``value`` in each output."""
    shapes = arch.weight_shapes()
    weights = [np.zeros(s) for s in shapes]
    biases = [np.zeros(s[0]) for s in shapes[:-1]]
    # hidden activations collapse to a known positive constant
    hidden = 0.25 * arch.act_eps * (1.0 + arch.residual_blocks * arch.step_size)
    weights[-1] = np.full(shapes[-1], value / (arch.width * hidden))
    return ResNetParams(weights, biases, arch.step_size, arch.act_eps)


def center_identity_net(size: int, center: int, blocks: int = 1,
                        eps: float = 1e-2) -> ResNetParams:
    """Passes through the stencil's center value (exact at 0)."""
    arch = Architecture(size, 2, blocks, 1, eps)
    weights = [np.zeros(s) for s in arch.weight_shapes()]
    biases = [np.zeros(s[0]) for s in arch.weight_shapes()[:-1]]
    weights[0][0, center] = 1.0
    biases[0][:] = 2.0 * eps  # keep both units in the linear branch
    weights[-1][0] = [1.0, -1.0]  # second unit cancels the shared offset
    return ResNetParams(weights, biases, arch.step_size, arch.act_eps)


def small_cfg(**kw):
    base = dict(max_iterations=12, patience=6, seed=3)
    base.update(kw)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# stencils


class TestBuildStencils:
    def test_interior_points_take_adjacent_neighbors(self):
        coords = np.linspace(0.0, 1.0, 60)
        sel = fake_selection([5, 15, 25, 35, 45])
        sten = build_stencils(sel, coords, size=3, topology="bounded")
        assert sten.members[2] == (1, 2, 3)
        assert sten.members[0] == (0, 1, 2)  # boundary falls back inward
        assert sten.members[4] == (2, 3, 4)

    def test_periodic_wrap_reaches_across_the_seam(self):
        # points at 0.2, 3.0, 5.0, 9.7 on a period-10 grid: the nearest
        # peer of 0.2 is 9.7 (distance 0.5), not 3.0 (distance 2.8)
        coords = np.linspace(0.0, 10.0, 100, endpoint=False)
        sel = fake_selection([2, 30, 50, 97])
        sten = build_stencils(sel, coords, size=2, topology="periodic")
        assert sten.members[0] == (0, 3)
        assert sten.members[3] == (0, 3)

    def test_members_ordered_by_coordinate(self):
        coords = np.linspace(0.0, 10.0, 100, endpoint=False)
        sel = fake_selection([97, 2, 30])  # selection order is not spatial
        sten = build_stencils(sel, coords, size=3, topology="periodic")
        for j in range(3):
            cs = coords[sel.indices[list(sten.members[j])]]
            assert np.all(np.diff(cs) > 0)

    def test_degenerate_single_point_stencils(self):
        sel = fake_selection([4, 9, 14])
        sten = build_stencils(sel, np.linspace(0, 1, 20), size=1)
        assert sten.members == {0: (0,), 1: (1,), 2: (2,)}

    def test_size_beyond_selection_rejected(self):
        sel = fake_selection([4, 9])
        with pytest.raises(ConfigError):
            build_stencils(sel, np.linspace(0, 1, 20), size=3)

    def test_nearest_property_holds(self):
        rng = np.random.default_rng(8)
        coords = np.sort(rng.uniform(0, 5, size=50))
        sel = fake_selection(np.sort(rng.choice(50, size=9, replace=False)))
        sten = build_stencils(sel, coords, size=4, topology="bounded")
        pts = coords[sel.indices]
        for j in range(9):
            dists = np.abs(pts - pts[j])
            inside = max(dists[k] for k in sten.members[j])
            outside = min(
                (dists[k] for k in range(9) if k not in sten.members[j]),
                default=np.inf,
            )
            assert inside <= outside + 1e-15

    def test_malformed_map_rejected(self):
        with pytest.raises(ConfigError):
            StencilMap({0: (1, 2)}, 2)  # own point missing
        with pytest.raises(ConfigError):
            StencilMap({0: (0, 0)}, 2)  # duplicate member


# ---------------------------------------------------------------------------
# tare


class TestTare:
    def test_identical_trajectories(self):
        a = np.random.default_rng(0).standard_normal((5, 16))
        assert tare(a, a, dt=0.1, dx=0.5).value == 0.0

    def test_constant_difference_closed_form(self):
        # constant offset c over a domain of length L: error is |c| sqrt(L)
        n, length, c = 80, 2.5, 0.3
        dx = length / n
        a = np.zeros((6, n))
        b = np.full((6, n), c)
        assert tare(a, b, dt=0.2, dx=dx).value == pytest.approx(
            c * np.sqrt(length), rel=1e-12
        )

    def test_linear_in_time_error_integrates_to_half(self):
        # ||e(t)|| = t exactly: the trapezoid average over [0, T] is T/2
        n, dx, dt, count = 10, 0.1, 0.25, 9
        times = dt * np.arange(count)
        a = np.zeros((count, n))
        b = times[:, None] / np.sqrt(dx * n) * np.ones(n)
        T = dt * (count - 1)
        assert tare(a, b, dt=dt, dx=dx).value == pytest.approx(T / 2, rel=1e-12)

    def test_single_snapshot_flags_instantaneous_norm(self):
        a = np.zeros((1, 4))
        b = np.ones((1, 4))
        out = tare(a, b, dt=0.1, dx=1.0)
        assert out.instantaneous
        assert out.value == pytest.approx(2.0)
        assert float(out) == out.value

    def test_pseudo_metric_properties(self):
        rng = np.random.default_rng(1)
        a, b, c = rng.standard_normal((3, 7, 12))
        kw = dict(dt=0.3, dx=0.7)
        ab, ba = tare(a, b, **kw).value, tare(b, a, **kw).value
        assert ab == ba and ab >= 0
        assert ab <= tare(a, c, **kw).value + tare(c, b, **kw).value + 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            tare(np.zeros((3, 4)), np.zeros((3, 5)), dt=0.1, dx=1.0)


# ---------------------------------------------------------------------------
# hand-assembled bundles for the online operations


def classification_bundle(scores, m=4):
    rng = np.random.default_rng(2)
    snaps = rng.uniform(0, 1, size=(12, 30))
    basis = pod_basis(snaps, rank=m)
    sel = eim_select(basis)
    arch = Architecture(m, 3, 1, 1)
    nets = {d: constant_net(arch, s) for d, s in scores.items()}
    return SurrogateBundle(
        case=CaseKind.CLASSIFICATION, basis=basis, selection=sel,
        networks=nets, architecture=arch, m_requested=m,
    )


class TestClassify:
    def test_dominant_network_wins(self):
        bundle = classification_bundle({0: -1.0, 1: 2.0, 2: 0.5})
        assert classify(bundle, np.zeros(4)) == 1

    def test_all_equal_scores_tie_break_to_smallest(self):
        bundle = classification_bundle({0: 0.7, 1: 0.7, 2: 0.7, 3: 0.7})
        assert classify(bundle, np.full(4, 0.3)) == 0

    def test_batch_input_returns_array(self):
        bundle = classification_bundle({0: 0.1, 5: 0.9})
        out = classify(bundle, np.zeros((6, 4)))
        assert out.tolist() == [5] * 6

    def test_argmax_invariant_under_positive_output_scaling(self):
        bundle = classification_bundle({0: 0.2, 1: 0.9, 2: 0.4})
        x = np.random.default_rng(3).uniform(0, 1, size=(5, 4))
        base = classify(bundle, x)
        scaled_nets = {
            d: ResNetParams(
                [w if i < len(p.weights) - 1 else 17.0 * w
                 for i, w in enumerate(p.weights)],
                [b.copy() for b in p.biases], p.step_size, p.act_eps,
            )
            for d, p in bundle.networks.items()
        }
        rescaled = replace(bundle, networks=scaled_nets)
        assert np.array_equal(classify(rescaled, x), base)

    def test_wrong_length_rejected(self):
        bundle = classification_bundle({0: 0.1})
        with pytest.raises(DimensionError):
            classify(bundle, np.zeros(5))

    def test_case_guard(self):
        bundle = classification_bundle({0: 0.1})
        with pytest.raises(ConfigError):
            rollout(bundle, np.zeros(30), 1)


def param_map_bundle(values_at_points, thetas):
    """Bundle whose networks return fixed values regardless of theta."""
    rng = np.random.default_rng(4)
    modes = rng.standard_normal((3, 40))
    coeff = rng.standard_normal((15, 3))
    snaps = (coeff @ modes).T  # rank-3 family of 40-vectors
    basis = pod_basis(snaps, rank=3)
    sel = eim_select(basis)
    arch = Architecture(2, 3, 1, 1)
    nets = {j: constant_net(arch, values_at_points[j]) for j in range(3)}
    return SurrogateBundle(
        case=CaseKind.PARAM_TO_SOLUTION, basis=basis, selection=sel,
        networks=nets, architecture=arch, m_requested=3,
        input_hull=(thetas.min(axis=0), thetas.max(axis=0)),
    ), basis, sel, snaps


class TestPredictSolution:
    thetas = np.array([[5.0, 0.05], [7.25, 0.15], [6.0, 0.10]])

    def test_reconstruction_interpolates_network_outputs(self):
        bundle, _, sel, _ = param_map_bundle([0.4, -0.2, 1.1], self.thetas)
        pred = predict_solution(bundle, (6.0, 0.1))
        assert np.allclose(pred.at_points, [0.4, -0.2, 1.1], atol=1e-12)
        assert np.allclose(pred.field[sel.indices], pred.at_points, atol=1e-10)

    def test_exact_point_values_give_pure_interpolation_error(self):
        # networks reproducing the true values at the selected rows leave
        # exactly the interpolation residual of the reduced space
        bundle, basis, sel, snaps = param_map_bundle([0, 0, 0], self.thetas)
        target = snaps[:, 7]
        nets = {
            j: constant_net(bundle.architecture, target[sel.indices[j]])
            for j in range(3)
        }
        bundle = replace(bundle, networks=nets)
        pred = predict_solution(bundle, (6.0, 0.1))
        direct = eim_approximate(basis, sel, target[sel.indices])
        assert np.allclose(pred.field, direct, atol=1e-9)

    def test_extrapolation_flagged_not_raised(self):
        bundle, *_ = param_map_bundle([0.1, 0.1, 0.1], self.thetas)
        assert not predict_solution(bundle, (6.0, 0.1)).extrapolated
        assert predict_solution(bundle, (8.0, 0.1)).extrapolated
        assert predict_solution(bundle, (6.0, 0.01)).extrapolated

    def test_wrong_theta_length_rejected(self):
        bundle, *_ = param_map_bundle([0.1, 0.1, 0.1], self.thetas)
        with pytest.raises(DimensionError):
            predict_solution(bundle, (1.0, 2.0, 3.0))


def one_step_bundle(nets, lo=0.0, hi=1.0, m=3, n=24):
    rng = np.random.default_rng(5)
    snaps = rng.uniform(0, 1, size=(n, 10))
    basis = pod_basis(snaps, rank=m)
    sel = eim_select(basis)
    coords = np.linspace(0.0, 1.0, n, endpoint=False)
    stencils = build_stencils(sel, coords, size=3, topology="periodic")
    scaler = MinMaxScaler(np.full(m, lo), np.full(m, hi))
    arch = Architecture(3, 2, 1, 1)
    return SurrogateBundle(
        case=CaseKind.ONE_STEP, basis=basis, selection=sel, networks=nets,
        architecture=arch, m_requested=m, stencils=stencils, scaler=scaler,
    )


class TestRollout:
    def identity_nets(self, bundle):
        return {
            j: center_identity_net(3, bundle.stencils.members[j].index(j))
            for j in range(bundle.selection.m)
        }

    def test_zero_steps_returns_initial_points(self):
        bundle = one_step_bundle({})
        state = np.random.default_rng(6).uniform(0, 1, size=24)
        out = rollout(bundle, state, 0)
        assert np.array_equal(out.at_points[0], state[bundle.selection.indices])
        assert out.at_points.shape == (1, 3) and out.fields.shape == (1, 24)

    def test_identity_networks_hold_state_exactly_at_scale_origin(self):
        bundle = one_step_bundle({}, lo=0.25, hi=1.25)
        bundle = replace(bundle, networks=self.identity_nets(bundle))
        state = np.full(24, 0.25)  # scales to exactly zero
        out = rollout(bundle, state, 40)
        assert np.array_equal(out.at_points, np.full((41, 3), 0.25))

    def test_identity_networks_nearly_constant_generically(self):
        bundle = one_step_bundle({})
        bundle = replace(bundle, networks=self.identity_nets(bundle))
        state = np.random.default_rng(7).uniform(0.1, 0.9, size=24)
        out = rollout(bundle, state, 25)
        drift = np.max(np.abs(out.at_points - out.at_points[0]))
        assert drift <= 1e-12

    def test_fields_interpolate_the_point_values(self):
        bundle = one_step_bundle({})
        bundle = replace(bundle, networks=self.identity_nets(bundle))
        state = np.random.default_rng(8).uniform(0, 1, size=24)
        out = rollout(bundle, state, 3)
        assert np.allclose(
            out.fields[:, bundle.selection.indices], out.at_points, atol=1e-10
        )

    def test_divergence_guard_reports_step(self):
        arch = Architecture(3, 2, 1, 1)
        nets = {j: constant_net(arch, 2e3) for j in range(3)}
        bundle = one_step_bundle(nets)
        with pytest.raises(BlowUpError) as err:
            rollout(bundle, np.full(24, 0.5), 5)
        assert err.value.when == 1

    def test_wrong_state_length_rejected(self):
        bundle = one_step_bundle({})
        with pytest.raises(DimensionError):
            rollout(bundle, np.zeros(10), 1)

    def test_negative_steps_rejected(self):
        bundle = one_step_bundle({})
        with pytest.raises(ConfigError):
            rollout(bundle, np.zeros(24), -1)


# ---------------------------------------------------------------------------
# offline training paths (tiny budgets, structure over accuracy)


def toy_pools(n_pixels=36, n_train=60, n_val=30, digits=(0, 1, 2), seed=9):
    rng = np.random.default_rng(seed)
    def make(count):
        labels = rng.integers(0, len(digits), size=count)
        images = rng.uniform(0, 1, size=(count, n_pixels))
        images[np.arange(count), labels] = 1.0  # plant a learnable cue
        return MnistSet(images, np.asarray(digits)[labels])
    return make(n_train), make(n_val)


class TestOffline:
    def test_classification_bundle_structure(self):
        pools = toy_pools()
        bundle = offline(
            CaseKind.CLASSIFICATION, pools, m=5, width=3, residual_blocks=1,
            train_cfg=small_cfg(), digits=(0, 1, 2), per_class_train=8,
            per_class_val=4,
        )
        assert bundle.case is CaseKind.CLASSIFICATION
        assert sorted(bundle.networks) == [0, 1, 2]
        assert bundle.selection.m == 5 and not bundle.capped
        assert bundle.architecture.d == 5 and bundle.architecture.d_star == 1
        assert bundle.scaler is None and bundle.stencils is None
        assert not bundle.failures
        assert classify(bundle, np.zeros(5)) in (0, 1, 2)

    def test_missing_class_fails_alone(self):
        train, val = toy_pools(digits=(0, 1))
        bundle = offline(
            CaseKind.CLASSIFICATION, (train, val), m=4, width=3,
            residual_blocks=1, train_cfg=small_cfg(), digits=(0, 1, 7),
            per_class_train=8, per_class_val=4,
        )
        assert sorted(bundle.networks) == [0, 1]
        assert list(bundle.failures) == [7]

    def test_param_map_rank_cap_is_recorded(self):
        rng = np.random.default_rng(10)
        thetas = rng.uniform(0, 1, size=(25, 2))
        modes = rng.standard_normal((3, 50))
        weights = np.column_stack(
            [np.sin(thetas[:, 0]), np.cos(thetas[:, 1]), thetas.prod(axis=1)]
        )
        data = LabeledSet(thetas, weights @ modes)
        bundle = offline(
            CaseKind.PARAM_TO_SOLUTION, data, m=10, width=3,
            residual_blocks=1, train_cfg=small_cfg(),
        )
        assert bundle.capped and bundle.m_requested == 10
        assert bundle.m == 3 == len(bundle.networks)
        assert bundle.input_hull[0].shape == (2,)
        pred = predict_solution(bundle, thetas[0])
        assert pred.field.shape == (50,)

    def test_one_step_bundle_structure(self):
        rng = np.random.default_rng(11)
        traj = rng.uniform(0, 1, size=(4, 6, 32))
        coords = np.linspace(0, 2, 32, endpoint=False)
        bundle = offline(
            CaseKind.ONE_STEP, (traj, coords), m=5, width=2,
            residual_blocks=1, train_cfg=small_cfg(), stencil_size=3,
        )
        assert bundle.stencils.size == 3
        assert bundle.scaler.n_components == 5
        assert sorted(bundle.networks) == list(range(5))
        out = rollout(bundle, traj[0, 0], 2)
        assert out.at_points.shape == (3, 5)

    def test_offline_is_deterministic(self):
        pools = toy_pools()
        kw = dict(m=4, width=3, residual_blocks=1, train_cfg=small_cfg(),
                  digits=(0, 1, 2), per_class_train=8, per_class_val=4)
        a = offline(CaseKind.CLASSIFICATION, pools, **kw)
        b = offline(CaseKind.CLASSIFICATION, pools, **kw)
        for d in a.networks:
            assert np.array_equal(
                flatten_params(a.networks[d]), flatten_params(b.networks[d])
            )

    def test_unknown_case_rejected(self):
        with pytest.raises(ConfigError):
            offline("nonsense", None, m=2, width=2, residual_blocks=1,
                    train_cfg=small_cfg())


class TestAddClass:
    def test_adds_exactly_one_network_and_keeps_others_bitwise(self):
        pools = toy_pools(digits=(0, 1, 2))
        kw = dict(m=4, width=3, residual_blocks=1, train_cfg=small_cfg(),
                  per_class_train=8, per_class_val=4)
        partial = offline(CaseKind.CLASSIFICATION, pools, digits=(0, 1), **kw)
        full = offline(CaseKind.CLASSIFICATION, pools, digits=(0, 1, 2), **kw)
        extended = add_class(partial, 2, *pools, small_cfg(),
                             per_class_train=8, per_class_val=4)
        assert sorted(extended.networks) == [0, 1, 2]
        for d in (0, 1):
            assert extended.networks[d] is partial.networks[d]
        # matches the network trained in a joint run, by seed derivation
        assert np.array_equal(
            flatten_params(extended.networks[2]),
            flatten_params(full.networks[2]),
        )

    def test_duplicate_class_rejected(self):
        pools = toy_pools(digits=(0, 1))
        bundle = offline(
            CaseKind.CLASSIFICATION, pools, m=4, width=3, residual_blocks=1,
            train_cfg=small_cfg(), digits=(0, 1), per_class_train=8,
            per_class_val=4,
        )
        with pytest.raises(ConfigError):
            add_class(bundle, 1, *pools, small_cfg())


class TestEvaluateBaselines:
    def test_classification_rows(self):
        pools = toy_pools()
        test_set = toy_pools(seed=12)[0]
        rows, bundle = evaluate_baselines(
            CaseKind.CLASSIFICATION, pools, test_data=test_set, m=4,
            train_cfg=small_cfg(), workers=1, unit_width=3, unit_blocks=1,
            single_width=4, single_blocks=1, digits=(0, 1, 2),
            per_class_train=8, per_class_val=4,
        )
        assert [r["method"] for r in rows] == ["POD", "DNN-EIM (s)", "DNN-EIM"]
        assert rows[2]["n_resnets"] == 3 and rows[0]["n_resnets"] == 1
        for r in rows:
            assert 0.0 <= r["accuracy"] <= 1.0
            assert r["params"] > 0 and r["wall_time"] >= 0
        # parameter counts follow the shared formula
        assert rows[2]["params"] == 4 * 3 + 3 + 1 * (9 + 3) + 3
        assert len(bundle.networks) == 3

    def test_param_map_rows_share_reduced_dimension(self):
        rng = np.random.default_rng(13)
        thetas = rng.uniform(0, 1, size=(30, 2))
        modes = rng.standard_normal((3, 40))
        weights = np.column_stack(
            [thetas[:, 0], thetas[:, 1], thetas[:, 0] * thetas[:, 1]]
        )
        data = LabeledSet(thetas, weights @ modes)
        ref_theta = thetas[4]
        ref_field = data.outputs[4]
        rows, bundle = evaluate_baselines(
            CaseKind.PARAM_TO_SOLUTION, data, reference=(ref_theta, ref_field),
            m=6, train_cfg=small_cfg(), workers=1, unit_width=3,
            unit_blocks=1, single_width=4, single_blocks=1,
        )
        assert [r["method"] for r in rows] == ["POD", "DNN-EIM (s)", "DNN-EIM"]
        for r in rows:
            assert np.isfinite(r["l2_error"])
        assert bundle.capped and bundle.m == 3
        assert rows[2]["n_resnets"] == 3

    def test_one_step_rows(self):
        rng = np.random.default_rng(14)
        traj = rng.uniform(0.2, 0.8, size=(4, 6, 32))
        coords = np.linspace(0, 2, 32, endpoint=False)
        reference = traj[0]
        rows, bundle = evaluate_baselines(
            CaseKind.ONE_STEP, (traj, coords), reference_trajectory=reference,
            m=5, dt=0.1, dx=coords[1] - coords[0], train_cfg=small_cfg(),
            workers=1, unit_width=2, unit_blocks=1, single_width=5,
            single_blocks=1, stencil_size=3,
        )
        assert [r["method"] for r in rows] == ["DNN-EIM", "DNN-EIM (s)"]
        for r in rows:
            assert np.isfinite(r["tare"]) and r["tare"] >= 0
        assert rows[0]["n_resnets"] == 5 and rows[1]["n_resnets"] == 1
