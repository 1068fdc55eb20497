"""Artifact persistence: blob round trips, hash verification, bundle save/load."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from deimnet.artifacts import (
    SCHEMA_VERSION,
    load_artifact,
    load_bundle,
    save_artifact,
    save_bundle,
)
from deimnet.errors import ArtifactError, IntegrityError
from deimnet.pipeline import CaseKind, offline, predict_solution
from deimnet.resnet import flatten_params
from deimnet.trainer import TrainConfig


@pytest.fixture
def arrays():
    rng = np.random.default_rng(11)
    return {
        "cube": rng.standard_normal((4, 3, 2)),
        "mat": rng.standard_normal((5, 2)),
        "vec": rng.standard_normal(7),
    }


def _param_map_bundle():
    rng = np.random.default_rng(0)
    thetas = rng.uniform(0.0, 1.0, (40, 2))
    x = np.linspace(0, 1, 30)
    modes = np.stack([np.sin(np.pi * x), np.cos(2 * np.pi * x), x])
    sols = thetas @ modes[:2] + 0.1 * np.outer(thetas[:, 0] * thetas[:, 1], modes[2])
    data = SimpleNamespace(inputs=thetas, outputs=sols)
    cfg = TrainConfig(max_iterations=8, patience=4, seed=1)
    return offline(
        CaseKind.PARAM_TO_SOLUTION, data, m=3, width=4, residual_blocks=1,
        train_cfg=cfg,
    ), thetas


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "snapshots", arrays, params={"n": 4}, seed=3)
        manifest, back = load_artifact(tmp_path / "a", kind="snapshots")
        assert set(back) == set(arrays)
        for name in arrays:
            assert np.array_equal(back[name], arrays[name])
        assert manifest["seed"] == 3
        assert manifest["params"] == {"n": 4}

    def test_fingerprint_stable_across_saves(self, tmp_path, arrays):
        m1 = save_artifact(tmp_path / "a", "dataset", arrays, seed=3)
        m2 = save_artifact(tmp_path / "b", "dataset", arrays, seed=3)
        assert m1["fingerprint"] == m2["fingerprint"]

    def test_fingerprint_tracks_content(self, tmp_path, arrays):
        m1 = save_artifact(tmp_path / "a", "dataset", arrays, seed=3)
        m2 = save_artifact(tmp_path / "b", "dataset", arrays, seed=4)
        changed = dict(arrays, vec=arrays["vec"] + 1e-16)
        m3 = save_artifact(tmp_path / "c", "dataset", changed, seed=3)
        assert m1["fingerprint"] != m2["fingerprint"]
        assert m1["fingerprint"] != m3["fingerprint"]

    def test_reports_do_not_affect_fingerprint(self, tmp_path, arrays):
        m1 = save_artifact(tmp_path / "a", "report", arrays,
                           reports={"wall_time": 1.5})
        m2 = save_artifact(tmp_path / "b", "report", arrays,
                           reports={"wall_time": 92.1})
        assert m1["fingerprint"] == m2["fingerprint"]

    def test_blob_is_column_major_float64(self, tmp_path):
        mat = np.arange(6.0).reshape(2, 3)
        save_artifact(tmp_path / "a", "basis", {"mat": mat})
        raw = (tmp_path / "a" / "mat.f64").read_bytes()
        assert raw == mat.tobytes(order="F")
        assert len(raw) == 6 * 8

    def test_unknown_kind_rejected(self, tmp_path, arrays):
        with pytest.raises(ArtifactError):
            save_artifact(tmp_path / "a", "mystery", arrays)


class TestVerification:
    def test_tampered_blob(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "dataset", arrays)
        blob = tmp_path / "a" / "vec.f64"
        raw = bytearray(blob.read_bytes())
        raw[0] ^= 1
        blob.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            load_artifact(tmp_path / "a")

    def test_tampered_manifest(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "dataset", arrays, params={"n": 4})
        mpath = tmp_path / "a" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["params"]["n"] = 5
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(IntegrityError):
            load_artifact(tmp_path / "a")

    def test_kind_mismatch(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "basis", arrays)
        with pytest.raises(ArtifactError, match="kind"):
            load_artifact(tmp_path / "a", kind="selection")

    def test_wrong_schema_version(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "basis", arrays)
        mpath = tmp_path / "a" / "manifest.json"
        manifest = json.loads(mpath.read_text())
        manifest["schema_version"] = SCHEMA_VERSION + 1
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(ArtifactError, match="schema"):
            load_artifact(tmp_path / "a")

    def test_missing_manifest(self, tmp_path):
        (tmp_path / "a").mkdir()
        with pytest.raises(ArtifactError, match="manifest"):
            load_artifact(tmp_path / "a")

    def test_corrupt_manifest_json(self, tmp_path, arrays):
        save_artifact(tmp_path / "a", "basis", arrays)
        (tmp_path / "a" / "manifest.json").write_text("{not json")
        with pytest.raises(ArtifactError, match="JSON"):
            load_artifact(tmp_path / "a")


class TestBundle:
    def test_round_trip_semantics(self, tmp_path):
        bundle, thetas = _param_map_bundle()
        save_bundle(tmp_path / "b", bundle, seed=1, upstream={"dataset": "abc"})
        loaded = load_bundle(tmp_path / "b")

        assert loaded.case is CaseKind.PARAM_TO_SOLUTION
        assert loaded.m == bundle.m
        assert loaded.m_requested == bundle.m_requested
        assert loaded.architecture == bundle.architecture
        assert np.array_equal(loaded.selection.indices, bundle.selection.indices)
        assert loaded.selection.indices.dtype.kind == "i"
        assert np.array_equal(loaded.basis.V, bundle.basis.V)
        assert np.array_equal(
            loaded.basis.singular_values, bundle.basis.singular_values
        )
        assert set(loaded.networks) == set(bundle.networks)
        for uid in bundle.networks:
            assert np.array_equal(
                flatten_params(loaded.networks[uid]),
                flatten_params(bundle.networks[uid]),
            )
        assert loaded.reports == bundle.reports
        assert loaded.failures == bundle.failures
        assert np.array_equal(loaded.input_hull[0], bundle.input_hull[0])
        assert np.array_equal(loaded.input_hull[1], bundle.input_hull[1])
        assert loaded.stencils is None and loaded.scaler is None

    def test_loaded_bundle_predicts_bitwise(self, tmp_path):
        bundle, thetas = _param_map_bundle()
        save_bundle(tmp_path / "b", bundle)
        loaded = load_bundle(tmp_path / "b")
        for theta in thetas[:5]:
            fresh = predict_solution(bundle, theta)
            replay = predict_solution(loaded, theta)
            assert np.array_equal(fresh.field, replay.field)
            assert fresh.extrapolated == replay.extrapolated

    def test_stencils_and_scaler_survive(self, tmp_path):
        from deimnet.datagen import KsConfig, ks_trajectory_ensemble

        cfg = KsConfig(domain_length=50.0, dt=0.05, n_grid=64, burn_in=0.0,
                       snapshot_interval=0.05, snapshots_per_trajectory=5,
                       n_trajectories=3, ic_seed=2)
        traj = ks_trajectory_ensemble(cfg)
        coords = np.linspace(0.0, cfg.domain_length, cfg.n_grid, endpoint=False)
        tcfg = TrainConfig(max_iterations=5, patience=3, seed=2)
        bundle = offline(
            CaseKind.ONE_STEP, (traj, coords), m=4, width=3, residual_blocks=1,
            train_cfg=tcfg, stencil_size=3, topology="periodic",
        )
        save_bundle(tmp_path / "b", bundle, seed=2)
        loaded = load_bundle(tmp_path / "b")
        assert loaded.stencils == bundle.stencils
        assert np.array_equal(loaded.scaler.lo, bundle.scaler.lo)
        assert np.array_equal(loaded.scaler.hi, bundle.scaler.hi)

    def test_bundle_fingerprint_reproducible(self, tmp_path):
        bundle, _ = _param_map_bundle()
        m1 = save_bundle(tmp_path / "a", bundle, seed=1)
        m2 = save_bundle(tmp_path / "b", bundle, seed=1)
        assert m1["fingerprint"] == m2["fingerprint"]
