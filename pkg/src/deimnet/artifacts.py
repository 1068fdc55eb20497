"""Artifact directories: a JSON manifest plus raw float64 blobs.

Every pipeline stage persists its outputs as a directory containing
``manifest.json`` and one ``<name>.f64`` file per array.  Blobs are raw
little-endian IEEE-754 float64 in column-major order, with shapes recorded
only in the manifest, so they can be read back from any language.  Writes
go through a temporary name and an atomic rename; loads verify content
hashes.  Each manifest carries a fingerprint over everything except
timing, so re-runs with the same seed can be compared byte-for-byte.
"""

import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ArtifactError, IntegrityError
from .pipeline import CaseKind, StencilMap, SurrogateBundle
from .reduction import EimSelection, PodBasis
from .resnet import Architecture, ResNetParams, flatten_params, unflatten_params
from .scaling import MinMaxScaler
from .trainer import TrainReport

SCHEMA_VERSION = 1
KINDS = frozenset(
    {"snapshots", "basis", "selection", "dataset", "network", "bundle", "report"}
)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, CaseKind):
        return obj.value
    return obj


def _sha256(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def _blob_bytes(arr) -> bytes:
    return np.asarray(arr, dtype="<f8").tobytes(order="F")


def _atomic_write(path: Path, raw: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(raw)
    os.replace(tmp, path)


def _fingerprint(kind, params, seed, blob_hashes) -> str:
    payload = json.dumps(
        {
            "schema_version": SCHEMA_VERSION,
            "kind": kind,
            "params": params,
            "seed": seed,
            "blobs": blob_hashes,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return _sha256(payload.encode())


def save_artifact(out_dir, kind: str, arrays: dict, params: dict = None,
                  seed=None, reports: dict = None) -> dict:
    """Write blobs and manifest into ``out_dir``; returns the manifest.

    ``reports`` holds timing-bearing metadata that must not influence the
    fingerprint (wall times vary run to run even when results are
    bit-identical).
    """
    if kind not in KINDS:
        raise ArtifactError(f"unknown artifact kind {kind!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = _jsonable(params or {})
    blobs = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        raw = _blob_bytes(arr)
        fname = f"{name}.f64"
        _atomic_write(out_dir / fname, raw)
        blobs[name] = {
            "file": fname,
            "shape": list(arr.shape),
            "sha256": _sha256(raw),
        }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "params": params,
        "seed": _jsonable(seed),
        "blobs": blobs,
        "fingerprint": _fingerprint(
            kind, params, _jsonable(seed),
            {n: b["sha256"] for n, b in blobs.items()},
        ),
    }
    if reports is not None:
        manifest["reports"] = _jsonable(reports)
    _atomic_write(
        out_dir / "manifest.json",
        json.dumps(manifest, indent=2, sort_keys=True).encode(),
    )
    return manifest


def load_artifact(in_dir, kind: str = None):
    """Read (manifest, arrays) back, verifying hashes and schema."""
    in_dir = Path(in_dir)
    mpath = in_dir / "manifest.json"
    if not mpath.is_file():
        raise ArtifactError(f"{in_dir} has no manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as err:
        raise ArtifactError(f"{mpath}: invalid JSON ({err})") from err
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactError(
            f"{in_dir}: schema_version {manifest.get('schema_version')}, "
            f"expected {SCHEMA_VERSION}"
        )
    if kind is not None and manifest.get("kind") != kind:
        raise ArtifactError(
            f"{in_dir}: artifact kind {manifest.get('kind')!r}, expected {kind!r}"
        )
    expect = _fingerprint(
        manifest["kind"], manifest["params"], manifest.get("seed"),
        {n: b["sha256"] for n, b in manifest["blobs"].items()},
    )
    if manifest.get("fingerprint") != expect:
        raise IntegrityError(f"{in_dir}: manifest fingerprint mismatch")
    arrays = {}
    for name, entry in manifest["blobs"].items():
        raw = (in_dir / entry["file"]).read_bytes()
        if _sha256(raw) != entry["sha256"]:
            raise IntegrityError(f"{in_dir}/{entry['file']}: content hash mismatch")
        # keep column-major layout so BLAS calls on reloaded arrays round
        # exactly like on the originals (SVD factors come back F-ordered)
        arrays[name] = (
            np.frombuffer(raw, dtype="<f8")
            .reshape(entry["shape"], order="F")
            .copy(order="F")
        )
    return manifest, arrays


# ---------------------------------------------------------------------------
# bundle persistence


def rebuild_selection(indices, ptv, condition=None) -> EimSelection:
    """Reconstruct an interpolation selection from its persisted arrays."""
    ptv = np.asarray(ptv, dtype=float)
    if condition is None:
        condition = float(np.linalg.cond(ptv))
    return EimSelection(
        indices=np.asarray(indices).astype(int),
        ptv=ptv,
        lu=scipy.linalg.lu_factor(ptv),
        condition=condition,
    )


def _zero_params(arch: Architecture) -> ResNetParams:
    shapes = arch.weight_shapes()
    return ResNetParams(
        [np.zeros(s) for s in shapes],
        [np.zeros(s[0]) for s in shapes[:-1]],
        arch.step_size,
        arch.act_eps,
    )


def save_bundle(out_dir, bundle: SurrogateBundle, seed=None,
                upstream: dict = None) -> dict:
    """Persist a surrogate bundle; per-network weights become one blob each."""
    arrays = {
        "basis_V": bundle.basis.V,
        "singular_values": bundle.basis.singular_values,
        "selection_indices": np.asarray(bundle.selection.indices, dtype=float),
        "selection_ptv": bundle.selection.ptv,
    }
    for uid in sorted(bundle.networks):
        arrays[f"net_{uid}"] = flatten_params(bundle.networks[uid])
    if bundle.scaler is not None:
        arrays["scaler_lo"] = bundle.scaler.lo
        arrays["scaler_hi"] = bundle.scaler.hi
    if bundle.input_hull is not None:
        arrays["hull_lo"], arrays["hull_hi"] = bundle.input_hull
    params = {
        "case": bundle.case,
        "m_requested": bundle.m_requested,
        "architecture": asdict(bundle.architecture),
        "network_ids": sorted(bundle.networks),
        "failures": bundle.failures,
        "selection_condition": bundle.selection.condition,
        "stencils": None,
        "upstream": upstream or {},
    }
    if bundle.stencils is not None:
        params["stencils"] = {
            "size": bundle.stencils.size,
            "members": {k: list(v) for k, v in bundle.stencils.members.items()},
        }
    reports = {
        uid: asdict(report) for uid, report in sorted(bundle.reports.items())
    }
    return save_artifact(out_dir, "bundle", arrays, params, seed, reports)


def load_bundle(in_dir) -> SurrogateBundle:
    manifest, arrays = load_artifact(in_dir, kind="bundle")
    params = manifest["params"]
    arch = Architecture(**params["architecture"])
    template = _zero_params(arch)
    networks = {
        uid: unflatten_params(arrays[f"net_{uid}"], template)
        for uid in params["network_ids"]
    }
    selection = rebuild_selection(
        arrays["selection_indices"], arrays["selection_ptv"],
        params["selection_condition"],
    )
    stencils = None
    if params.get("stencils"):
        stencils = StencilMap(
            {int(k): tuple(v) for k, v in params["stencils"]["members"].items()},
            params["stencils"]["size"],
        )
    scaler = None
    if "scaler_lo" in arrays:
        scaler = MinMaxScaler(arrays["scaler_lo"], arrays["scaler_hi"])
    hull = None
    if "hull_lo" in arrays:
        hull = (arrays["hull_lo"], arrays["hull_hi"])
    reports = {}
    for key, rep in manifest.get("reports", {}).items():
        rep = dict(rep)
        rep["history"] = [tuple(h) for h in rep.get("history", [])]
        uid = int(key) if key.lstrip("-").isdigit() else key
        reports[uid] = TrainReport(**rep)
    failures = {
        int(k) if k.lstrip("-").isdigit() else k: v
        for k, v in params.get("failures", {}).items()
    }
    return SurrogateBundle(
        case=CaseKind(params["case"]),
        basis=PodBasis(arrays["basis_V"], arrays["singular_values"]),
        selection=selection,
        networks=networks,
        architecture=arch,
        m_requested=params["m_requested"],
        stencils=stencils,
        scaler=scaler,
        input_hull=hull,
        reports=reports,
        failures=failures,
    )
