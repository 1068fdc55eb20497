"""POD basis construction and empirical interpolation (EIM/DEIM).

Snapshots are stored column-wise (n rows of state, N sample columns).
``pod_basis`` extracts the leading left singular vectors, ``eim_select``
runs the greedy interpolation-index search on that basis, and
``eim_approximate`` evaluates the interpolatory approximation
``V (P^T V)^-1 P^T u`` from the selected entries of a state only.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateBasisError, DimensionError, RankDeficiencyError

__all__ = [
    "SnapshotMatrix",
    "PodBasis",
    "EimSelection",
    "pod_basis",
    "eim_select",
    "eim_approximate",
    "eim_error_curve",
]


@dataclass
class SnapshotMatrix:
    """Column-stacked state vectors plus optional physical row coordinates."""

    data: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.ndim != 2 or self.data.size == 0:
            raise DimensionError("snapshot matrix must be a nonempty 2-d array")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("snapshot matrix contains non-finite entries")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
            if self.coords.shape[0] != self.data.shape[0]:
                raise DimensionError(
                    f"coords has {self.coords.shape[0]} rows, "
                    f"snapshots have {self.data.shape[0]}"
                )

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass
class PodBasis:
    """Orthonormal basis columns and the full singular-value spectrum."""

    V: np.ndarray
    singular_values: np.ndarray

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def m(self):
        return self.V.shape[1]

    def truncate(self, m):
        if not 1 <= m <= self.m:
            raise DimensionError(f"cannot truncate rank-{self.m} basis to {m}")
        return PodBasis(self.V[:, :m], self.singular_values)


@dataclass
class EimSelection:
    """Greedily selected interpolation rows and the solve operator for P^T V.

    ``lu`` is the partial-pivoting LU factorization of the m-by-m matrix
    ``P^T V``; the inverse itself is never formed.
    """

    indices: np.ndarray
    ptv: np.ndarray
    lu: tuple = field(repr=False)
    condition: float = np.nan

    @property
    def m(self):
        return len(self.indices)

    def solve(self, rhs):
        """Apply (P^T V)^-1 to ``rhs`` (vector or stacked columns)."""
        return scipy.linalg.lu_solve(self.lu, rhs)


def _flip_column_signs(V):
    # Largest-magnitude entry of each column made positive, for
    # run-to-run and cross-platform reproducibility.
    peak = np.abs(V).argmax(axis=0)
    signs = np.sign(V[peak, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _economy_svd(A):
    # For very wide matrices, reduce by a QR factorization of the transpose
    # first; the left singular vectors and spectrum are unchanged and the
    # O(n * N) workspace of a direct wide SVD is avoided.
    n, N = A.shape
    if N > 4 * n:
        R = scipy.linalg.qr(A.T, mode="r")[0][:n, :]
        U, s, _ = scipy.linalg.svd(R.T, full_matrices=False)
        return U, s
    U, s, _ = scipy.linalg.svd(A, full_matrices=False)
    return U, s


def pod_basis(snapshots, rank=None, energy_tol=None):
    """Proper orthogonal decomposition of a snapshot set.

    Exactly one of ``rank`` (number of basis vectors) or ``energy_tol``
    (smallest m whose cumulative squared singular values reach the given
    fraction of the total) must be given.  Columns of the returned basis
    are orthonormal left singular vectors, sign-normalized so the
    largest-magnitude entry of each column is positive.
    """
    if isinstance(snapshots, SnapshotMatrix):
        A = snapshots.data
    else:
        A = np.asarray(snapshots, dtype=float)
    if (rank is None) == (energy_tol is None):
        raise ValueError("give exactly one of rank or energy_tol")

    n, N = A.shape
    kmax = min(n, N)
    if rank is not None:
        rank = int(rank)
        if not 1 <= rank <= kmax:
            raise DimensionError(
                f"rank {rank} out of range [1, {kmax}] for a {n}x{N} snapshot matrix"
            )
    else:
        if not 0.0 < energy_tol < 1.0:
            raise ValueError(f"energy_tol must lie in (0, 1), got {energy_tol}")

    U, s = _economy_svd(A)

    # Numerical-rank guard: tiny trailing singular values carry no usable
    # directions and would break the interpolation solve downstream.
    rank_tol = max(n, N) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    numerical_rank = int(np.count_nonzero(s > rank_tol))

    if rank is None:
        energy = np.cumsum(s**2)
        total = energy[-1]
        if total == 0.0:
            raise RankDeficiencyError(1, 0)
        rank = int(np.searchsorted(energy / total, energy_tol) + 1)
        rank = min(rank, kmax, numerical_rank)
    elif rank > numerical_rank:
        raise RankDeficiencyError(rank, numerical_rank)

    return PodBasis(_flip_column_signs(U[:, :rank]), s)


def eim_select(basis):
    """Greedy interpolation-index selection on the basis columns.

    The first index maximizes ``|v_1|``;  index k maximizes the magnitude
    of the residual between ``v_k`` and its interpolation through the rows
    selected so far.  Ties resolve to the smallest row index.
    """
    V = basis.V if isinstance(basis, PodBasis) else np.asarray(basis, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n, m = V.shape

    indices = np.empty(m, dtype=int)
    indices[0] = int(np.argmax(np.abs(V[:, 0])))
    if V[indices[0], 0] == 0.0:
        raise DegenerateBasisError(1)
    for k in range(1, m):
        sel = indices[:k]
        c = np.linalg.solve(V[sel, :k], V[sel, k])
        r = V[:, k] - V[:, :k] @ c
        p = int(np.argmax(np.abs(r)))
        if r[p] == 0.0:
            raise DegenerateBasisError(k + 1)
        indices[k] = p

    ptv = V[indices, :]
    lu = scipy.linalg.lu_factor(ptv)
    if not np.all(np.isfinite(lu[0])):
        raise DegenerateBasisError(m)
    condition = float(np.linalg.cond(ptv))
    return EimSelection(indices=indices, ptv=ptv, lu=lu, condition=condition)


def eim_approximate(basis, sel, u_at_points):
    """Reconstruct a full state from its values at the selected rows.

    Accepts a length-m vector or an (m, k) stack of columns.  The result
    interpolates: rows ``sel.indices`` of the output equal ``u_at_points``.
    """
    u_at_points = np.asarray(u_at_points, dtype=float)
    if u_at_points.shape[0] != sel.m:
        raise DimensionError(
            f"expected {sel.m} interpolation values, got {u_at_points.shape[0]}"
        )
    V = basis.V if isinstance(basis, PodBasis) else basis
    return V[:, : sel.m] @ sel.solve(u_at_points)


def _l2_weight(coords):
    # Quadrature weight for the spatial L2 norm: the (uniform) grid spacing
    # when 1-d coordinates are available, otherwise a plain 2-norm.
    if coords is None or coords.ndim != 1 or len(coords) < 2:
        return 1.0
    spacing = np.diff(coords)
    if np.allclose(spacing, spacing[0]):
        return float(abs(spacing[0]))
    return 1.0


def trajectory_l2_errors(diff, dx=1.0):
    """Spatial L2 norm sqrt(dx * sum(d^2)) of each row of ``diff``."""
    diff = np.atleast_2d(diff)
    return np.sqrt(dx * np.sum(diff**2, axis=1))


def eim_error_curve(snapshots, reference, max_m):
    """EIM approximation error of a reference for every order 1..max_m.

    ``reference`` is a single state (length n) or a trajectory with one
    snapshot per row (shape (t, n)); trajectories are scored by the
    trapezoid-rule time average of the per-snapshot spatial L2 error.
    Returns a list of (m, error) pairs.

    Greedy selection extends previous selections one index at a time, so a
    single pass at ``max_m`` yields exactly the per-m indices that separate
    ``pod_basis``/``eim_select`` calls would.
    """
    if not isinstance(snapshots, SnapshotMatrix):
        snapshots = SnapshotMatrix(np.asarray(snapshots, dtype=float))
    max_m = int(max_m)
    if max_m > min(snapshots.n, snapshots.n_samples):
        raise DimensionError(
            f"max_m {max_m} exceeds min(n, N) = {min(snapshots.n, snapshots.n_samples)}"
        )

    ref = np.asarray(reference, dtype=float)
    ref2d = np.atleast_2d(ref)  # rows = snapshots
    if ref2d.shape[1] != snapshots.n:
        raise DimensionError(
            f"reference states have length {ref2d.shape[1]}, snapshots have {snapshots.n}"
        )
    dx = _l2_weight(snapshots.coords)

    basis = pod_basis(snapshots, rank=max_m)
    sel = eim_select(basis)

    curve = []
    for m in range(1, max_m + 1):
        Vm = basis.V[:, :m]
        idx = sel.indices[:m]
        approx = Vm @ np.linalg.solve(Vm[idx, :], ref2d[:, idx].T)
        errs = trajectory_l2_errors(ref2d - approx.T, dx)
        if len(errs) == 1:
            err = float(errs[0])
        else:
            err = float(np.trapezoid(errs) / (len(errs) - 1))
        curve.append((m, err))
    return curve
