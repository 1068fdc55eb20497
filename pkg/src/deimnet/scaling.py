"""Per-component min-max scaling of training data onto [0, 1].

Scale parameters are fit once on the training set and stored with the
surrogate so inputs and outputs use one consistent transform.  Components
with zero observed range map to the constant 0.5; unscaling such a
component returns the observed value, so round trips are exact either way.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lo and hi must be 1-D with equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("scale bounds must be finite")
        if np.any(hi < lo):
            raise ValueError("hi < lo in scale bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def fit(cls, values):
        """Fit bounds over axis 0; ``values`` is (n_samples, n_components)."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values.min(axis=0), values.max(axis=0))

    @property
    def n_components(self) -> int:
        return len(self.lo)

    def _span(self):
        return self.hi - self.lo

    def scale(self, values, components=None):
        """Map to [0,1] componentwise; constant components go to 0.5.

        ``components`` selects which stored bounds apply to each column,
        so stencil inputs can reuse the bounds of the points they read.
        """
        values = np.asarray(values, dtype=float)
        lo, span = self.lo, self._span()
        if components is not None:
            lo, span = lo[components], span[components]
        with np.errstate(invalid="ignore"):
            out = (values - lo) / span
        return np.where(span == 0, 0.5, out)

    def unscale(self, values, components=None):
        values = np.asarray(values, dtype=float)
        lo, span = self.lo, self._span()
        if components is not None:
            lo, span = lo[components], span[components]
        return np.where(span == 0, lo, lo + span * values)
