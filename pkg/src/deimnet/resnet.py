"""Residual network forward map, regularized loss, and analytic gradients.

The network is an input layer, ``residual_blocks`` step-scaled residual
layers of constant width, and a bias-free linear output layer:

    f_1   = act(W_0 x + b_0)
    f_l+1 = f_l + step * act(W_l f_l + b_l)
    out   = W_last f_last

All batch operations take samples as rows.  Gradients are exact for the
implemented (smoothed) objective and are checked against finite
differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "Architecture",
    "ResNetParams",
    "LossConfig",
    "LabeledSet",
    "smoothed_relu",
    "smoothed_relu_deriv",
    "forward",
    "loss",
    "loss_gradient",
    "param_count",
    "flatten_params",
    "unflatten_params",
]


def smoothed_relu(x, eps):
    """ReLU with the corner replaced by a quadratic on [-eps, eps]."""
    x = np.asarray(x, dtype=float)
    quad = x * x / (4.0 * eps) + 0.5 * x + 0.25 * eps
    return np.where(np.abs(x) <= eps, quad, np.maximum(x, 0.0))


def smoothed_relu_deriv(x, eps):
    x = np.asarray(x, dtype=float)
    mid = x / (2.0 * eps) + 0.5
    return np.where(np.abs(x) <= eps, mid, (x > 0.0).astype(float))


def param_count(d, width, residual_blocks, d_star):
    """Trainable parameter count: input layer with bias, residual blocks
    with biases, bias-free output layer."""
    return (
        d * width
        + width
        + residual_blocks * (width * width + width)
        + width * d_star
    )


@dataclass(frozen=True)
class Architecture:
    """Layer shapes of one network unit."""

    d: int
    width: int
    residual_blocks: int
    d_star: int
    act_eps: float = 1e-2

    def __post_init__(self):
        if min(self.d, self.width, self.d_star) < 1 or self.residual_blocks < 0:
            raise ValueError(f"invalid architecture {self}")

    @property
    def n_layers(self):
        # number of weight matrices W_0 .. W_{L-1}
        return self.residual_blocks + 2

    @property
    def step_size(self):
        return 2.0 / self.n_layers

    @property
    def n_params(self):
        return param_count(self.d, self.width, self.residual_blocks, self.d_star)

    def weight_shapes(self):
        shapes = [(self.width, self.d)]
        shapes += [(self.width, self.width)] * self.residual_blocks
        shapes.append((self.d_star, self.width))
        return shapes


@dataclass
class ResNetParams:
    """Weight matrices, bias vectors (none for the final layer), residual
    step size and activation smoothing half-width."""

    weights: list
    biases: list
    step_size: float
    act_eps: float

    def __post_init__(self):
        if len(self.biases) != len(self.weights) - 1:
            raise DimensionError(
                f"{len(self.weights)} weight matrices need "
                f"{len(self.weights) - 1} bias vectors, got {len(self.biases)}"
            )
        for l in range(len(self.weights) - 1):
            rows = self.weights[l].shape[0]
            if self.biases[l].shape != (rows,):
                raise DimensionError(f"bias {l} does not match weight {l} rows")
            if self.weights[l + 1].shape[1] != rows:
                raise DimensionError(
                    f"weight {l + 1} expects {self.weights[l + 1].shape[1]} inputs, "
                    f"layer {l} produces {rows}"
                )
        if self.step_size <= 0 or self.act_eps <= 0:
            raise ValueError("step_size and act_eps must be positive")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def d(self):
        return self.weights[0].shape[1]

    @property
    def d_star(self):
        return self.weights[-1].shape[0]

    def copy(self):
        return ResNetParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.step_size,
            self.act_eps,
        )


@dataclass(frozen=True)
class LossConfig:
    """Weights of the loss terms.

    ``reg_weight`` scales the entrywise l1 + squared-l2 parameter
    regularizer; ``ordering_weight`` scales the squared hinge on
    decreasing consecutive bias entries.  The l1 terms use the smooth
    surrogate sqrt(x^2 + delta^2) - delta so the objective stays C^1.
    """

    reg_weight: float = 1e-7
    ordering_weight: float = 1000.0
    l1_delta: float = 1e-8

    def __post_init__(self):
        if self.reg_weight < 0 or self.ordering_weight < 0 or self.l1_delta <= 0:
            raise ValueError(f"invalid loss configuration {self}")


@dataclass
class LabeledSet:
    """Paired sample rows: inputs (N, d) and outputs (N, d_star)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.outputs.shape[0] != self.inputs.shape[0]:
            raise DimensionError(
                f"{self.inputs.shape[0]} input rows vs "
                f"{self.outputs.shape[0]} output rows"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.outputs))):
            raise ValueError("labeled set contains non-finite entries")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return LabeledSet(self.inputs[idx], self.outputs[idx])


def _forward_pass(params, X, keep_intermediates=False):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.d:
        raise DimensionError(
            f"input has {X.shape[1]} features, layer 0 expects {params.d}"
        )
    eps, step = params.act_eps, params.step_size
    W, b = params.weights, params.biases

    z0 = X @ W[0].T + b[0]
    f = smoothed_relu(z0, eps)
    states = [f]
    preacts = []
    for l in range(1, params.n_layers - 1):
        z = f @ W[l].T + b[l]
        f = f + step * smoothed_relu(z, eps)
        if keep_intermediates:
            preacts.append(z)
            states.append(f)
    out = f @ W[-1].T
    if keep_intermediates:
        return out, X, z0, preacts, states
    return out


def forward(params, xi):
    """Network output for a single input vector or a batch of row vectors."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        return _forward_pass(params, xi[None, :])[0]
    return _forward_pass(params, xi)


def _smooth_abs(x, delta):
    return np.sqrt(x * x + delta * delta) - delta


def _smooth_abs_deriv(x, delta):
    return x / np.sqrt(x * x + delta * delta)


def _ordering_violations(b):
    return np.minimum(b[1:] - b[:-1], 0.0)


def regularizer(params, cfg):
    """Parameter regularizer plus the bias-ordering penalty."""
    lam, gam, delta = cfg.reg_weight, cfg.ordering_weight, cfg.l1_delta
    total = 0.0
    if lam > 0:
        for W in params.weights:
            total += 0.5 * lam * (np.sum(_smooth_abs(W, delta)) + np.sum(W * W))
        for b in params.biases:
            total += 0.5 * lam * (np.sum(_smooth_abs(b, delta)) + np.sum(b * b))
    if gam > 0:
        for b in params.biases:
            v = _ordering_violations(b)
            total += 0.5 * gam * np.sum(v * v)
    return total


def ordering_penalty(params):
    """Sum of squared decreasing-bias violations (unweighted)."""
    return sum(float(np.sum(_ordering_violations(b) ** 2)) for b in params.biases)


def loss(params, cfg, data):
    """Mean squared misfit over the samples plus the regularizer."""
    out = _forward_pass(params, data.inputs)
    if out.shape[1] != data.outputs.shape[1]:
        raise DimensionError(
            f"network emits {out.shape[1]} outputs, targets have "
            f"{data.outputs.shape[1]}"
        )
    misfit = 0.5 * np.sum((out - data.outputs) ** 2) / len(data)
    return float(misfit + regularizer(params, cfg))


def loss_gradient(params, cfg, data):
    """Exact gradient of ``loss`` with respect to every weight and bias,
    returned in ResNetParams layout."""
    out, X, z0, preacts, states = _forward_pass(params, data.inputs, True)
    if out.shape[1] != data.outputs.shape[1]:
        raise DimensionError(
            f"network emits {out.shape[1]} outputs, targets have "
            f"{data.outputs.shape[1]}"
        )
    eps, step = params.act_eps, params.step_size
    W = params.weights
    L = params.n_layers
    lam, gam, delta = cfg.reg_weight, cfg.ordering_weight, cfg.l1_delta

    gW = [None] * L
    gb = [None] * (L - 1)

    g = (out - data.outputs) / len(data)
    gW[L - 1] = g.T @ states[L - 2]
    prop = g @ W[L - 1]
    for l in range(L - 2, 0, -1):
        a = step * smoothed_relu_deriv(preacts[l - 1], eps) * prop
        gW[l] = a.T @ states[l - 1]
        gb[l] = a.sum(axis=0)
        prop = prop + a @ W[l]
    a0 = smoothed_relu_deriv(z0, eps) * prop
    gW[0] = a0.T @ X
    gb[0] = a0.sum(axis=0)

    if lam > 0:
        for l in range(L):
            gW[l] += lam * (0.5 * _smooth_abs_deriv(W[l], delta) + W[l])
        for l in range(L - 1):
            b = params.biases[l]
            gb[l] += lam * (0.5 * _smooth_abs_deriv(b, delta) + b)
    if gam > 0:
        for l in range(L - 1):
            v = _ordering_violations(params.biases[l])
            gb[l][1:] += gam * v
            gb[l][:-1] -= gam * v

    return ResNetParams(gW, gb, step, eps)


def flatten_params(params):
    """Pack all weights and biases into one vector (layer order, biases
    after their weight matrix, final layer last)."""
    chunks = []
    for l in range(params.n_layers - 1):
        chunks.append(params.weights[l].ravel())
        chunks.append(params.biases[l])
    chunks.append(params.weights[-1].ravel())
    return np.concatenate(chunks)


def unflatten_params(vec, template):
    """Inverse of ``flatten_params`` for a network shaped like ``template``."""
    vec = np.asarray(vec, dtype=float)
    needed = sum(W.size for W in template.weights) + sum(
        b.size for b in template.biases
    )
    if vec.size != needed:
        raise DimensionError(
            f"vector has {vec.size} entries, template needs {needed}"
        )
    weights, biases = [], []
    pos = 0
    for l, W in enumerate(template.weights):
        weights.append(vec[pos : pos + W.size].reshape(W.shape))
        pos += W.size
        if l < len(template.biases):
            b = template.biases[l]
            biases.append(vec[pos : pos + b.size])
            pos += b.size
    return ResNetParams(weights, biases, template.step_size, template.act_eps)
