"""Train small parallel ResNet surrogates on empirical-interpolation-reduced
data: POD + greedy index selection, per-class / per-point networks, and
evaluation on classification, parameter-to-solution, and time-stepping tasks.
"""

from .reduction import (
    EimSelection,
    PodBasis,
    SnapshotMatrix,
    eim_approximate,
    eim_error_curve,
    eim_select,
    pod_basis,
)
from .resnet import (
    Architecture,
    LabeledSet,
    LossConfig,
    ResNetParams,
    forward,
    loss,
    loss_gradient,
    param_count,
    smoothed_relu,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    bfgs_minimize,
    box_init,
    train_parallel,
    train_unit,
)

__version__ = "0.1.0"
