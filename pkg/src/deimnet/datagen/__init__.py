from .ks import (
    KsConfig,
    ks_reference,
    ks_solve,
    ks_trajectory_ensemble,
    ks_training_set,
    random_initial_conditions,
    reference_initial_condition,
)
from .mnist import MnistSet, class_subsets, mnist_load, mnist_split
from .rd import RdConfig, rd_reference, rd_solve, rd_training_set, theta_grid

__all__ = [
    "KsConfig",
    "ks_reference",
    "ks_solve",
    "ks_trajectory_ensemble",
    "ks_training_set",
    "random_initial_conditions",
    "reference_initial_condition",
    "MnistSet",
    "class_subsets",
    "mnist_load",
    "mnist_split",
    "RdConfig",
    "rd_reference",
    "rd_solve",
    "rd_training_set",
    "theta_grid",
]
