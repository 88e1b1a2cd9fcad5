"""Loss, analytic gradients, L-BFGS and the greedy/joint training drivers."""

from .checks import GradCheckReport, grad_check
from .drivers import (TrainConfig, TrainLog, add_noise, greedy_train, joint_train,
                      training_cost)
from .lbfgs import LbfgsConfig, LbfgsResult, NonFiniteObjective, lbfgs_minimize
from .objective import (StageLayout, TrainSample, joint_cost_and_grad, layout_for, loss,
                        pack_stages, stage_input_grad, stage_param_grad, unpack_stages)

__all__ = [
    "GradCheckReport", "LbfgsConfig", "LbfgsResult", "NonFiniteObjective", "StageLayout",
    "TrainConfig", "TrainLog", "TrainSample", "add_noise", "grad_check", "greedy_train",
    "joint_cost_and_grad", "joint_train", "layout_for", "lbfgs_minimize", "loss",
    "pack_stages", "stage_input_grad", "stage_param_grad", "training_cost", "unpack_stages",
]
