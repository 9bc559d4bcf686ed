"""Dense MLP with exact first- and second-order gradients.

Kernels come in two interchangeable flavors: a compiled Cython core and a
pure-numpy fallback, selected at import (see fairshift.nn.backend).
"""

from fairshift.nn.backend import (available_backends, get_backend,
                                  set_backend, use_backend)
from fairshift.nn.functional import (AdamState, Batch, EmptyGroupWarning,
                                     GradientError, TaskLossSpec, adam_step,
                                     forward, grad, hessian_vector_product,
                                     inner_adapt, loss_and_grad, meta_grad,
                                     meta_objective, predict, predict_proba,
                                     sgd_step, task_loss)
from fairshift.nn.params import ParamError, ParamSet, init_mlp, param_count

__all__ = [
    "AdamState", "Batch", "EmptyGroupWarning", "GradientError", "ParamError",
    "ParamSet", "TaskLossSpec", "adam_step", "available_backends", "forward",
    "get_backend", "grad", "hessian_vector_product", "init_mlp", "inner_adapt",
    "loss_and_grad", "meta_grad", "meta_objective", "param_count", "predict",
    "predict_proba", "set_backend", "sgd_step", "task_loss", "use_backend",
]
