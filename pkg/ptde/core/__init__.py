# Numeric core: tensors with reverse-mode autodiff, parameters, optimizer, rng, checkpoints

from . import functional
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .functional import forward_op
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, optimizer_step
from .params import ParamStore
from .rng import Rng
from .tensor import Tensor, as_tensor, no_grad, set_debug

__all__ = [
    "Adam",
    "Checkpoint",
    "GradCheckReport",
    "ParamStore",
    "Rng",
    "Tensor",
    "as_tensor",
    "forward_op",
    "functional",
    "grad_check",
    "load_checkpoint",
    "no_grad",
    "optimizer_step",
    "save_checkpoint",
    "set_debug",
]
