"""Dense tensors with reverse-mode differentiation, Adam, and gradient checks."""
from . import functional
from . import kernels
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, grad_check
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, backward, get_default_dtype, resolve_dtype, set_default_dtype

__all__ = [
    "Adam", "AdamState", "Tensor", "adam_step", "backward", "check_gradients", "functional",
    "get_default_dtype", "grad_check", "kernels", "load_checkpoint", "resolve_dtype",
    "save_checkpoint", "set_default_dtype",
]
