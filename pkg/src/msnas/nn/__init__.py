from . import functional
from .gradcheck import finite_difference_check
from .optim import SGD, Adam, make_optimizer
from .tensor import (
    Parameter,
    Tensor,
    get_default_dtype,
    grad_enabled,
    no_grad,
    set_default_dtype,
    use_dtype,
)

__all__ = [
    "Adam",
    "Parameter",
    "SGD",
    "Tensor",
    "finite_difference_check",
    "functional",
    "get_default_dtype",
    "grad_enabled",
    "make_optimizer",
    "no_grad",
    "set_default_dtype",
    "use_dtype",
]
