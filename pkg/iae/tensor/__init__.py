from iae.tensor.adam import AdamState, adam_step
from iae.tensor.tape import NONLINEARITIES, Op, Tape, Tensor

__all__ = ["AdamState", "adam_step", "NONLINEARITIES", "Op", "Tape", "Tensor"]
