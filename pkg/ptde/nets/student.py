# Student network: local information -> message estimate, no sampling

from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor
from .agent import LocalInput, local_rows
from .layers import MLP, Module


class StudentNetwork(Module):
    """Two fully connected layers, local_dim -> hidden (relu) -> d_z."""

    def __init__(
        self, store: ParamStore, local_dim: int, d_z: int, rng: Rng, hidden: int = 64, prefix: str = "student"
    ):
        super().__init__(store, prefix)
        self.local_dim = local_dim
        self.d_z = d_z
        self.mlp = MLP(store, f"{prefix}.mlp", [local_dim, hidden, d_z], rng)

    def __call__(self, local: LocalInput) -> Tensor:
        return self.mlp(local_rows(local))


def student_forward(student: StudentNetwork, local: LocalInput) -> Tensor:
    """Message estimate z' for every row of ``local``."""
    return student(local)
