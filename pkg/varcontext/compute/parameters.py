"""Named trainable parameters and the store that owns them."""
from typing import Dict, Iterator, List, Optional, Tuple
import logging

import numpy as np

from varcontext.compute.tensor import Tensor
from varcontext.errors import DimensionError, ValidationError

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """A leaf tensor with a unique name and a gradient buffer of equal shape.

    Args:
        name (str): Unique path, e.g. ``"comprehension.phi.single.W"``.
        data (np.ndarray): Initial values.
        trainable (bool): Whether the optimizer updates it.
        decay (bool): Whether weight decay applies to it.
    """

    __slots__ = ("name", "trainable", "decay")

    def __init__(self, name: str, data: np.ndarray, trainable: bool = True, decay: bool = True):
        super().__init__(data, requires_grad=trainable, _op="parameter")
        self.name = name
        self.trainable = trainable
        self.decay = decay
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.data.shape:
            raise DimensionError(
                f"Parameter block '{self.name}' expects shape {self.data.shape}, got {values.shape}")
        self.data = values.copy()

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Uniform Xavier initialization from fan-in and fan-out."""
    fan_out, fan_in = shape[0], int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParameterStore:
    """Registry of every parameter of a model, keyed by unique name.

    All random initialization draws from one generator seeded by the run seed,
    so identical creation order and seed give identical parameters.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: Dict[str, Parameter] = {}

    def create(self, name: str, shape: Tuple[int, ...], init: str = "xavier",
               scale: float = 0.1, trainable: bool = True, decay: Optional[bool] = None) -> Parameter:
        """Create and register a parameter.

        Args:
            name (str): Unique name.
            shape (Tuple[int, ...]): Extents.
            init (str): "xavier", "zeros" or "uniform" (symmetric, bounded by `scale`).
            decay (bool, optional): Weight decay flag; defaults to False for biases.
        """
        if name in self._params:
            raise ValidationError(f"Duplicate parameter name '{name}'")
        if init == "xavier":
            values = xavier_uniform(self.rng, shape)
        elif init == "zeros":
            values = np.zeros(shape)
        elif init == "uniform":
            values = self.rng.uniform(-scale, scale, size=shape)
        else:
            raise ValueError(f"Unknown initializer '{init}'")
        if decay is None:
            decay = init != "zeros"
        param = Parameter(name, values, trainable=trainable, decay=decay)
        self._params[name] = param
        return param

    def linear(self, prefix: str, out_dim: int, in_dim: int) -> Tuple[Parameter, Parameter]:
        """Create the (W, b) pair of an fc layer."""
        W = self.create(f"{prefix}.W", (out_dim, in_dim), init="xavier")
        b = self.create(f"{prefix}.b", (out_dim,), init="zeros", decay=False)
        return W, b

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def trainable(self) -> List[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy values into the registered parameters.

        Raises:
            DimensionError: Naming the first block whose extents differ.
            ValidationError: When `strict` and block names differ.
        """
        if strict:
            missing = sorted(set(self._params) - set(state))
            unexpected = sorted(set(state) - set(self._params))
            if missing or unexpected:
                issues = [f"missing parameter block '{n}'" for n in missing]
                issues += [f"unexpected parameter block '{n}'" for n in unexpected]
                raise ValidationError("Checkpoint parameters do not match the model", issues)
        for name, values in state.items():
            if name in self._params:
                self._params[name].assign(values)
        logger.debug("Loaded %d parameter blocks", len(state))
