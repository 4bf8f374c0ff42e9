import itertools
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, DTypeLike

from sfereg.errors import UsageError

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_dtype: ContextVar[np.dtype] = ContextVar("sfereg_dtype", default=np.dtype(np.float32))
_recording: ContextVar[bool] = ContextVar("sfereg_recording", default=True)
_tape: ContextVar["Tape | None"] = ContextVar("sfereg_tape", default=None)
_node_ids = itertools.count(1)


def default_dtype() -> np.dtype:
    return _dtype.get()


@contextmanager
def precision(dtype: DTypeLike) -> Iterator[None]:
    """Select the floating type new tensors are created with (float32 or float64)."""
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"Unsupported precision {resolved}, use float32 or float64")
    token = _dtype.set(resolved)
    try:
        yield
    finally:
        _dtype.reset(token)


@contextmanager
def no_grad() -> Iterator[None]:
    token = _recording.set(False)
    try:
        yield
    finally:
        _recording.reset(token)


def is_recording() -> bool:
    return _recording.get()


class Tensor:
    """
    Dense N-dimensional array that can take part in a recorded computation.

    Tensors that require gradients carry a node id; the tape keys gradients by it.
    5-D feature maps use the layout batch x channel x depth x height x width.
    """

    __slots__ = ("data", "requires_grad", "node")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: DTypeLike | None = None,
    ):
        self.data: np.ndarray = np.array(
            data, dtype=default_dtype() if dtype is None else dtype
        )
        self.requires_grad = requires_grad
        self.node: int | None = next(_node_ids) if requires_grad else None

    @classmethod
    def wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt an array produced by an op without copying it."""
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.node = next(_node_ids) if requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __add__(self, other: "Tensor") -> "Tensor":
        from sfereg.tensor import ops

        return ops.add(self, other)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        from sfereg.tensor import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"


@dataclass
class TapeEntry:
    inputs: tuple[int | None, ...]
    output: int
    backward: BackwardRule


class Gradients:
    """Gradient store keyed by tape node id, looked up by tensor."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def get(self, tensor: Tensor) -> np.ndarray | None:
        if tensor.node is None:
            return None
        return self._grads.get(tensor.node)

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self.get(tensor)
        if grad is None:
            raise KeyError(f"No gradient recorded for {tensor!r}")
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return self.get(tensor) is not None

    def __len__(self) -> int:
        return len(self._grads)


@dataclass
class Tape:
    """
    Ordered record of the operations executed while gradients are tracked.

    A tape has a single owner. Use it as a context manager to make it the
    active tape for the current thread or task.
    """

    entries: list[TapeEntry] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._token = _tape.set(self)
        return self

    def __exit__(self, *args) -> None:
        _tape.reset(self._token)

    def record(self, inputs: Sequence[Tensor], output: Tensor, rule: BackwardRule) -> None:
        assert output.node is not None
        self.entries.append(
            TapeEntry(tuple(t.node for t in inputs), output.node, rule)
        )

    def clear(self) -> None:
        self.entries.clear()

    def backward(self, loss: Tensor) -> Gradients:
        if loss.node is None:
            raise UsageError("backward() called on a tensor that does not track gradients")
        if loss.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        produced = set()
        for entry in reversed(self.entries):
            produced.add(entry.output)
            upstream = grads.pop(entry.output, None)
            if upstream is None:
                continue
            for node, grad in zip(entry.inputs, entry.backward(upstream)):
                if node is None or grad is None:
                    continue
                if node in grads:
                    grads[node] = grads[node] + grad
                else:
                    grads[node] = grad
        self.clear()
        return Gradients({k: v for k, v in grads.items() if k not in produced})


def active_tape() -> Tape:
    tape = _tape.get()
    if tape is None:
        tape = Tape()
        _tape.set(tape)
    return tape


def backward(loss: Tensor) -> Gradients:
    return active_tape().backward(loss)
