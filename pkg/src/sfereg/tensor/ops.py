from collections.abc import Sequence

import numpy as np
from scipy.special import expit

from sfereg.errors import ShapeError
from sfereg.tensor.tensor import BackwardRule, Tensor, active_tape, is_recording


def _result(data: np.ndarray, inputs: Sequence[Tensor], rule: BackwardRule) -> Tensor:
    tracked = is_recording() and any(t.requires_grad for t in inputs)
    out = Tensor.wrap(np.asarray(data), requires_grad=tracked)
    if tracked:
        active_tape().record(inputs, out, rule)
    return out


def _spatial_out(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def conv3d(
    input: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    3-D cross-correlation of a [B, C_in, D, H, W] map with a [C_out, C_in, kd, kh, kw] kernel.

    Evaluated as one tensordot per kernel offset, so memory stays at one
    strided view of the input at a time.
    """
    if input.ndim != 5 or kernel.ndim != 5:
        raise ShapeError(
            f"conv3d expects 5-D input and kernel, got {input.shape} and {kernel.shape}"
        )
    if input.shape[1] != kernel.shape[1]:
        raise ShapeError(
            f"conv3d: input has {input.shape[1]} channels but kernel expects "
            f"{kernel.shape[1]} (input {input.shape}, kernel {kernel.shape})"
        )
    if bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv3d: bias {bias.shape} does not match {kernel.shape[0]} outputs")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv3d: invalid stride {stride} / padding {padding}")

    x, w = input.data, kernel.data
    _, _, d, h, wd = x.shape
    kd, kh, kw = w.shape[2:]
    if kd > d + 2 * padding or kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ShapeError(
            f"conv3d: kernel {w.shape[2:]} larger than padded input {x.shape[2:]} (padding {padding})"
        )
    od, oh, ow = (
        _spatial_out(d, kd, stride, padding),
        _spatial_out(h, kh, stride, padding),
        _spatial_out(wd, kw, stride, padding),
    )
    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding), (padding, padding))
    xp = np.pad(x, pad) if padding else x

    def window(a: int, b: int, c: int) -> tuple[slice, ...]:
        return (
            slice(None),
            slice(None),
            slice(a, a + stride * (od - 1) + 1, stride),
            slice(b, b + stride * (oh - 1) + 1, stride),
            slice(c, c + stride * (ow - 1) + 1, stride),
        )

    offsets = [(a, b, c) for a in range(kd) for b in range(kh) for c in range(kw)]
    acc = np.zeros((w.shape[0], x.shape[0], od, oh, ow), dtype=x.dtype)
    for a, b, c in offsets:
        acc += np.tensordot(w[:, :, a, b, c], xp[window(a, b, c)], axes=([1], [1]))
    out = acc.transpose(1, 0, 2, 3, 4) + bias.data[None, :, None, None, None]

    def rule(grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        g = grad.transpose(1, 0, 2, 3, 4)
        gw = np.zeros_like(w) if kernel.requires_grad else None
        gxp = np.zeros_like(xp) if input.requires_grad else None
        for a, b, c in offsets:
            if gw is not None:
                gw[:, :, a, b, c] = np.tensordot(
                    g, xp[window(a, b, c)], axes=([1, 2, 3, 4], [0, 2, 3, 4])
                )
            if gxp is not None:
                gxp[window(a, b, c)] += np.tensordot(
                    w[:, :, a, b, c], g, axes=([0], [0])
                ).transpose(1, 0, 2, 3, 4)
        gx = None
        if gxp is not None:
            gx = gxp[:, :, padding : padding + d, padding : padding + h, padding : padding + wd]
        gb = grad.sum(axis=(0, 2, 3, 4)) if bias.requires_grad else None
        return gx, gw, gb

    return _result(np.ascontiguousarray(out), [input, kernel, bias], rule)


def fully_connected(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if input.ndim != 2 or weight.ndim != 2 or input.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"fully_connected: input {input.shape} incompatible with weight {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"fully_connected: bias {bias.shape} does not match weight {weight.shape}")
    x, w = input.data, weight.data
    out = x @ w.T + bias.data

    def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return grad @ w, grad.T @ x, grad.sum(axis=0)

    return _result(out, [input, weight, bias], rule)


def global_avg_pool(input: Tensor) -> Tensor:
    if input.ndim != 5:
        raise ShapeError(f"global_avg_pool expects [B, C, D, H, W], got {input.shape}")
    spatial = input.shape[2:]
    count = int(np.prod(spatial))
    out = input.data.mean(axis=(2, 3, 4))

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        expanded = np.broadcast_to(grad[:, :, None, None, None] / count, input.shape)
        return (np.ascontiguousarray(expanded),)

    return _result(out, [input], rule)


def _broadcast_view(small: Tensor, big: Tensor) -> np.ndarray:
    """
    View of `small` that numpy can broadcast against the 5-D map `big`.

    Only two broadcasts exist: a channel vector ([C] or [B, C]) against a map,
    and a single-channel map [B, 1, D, H, W] against a C-channel map.
    """
    if small.shape == big.shape:
        return small.data
    if big.ndim == 5:
        b, c = big.shape[:2]
        if small.shape == (c,):
            return small.data.reshape(1, c, 1, 1, 1)
        if small.shape == (b, c):
            return small.data.reshape(b, c, 1, 1, 1)
        if small.shape == (b, 1, *big.shape[2:]):
            return small.data
    raise ShapeError(f"Cannot broadcast {small.shape} against {big.shape}")


def _reduce_to(grad: np.ndarray, view_shape: tuple[int, ...], shape: tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i, n in enumerate(view_shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_views(a: Tensor, b: Tensor) -> tuple[np.ndarray, np.ndarray]:
    if a.shape == b.shape:
        return a.data, b.data
    if a.ndim >= b.ndim and a.size >= b.size:
        return a.data, _broadcast_view(b, a)
    return _broadcast_view(a, b), b.data


def add(a: Tensor, b: Tensor) -> Tensor:
    av, bv = _binary_views(a, b)
    out = av + bv

    def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(grad, av.shape, a.shape), _reduce_to(grad, bv.shape, b.shape)

    return _result(out, [a, b], rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = _binary_views(a, b)
    out = av * bv

    def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (
            _reduce_to(grad * bv, av.shape, a.shape),
            _reduce_to(grad * av, bv.shape, b.shape),
        )

    return _result(out, [a, b], rule)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.data.dtype.type(factor)

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * factor,)

    return _result(out, [x], rule)


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * out * (1.0 - out),)

    return _result(out, [x], rule)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # maximum keeps NaN so a diverged batch still reaches the loss check
    out = np.maximum(x.data, 0).astype(x.dtype, copy=False)

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * mask,)

    return _result(out, [x], rule)


def concat_channels(first: Tensor, *rest: Tensor) -> Tensor:
    """Channel-wise concatenation; earlier tensors occupy the lower channel indices."""
    tensors = (first, *rest)
    for t in rest:
        if t.ndim != first.ndim or t.shape[:1] + t.shape[2:] != first.shape[:1] + first.shape[2:]:
            raise ShapeError(
                f"concat_channels: {t.shape} does not match {first.shape} outside the channel axis"
            )
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=1)

    def rule(grad: np.ndarray) -> list[np.ndarray]:
        return [grad[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors))]

    return _result(out, tensors, rule)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_channels: [{start}, {stop}) outside {x.shape[1]} channels")
    out = x.data[:, start:stop].copy()

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[:, start:stop] = grad
        return (full,)

    return _result(out, [x], rule)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad.reshape(x.shape),)

    return _result(out, [x], rule)


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def rule(grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.full_like(x.data, grad),)

    return _result(out, [x], rule)


def mean(x: Tensor) -> Tensor:
    return scale(sum(x), 1.0 / x.size)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error; the subgradient at a zero difference is 0."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(), dtype=pred.dtype)

    def rule(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = grad * np.sign(diff) / diff.size
        return g, -g

    return _result(out, [pred, target], rule)
