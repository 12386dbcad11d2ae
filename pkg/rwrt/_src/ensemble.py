# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import functools
from typing import Any, Callable, List, Tuple, Union

import torch
from torch import Tensor
from torch.utils._pytree import tree_flatten, tree_unflatten, _broadcast_to_and_flatten

from .errors import ParameterError
from .streams import RandomStream

out_dims_t = Union[int, Tuple[int, ...]]


def _get_name(func: Callable):
    if hasattr(func, '__name__'):
        return func.__name__
    # functools.partial objects and other callables have no __name__
    return repr(func)


def _check_out_dims_is_int_or_int_pytree(out_dims: out_dims_t, func: Callable) -> None:
    if isinstance(out_dims, int):
        return
    flat, _ = tree_flatten(out_dims)
    for x in flat:
        if not isinstance(x, int):
            raise ParameterError(
                f'ensemble_map({_get_name(func)}, ..., out_dims={out_dims}): `out_dims` must be '
                f'an int or a python collection of ints representing where in the outputs the '
                f'replicate dimension should appear.')


def _stack_outputs(outputs: List[Any], out_dims: out_dims_t, func: Callable) -> Any:
    flat_first, output_spec = tree_flatten(outputs[0])
    flat_outputs = [flat_first]
    for out in outputs[1:]:
        flat, spec = tree_flatten(out)
        if spec != output_spec:
            raise ParameterError(
                f'ensemble_map({_get_name(func)}, ...): replicates returned outputs with '
                f'different structures: {output_spec} and {spec}.')
        flat_outputs.append(flat)

    for out in flat_first:
        if not isinstance(out, Tensor):
            raise ParameterError(
                f'ensemble_map({_get_name(func)}, ...): `{_get_name(func)}` must only return '
                f'Tensors, got type {type(out)} as a return.')

    if isinstance(outputs[0], Tensor):
        flat_out_dims = [out_dims] if isinstance(out_dims, int) else list(out_dims)
    else:
        flat_out_dims = _broadcast_to_and_flatten(out_dims, output_spec)
    if flat_out_dims is None or len(flat_out_dims) != len(flat_first):
        raise ParameterError(
            f'ensemble_map({_get_name(func)}, ..., out_dims={out_dims}): '
            f'out_dims is not compatible with the structure of `outputs`. '
            f'out_dims has structure {tree_flatten(out_dims)[1]} but outputs '
            f'has structure {output_spec}.')

    stacked = [
        torch.stack([flat[i] for flat in flat_outputs], dim=out_dim)
        for i, out_dim in enumerate(flat_out_dims)
    ]
    return tree_unflatten(stacked, output_spec)


def ensemble_map(func: Callable, out_dims: out_dims_t = 0, tag: str = 'replicate') -> Callable:
    """
    ensemble_map is the replicate map: ``ensemble_map(func)`` returns a function
    that runs :attr:`func` once per replicate, each time with its own child
    stream, and stacks the results.

    :attr:`func` must take a :class:`RandomStream` as its first argument and
    return a Tensor or a (nested) tuple/list/dict of Tensors. The returned
    function has the signature ``(stream, replicates, *args, **kwargs)``; the
    ``i``-th replicate receives ``stream.child(tag, i)``, so results do not
    depend on how many replicates are requested or in which order they run.

    Args:
        func (function): per-replicate function ``func(stream, *args, **kwargs)``.
        out_dims (int or nested structure): where the replicate dimension
            should appear in each output. Default: 0.
        tag (str): lineage tag used to derive the replicate streams.

        >>> def endpoint(stream, n):
        >>>     return gen_walk(CollectingSpec.simple(), n, stream).positions[-1]
        >>> ends = ensemble_map(endpoint)(RandomStream(0), 1000, 256)   # shape [1000]
    """
    @functools.wraps(func)
    def wrapped(stream: RandomStream, replicates: int, *args, **kwargs):
        _check_out_dims_is_int_or_int_pytree(out_dims, func)
        if replicates < 1:
            raise ParameterError(
                f'ensemble_map({_get_name(func)})(<inputs>): expected at least one replicate, '
                f'got {replicates}.')
        outputs = [func(stream.child(tag, i), *args, **kwargs) for i in range(replicates)]
        return _stack_outputs(outputs, out_dims, func)
    return wrapped
