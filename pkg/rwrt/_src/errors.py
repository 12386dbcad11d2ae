# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import contextlib
import textwrap
from typing import Callable, Iterator

# Each error also derives from the builtin raised for the same problem.


class RwrtError(Exception):
    exit_code = 3


class ParameterError(RwrtError, ValueError):
    exit_code = 2


class ConfigError(RwrtError, ValueError):
    exit_code = 2


class PathRangeError(RwrtError, IndexError):
    exit_code = 2


class TruncationError(RwrtError, RuntimeError):
    pass


class EstimationError(RwrtError, RuntimeError):
    pass


class UnsupportedError(RwrtError, NotImplementedError):
    exit_code = 2


class ResourceError(RwrtError, MemoryError):
    pass


class NumericError(RwrtError, ArithmeticError):
    pass


def check_alpha(fn_name: str, alpha: float, lower_open: float = 0.0) -> None:
    if not (lower_open < alpha <= 2.0):
        raise ParameterError(f'{fn_name}: expected alpha in ({lower_open:g}, 2], got {alpha}')


def check_hurst(fn_name: str, hurst: float) -> None:
    if not (0.0 < hurst < 1.0):
        raise ParameterError(f'{fn_name}: expected a Hurst index in (0, 1), got {hurst}')


def check_positive(fn_name: str, name: str, value: float) -> None:
    if not value > 0:
        raise ParameterError(f'{fn_name}: expected {name} > 0, got {value}')


# Attaches provenance to any exception raised inside the block, e.g.
#     with error_context(lambda: 'while running check stable_integral_law'):
#         ...
@contextlib.contextmanager
def error_context(msg_fn: Callable[[], str]) -> Iterator[None]:
    try:
        yield
    except Exception as e:
        msg = textwrap.indent(msg_fn(), '  ')
        msg = f'{e.args[0]}\n{msg}' if e.args else msg
        e.args = (msg,) + e.args[1:]
        raise
