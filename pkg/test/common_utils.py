# This source code is licensed under the BSD-style license found in the
# LICENSE file in the root directory of this source tree.

import math
import os
import tempfile

import torch

from rwrt import CollectingSpec, RandomStream, SceneryField, gen_walk


def stream(seed=0, *tags):
    out = RandomStream(seed)
    for tag in tags:
        out = out.child(tag)
    return out


def simple_walks(n, batch=(), seed=0):
    return gen_walk(CollectingSpec.simple(), n, stream(seed, 'walks'), batch_shape=batch)


def gaussian_scenery(site='edge', seed=0, alpha=2.0):
    return SceneryField(alpha, 'gaussian', site, stream(seed, 'scenery'), block_size=64)


def within_stderr(value, target, stderr, k=3.0):
    return abs(value - target) <= k * stderr


def sample_stderr_of_variance(x):
    x = torch.as_tensor(x, dtype=torch.float64).reshape(-1)
    sq = (x - x.mean()) ** 2
    return (sq.std() / math.sqrt(x.numel())).item()


def write_config(text, directory=None):
    """Writes ``text`` to a YAML file and returns its path."""
    directory = directory or tempfile.mkdtemp()
    path = os.path.join(directory, 'config.yaml')
    with open(path, 'w') as f:
        f.write(text)
    return path
