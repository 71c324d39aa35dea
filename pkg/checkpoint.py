"""Checkpoint container.

Layout: magic (8 bytes) | version (uint32 LE) | header length (uint64 LE) |
JSON header | raw little-endian buffers, one per named tensor, in header order.
The header carries metadata plus [{name, shape, dtype}] for every tensor.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from errors import CheckpointError
from settings import CHECKPOINT_MAGIC, CHECKPOINT_VERSION

logger = logging.getLogger(__name__)

PREAMBLE = struct.Struct('<8sIQ')
DTYPES = {'float32': '<f4', 'float64': '<f8'}


@dataclass
class ModelState:
    params: dict  # name -> ndarray
    metadata: dict = field(default_factory=dict)
    # optional Adam moments: {'step': int, 'm': {name: ndarray}, 'v': {name: ndarray}}
    optimizer: dict = None

    def tensors(self):
        named = dict(self.params)
        if self.optimizer:
            for kind in ('m', 'v'):
                named.update({f'adam.{kind}.{k}': v for k, v in self.optimizer[kind].items()})
        return named


def to_bytes(state):
    tensors = state.tensors()
    entries = []
    for name, values in tensors.items():
        dtype = np.dtype(values.dtype).name
        if dtype not in DTYPES:
            raise CheckpointError(f'{name}: unsupported dtype {dtype}')
        entries.append({'name': name, 'shape': list(values.shape), 'dtype': dtype})
    header = {'metadata': state.metadata, 'tensors': entries}
    if state.optimizer:
        header['optimizer_step'] = state.optimizer['step']
    blob = json.dumps(header, sort_keys=True).encode('utf-8')
    chunks = [PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(blob)), blob]
    for entry in entries:
        chunks.append(np.ascontiguousarray(tensors[entry['name']], dtype=DTYPES[entry['dtype']]).tobytes())
    return b''.join(chunks)


def from_bytes(data):
    if len(data) < PREAMBLE.size:
        raise CheckpointError('checkpoint truncated before header')
    magic, version, length = PREAMBLE.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError('not a checkpoint file (bad magic)')
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f'unsupported checkpoint version {version}')
    start = PREAMBLE.size
    try:
        header = json.loads(data[start:start + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'corrupt checkpoint header: {e}') from e
    offset = start + length
    params, moments = {}, {'m': {}, 'v': {}}
    for entry in header['tensors']:
        dtype = np.dtype(DTYPES[entry['dtype']])
        count = int(np.prod(entry['shape'], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f'checkpoint truncated in tensor {entry["name"]}')
        values = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(entry['shape'])
        values = values.astype(dtype.newbyteorder('='), copy=True)
        offset += nbytes
        name = entry['name']
        if name.startswith('adam.'):
            _, kind, key = name.split('.', 2)
            moments[kind][key] = values
        else:
            params[name] = values
    optimizer = None
    if 'optimizer_step' in header:
        optimizer = {'step': header['optimizer_step'], **moments}
    return ModelState(params, header['metadata'], optimizer)


def save(state, path):
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    tmp = f'{path}.tmp'
    with open(tmp, 'wb') as f:
        f.write(to_bytes(state))
    os.replace(tmp, path)
    logger.debug('saved checkpoint %s (%d tensors)', path, len(state.params))


def load(path):
    with open(path, 'rb') as f:
        return from_bytes(f.read())
