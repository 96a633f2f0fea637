"""
Binary checkpoint container.

    magic (8 bytes) | version <I | header length <Q | JSON header | payload

The header records the renderer config, instance count, every tensor's name, shape, dtype,
payload offset and size, the payload's SHA-256 and the training state. The payload holds the
raw little-endian tensor bytes back to back.
"""
import hashlib
import json
import logging
from pathlib import Path
from struct import calcsize, pack, unpack

import numpy as np

from srnpose.constants.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, SIDECAR_VERSION
from srnpose.constants.messages import ErrorMessages, RunMessages
from srnpose.diffcore import AdamState
from srnpose.errors import CheckpointError, CheckpointVersionError
from srnpose.renderer.config import SigmaSrnConfig
from srnpose.renderer.model import SigmaSrnModel
from srnpose.renderer.train import TrainState

logger = logging.getLogger(__name__)

FORMAT_MAP = {
    '<I': calcsize('<I'),
    '<Q': calcsize('<Q'),
}
FIRST_MOMENT = 'adam.m.'
SECOND_MOMENT = 'adam.v.'


def _little_endian(value: np.ndarray) -> np.ndarray:
    value = np.ascontiguousarray(value)
    return value.astype(value.dtype.newbyteorder('<'), copy=False)


def _pack_tensors(tensors: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    index, chunks, offset = [], [], 0
    for name, value in tensors.items():
        raw = _little_endian(value).tobytes()
        index.append({'name': name, 'shape': list(value.shape), 'dtype': _little_endian(value).dtype.str,
                      'offset': offset, 'nbytes': len(raw)})
        chunks.append(raw)
        offset += len(raw)
    return index, b''.join(chunks)


def save_checkpoint(model: SigmaSrnModel, path, state: TrainState | None = None) -> Path:
    """
    Write model parameters (and optionally the training state) to `path`.
    Parameters round-trip bit-exact.
    """
    path = Path(path)
    tensors = dict(model.params)
    train_state = None
    if state is not None:
        train_state = {'step_count': state.step_count, 'epochs_done': state.epochs_done}
        if state.optimizer is not None:
            optimizer = state.optimizer
            train_state['optimizer'] = {'lr': optimizer.lr, 'beta1': optimizer.beta1, 'beta2': optimizer.beta2,
                                        'eps': optimizer.eps, 'step_count': optimizer.step_count}
            for name, value in optimizer.first_moment.items():
                tensors[FIRST_MOMENT + name] = value
            for name, value in optimizer.second_moment.items():
                tensors[SECOND_MOMENT + name] = value

    index, payload = _pack_tensors(tensors)
    header = json.dumps({
        'config': model.config.to_dict(),
        'instance_count': model.num_instances,
        'tensors': index,
        'payload_sha256': hashlib.sha256(payload).hexdigest(),
        'train_state': train_state,
    }, sort_keys=True).encode()

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(pack('<I', CHECKPOINT_VERSION))
        handle.write(pack('<Q', len(header)))
        handle.write(header)
        handle.write(payload)
    logger.info(RunMessages.CHECKPOINT_WRITTEN.format(path=path, step=state.step_count if state else 0))
    return path


def _take(data: bytes, offset: int, size: int, path: Path, what: str) -> bytes:
    if offset + size > len(data): raise CheckpointError(ErrorMessages.TRUNCATED.format(path=path, reason=what))
    return data[offset:offset + size]


def load_checkpoint(path) -> tuple[SigmaSrnModel, TrainState]:
    """
    Read a checkpoint written by save_checkpoint.
    :return: (model, training state); the state is empty for checkpoints saved without one
    :raises CheckpointVersionError: on a different format version
    :raises CheckpointError: on a bad magic, a truncated file, a malformed header or a payload
                             digest mismatch; nothing is constructed in that case
    """
    path = Path(path)
    if not path.is_file(): raise CheckpointError(ErrorMessages.MISSING_FILE.format(path=path))
    data = path.read_bytes()
    magic = _take(data, 0, len(CHECKPOINT_MAGIC), path, 'magic')
    if magic != CHECKPOINT_MAGIC: raise CheckpointError(ErrorMessages.BAD_MAGIC.format(path=path))
    offset = len(CHECKPOINT_MAGIC)
    (version,) = unpack('<I', _take(data, offset, FORMAT_MAP['<I'], path, 'version'))
    offset += FORMAT_MAP['<I']
    if version != CHECKPOINT_VERSION: raise CheckpointVersionError(
        ErrorMessages.BAD_VERSION.format(path=path, found=version, expected=CHECKPOINT_VERSION),
        version, CHECKPOINT_VERSION)
    (header_size,) = unpack('<Q', _take(data, offset, FORMAT_MAP['<Q'], path, 'header length'))
    offset += FORMAT_MAP['<Q']
    try:
        header = json.loads(_take(data, offset, header_size, path, 'header'))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(ErrorMessages.TRUNCATED.format(path=path, reason='header'))
    offset += header_size
    try:
        return _restore(header, data[offset:], path)
    except KeyError as e:
        raise CheckpointError(ErrorMessages.BAD_HEADER.format(path=path, reason=f"missing {e}"))
    except TypeError as e:
        raise CheckpointError(ErrorMessages.BAD_HEADER.format(path=path, reason=e))


def _restore(header: dict, payload: bytes, path: Path) -> tuple[SigmaSrnModel, TrainState]:
    expected_size = sum(entry['nbytes'] for entry in header['tensors'])
    if len(payload) < expected_size: raise CheckpointError(
        ErrorMessages.TRUNCATED.format(path=path, reason=f"payload has {len(payload)} of {expected_size} bytes"))
    if hashlib.sha256(payload).hexdigest() != header['payload_sha256']: raise CheckpointError(
        ErrorMessages.DIGEST_MISMATCH.format(path=path))

    tensors = {}
    for entry in header['tensors']:
        raw = payload[entry['offset']:entry['offset'] + entry['nbytes']]
        tensors[entry['name']] = np.frombuffer(raw, dtype=np.dtype(entry['dtype'])).reshape(entry['shape']).copy()

    params = {name: value for name, value in tensors.items() if not name.startswith((FIRST_MOMENT, SECOND_MOMENT))}
    model = SigmaSrnModel(SigmaSrnConfig.from_dict(header['config']), params, header['instance_count'])

    state = TrainState()
    saved = header.get('train_state')
    if saved:
        state.step_count = saved['step_count']
        state.epochs_done = saved['epochs_done']
        if saved.get('optimizer'):
            options = saved['optimizer']
            state.optimizer = AdamState(lr=options['lr'], beta1=options['beta1'], beta2=options['beta2'],
                                        eps=options['eps'], step_count=options['step_count'])
            for name, value in tensors.items():
                if name.startswith(FIRST_MOMENT):
                    state.optimizer.first_moment[name[len(FIRST_MOMENT):]] = value
                elif name.startswith(SECOND_MOMENT):
                    state.optimizer.second_moment[name[len(SECOND_MOMENT):]] = value
    return model, state


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_sidecar(path, base_digest: str, embedding: np.ndarray, history: list[float] | None = None) -> Path:
    """Adapted embedding, tied to the base model by its parameter digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({
        'version': SIDECAR_VERSION,
        'base_digest': base_digest,
        'embedding': [float(v) for v in np.asarray(embedding, dtype=np.float64).reshape(-1)],
        'fit_loss_history': list(history or []),
    }, indent=2))
    return path


def load_sidecar(path, base_digest: str | None = None) -> tuple[np.ndarray, list[float]]:
    """
    :param base_digest: when given, must equal the digest recorded in the sidecar
    :return: (embedding, fit loss history)
    """
    path = Path(path)
    if not path.is_file(): raise CheckpointError(ErrorMessages.MISSING_FILE.format(path=path))
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: line {e.lineno}: {e.msg}")
    if record.get('version') != SIDECAR_VERSION: raise CheckpointVersionError(
        ErrorMessages.BAD_VERSION.format(path=path, found=record.get('version'), expected=SIDECAR_VERSION),
        record.get('version'), SIDECAR_VERSION)
    if base_digest is not None and record['base_digest'] != base_digest: raise CheckpointError(
        ErrorMessages.SIDECAR_BASE.format(path=path, expected=record['base_digest'], found=base_digest))
    return np.array(record['embedding'], dtype=np.float64), list(record.get('fit_loss_history', []))
