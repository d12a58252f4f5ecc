"""
JSON checkpoints for score networks and generators.

Floats are written with Python's shortest round-trip representation, so
load_checkpoint(save_checkpoint(x)) reproduces every parameter bit for bit.
Files are written to a temporary sibling and renamed into place.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..analytic import GaussianFamily, GaussianScore, MixtureScore
from ..diffusion import DiffusionSchedule
from ..exceptions import CheckpointError, ShapeMismatchError
from ..nets import Generator, ScoreNet, TweedieHead
from ..tensorgrad import MlpNet

logger = logging.getLogger(__name__)

FORMAT = 'diff-instruct-lab/checkpoint'
VERSION = 1
ROLE_SCORE = 'score'
ROLE_GENERATOR = 'generator'
ROLE_CHOICES = (ROLE_SCORE, ROLE_GENERATOR)

Model = Union[ScoreNet, Generator]


def write_atomic(path, text: str) -> Path:
    """Write text to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def _schedule_from_dict(data: dict) -> DiffusionSchedule:
    return DiffusionSchedule(**data)


def anchor_to_dict(anchor) -> dict:
    if isinstance(anchor, GaussianScore):
        return {
            'kind': 'gaussian',
            'mean': [float(v) for v in anchor.family.mean],
            'var': [float(v) for v in anchor.family.var],
            'schedule': anchor.sched.to_dict(),
        }
    if isinstance(anchor, MixtureScore):
        return {
            'kind': 'mixture',
            'means': [[float(v) for v in row] for row in anchor.means],
            'var': float(anchor.var),
            'weights': [float(v) for v in anchor.weights],
            'schedule': anchor.sched.to_dict(),
        }
    raise CheckpointError(f"Cannot serialize a frozen teacher of type {type(anchor).__name__}")


def anchor_from_dict(data: dict):
    sched = _schedule_from_dict(data['schedule'])
    if data['kind'] == 'gaussian':
        return GaussianScore(GaussianFamily(data['mean'], data['var']), sched)
    if data['kind'] == 'mixture':
        return MixtureScore(np.array(data['means']), data['var'], sched, np.array(data['weights']))
    raise CheckpointError(f"Unknown frozen teacher kind '{data['kind']}'")


def checkpoint_to_dict(model: Model) -> dict:
    data = {'format': FORMAT, 'version': VERSION}
    if isinstance(model, ScoreNet):
        data.update({'role': ROLE_SCORE, 'data_dim': model.data_dim, 'latent_dim': None,
                     'latent_sigma': None, 't_star': None, 'tweedie': None})
    elif isinstance(model, Generator):
        head = model.tweedie
        data.update({
            'role': ROLE_GENERATOR,
            'data_dim': model.data_dim,
            'latent_dim': model.latent_dim,
            'latent_sigma': float(model.latent_sigma),
            't_star': None if head is None else head.t_star,
            'tweedie': None if head is None else {
                'scale': head.scale,
                'alpha': head.alpha,
                'anchor': None if head.anchor is None else anchor_to_dict(head.anchor),
            },
        })
    else:
        raise CheckpointError(f"Cannot checkpoint an object of type {type(model).__name__}")
    data.update(model.net.to_dict())
    return data


def checkpoint_from_dict(data: dict) -> Model:
    if data.get('format') != FORMAT:
        raise CheckpointError(f"Not a checkpoint file (format {data.get('format')!r})")
    try:
        net = MlpNet.from_dict(data)
        if data['role'] == ROLE_SCORE:
            return ScoreNet(net, data['data_dim'])
        if data['role'] == ROLE_GENERATOR:
            head = None
            if data['tweedie'] is not None:
                anchor = data['tweedie']['anchor']
                head = TweedieHead(data['t_star'], data['tweedie']['scale'], data['tweedie']['alpha'],
                                   None if anchor is None else anchor_from_dict(anchor))
            return Generator(net, data['latent_dim'], data['latent_sigma'], data['data_dim'], head)
    except KeyError as exc:
        raise CheckpointError(f"Checkpoint is missing field {exc}") from exc
    raise CheckpointError(f"Unknown checkpoint role {data.get('role')!r} (expected score or generator)")


def save_checkpoint(model: Model, path) -> Path:
    path = write_atomic(path, json.dumps(checkpoint_to_dict(model), indent=2) + '\n')
    logger.info("Saved %s checkpoint to %s", 'score' if isinstance(model, ScoreNet) else 'generator', path)
    return path


def load_checkpoint(path, role: Optional[str] = None,
                    layer_sizes: Optional[Sequence[int]] = None) -> Model:
    """
    Read a checkpoint.

    Args:
        path: Checkpoint file
        role: Required role ('score' or 'generator'), if any
        layer_sizes: Layer sizes the caller expects, if any

    Raises:
        CheckpointError: Missing, malformed or truncated file, or wrong role
        ShapeMismatchError: Layer sizes differ from ``layer_sizes``
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1].strip() if 0 < exc.lineno <= len(lines) else '<end of file>'
        raise CheckpointError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg} (near: {context[:60]!r})"
        ) from exc
    if not isinstance(data, dict):
        raise CheckpointError(f"{path}: expected a JSON object at the top level")

    model = checkpoint_from_dict(data)
    actual_role = ROLE_SCORE if isinstance(model, ScoreNet) else ROLE_GENERATOR
    if role is not None and role != actual_role:
        raise CheckpointError(f"{path} holds a {actual_role} checkpoint, expected {role}")
    if layer_sizes is not None and tuple(layer_sizes) != model.net.layer_sizes:
        raise ShapeMismatchError(
            f"{path} has layer_sizes {list(model.net.layer_sizes)} but the config expects {list(layer_sizes)}"
        )
    return model
