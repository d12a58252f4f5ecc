"""
Experiment configuration: one JSON document per run.

Every section maps onto a dataclass; keys a section does not declare are
rejected with their dotted path. The resolved configuration (defaults filled
in, command-line overrides applied) is written next to the run's outputs and
is enough on its own to rerun the experiment.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from django.conf import settings
from django.core.exceptions import ValidationError

from ..diffusion import DiffusionSchedule, WeightingFn
from ..tensorgrad import ACTIVATIONS, SOFTPLUS
from ..training import TrainConfig
from .checkpoints import write_atomic
from .datasets import ToyDataset

RESOLVED_CONFIG_NAME = 'config.json'


@dataclass(frozen=True)
class NetConfig:
    hidden: List[int] = field(default_factory=lambda: [128, 128])
    activation: str = SOFTPLUS

    def __post_init__(self):
        if any(int(h) <= 0 for h in self.hidden):
            raise ValidationError(f"Hidden widths must be positive, got {self.hidden}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"Unknown activation '{self.activation}'")
        object.__setattr__(self, 'hidden', [int(h) for h in self.hidden])


@dataclass(frozen=True)
class GeneratorConfig:
    """
    How the student generator starts.

    ``tweedie`` builds it from the teacher at t* (``t_star``, or the time at
    which sigma(t) equals ``sigma_star``); ``mlp`` draws a fresh network;
    ``affine`` is mean + scale * z. With ``exact_score`` an affine student is
    paired with the exact score of its own output instead of a trained network.
    """

    TWEEDIE = 'tweedie'
    MLP = 'mlp'
    AFFINE = 'affine'
    INIT_CHOICES = (TWEEDIE, MLP, AFFINE)

    init: str = TWEEDIE
    sigma_star: float = 2.5
    t_star: Optional[float] = None
    hidden: List[int] = field(default_factory=lambda: [128, 128])
    activation: str = SOFTPLUS
    latent_dim: Optional[int] = None
    latent_sigma: float = 1.0
    mean: Optional[List[float]] = None
    scale: Optional[List[float]] = None
    exact_score: bool = False
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.init not in self.INIT_CHOICES:
            raise ValidationError(f"Unknown generator init '{self.init}' (expected one of {', '.join(self.INIT_CHOICES)})")
        if self.sigma_star <= 0 or self.latent_sigma <= 0:
            raise ValidationError("sigma_star and latent_sigma must be positive")
        if self.latent_dim is not None and self.latent_dim <= 0:
            raise ValidationError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"Unknown activation '{self.activation}'")


@dataclass(frozen=True)
class TeacherConfig:
    """A trained checkpoint, or the dataset's exact score."""

    CHECKPOINT = 'checkpoint'
    ANALYTIC = 'analytic'
    KIND_CHOICES = (CHECKPOINT, ANALYTIC)

    kind: str = CHECKPOINT
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.kind not in self.KIND_CHOICES:
            raise ValidationError(f"Unknown teacher kind '{self.kind}' (expected checkpoint or analytic)")


@dataclass(frozen=True)
class SdsConfig:
    init: List[float] = field(default_factory=lambda: [1.0])


@dataclass(frozen=True)
class OracleConfig:
    batch: int = 100000
    fd_step: float = 1e-4
    random_pairs: int = 1000

    def __post_init__(self):
        if self.batch < 100 or self.random_pairs < 1 or self.fd_step <= 0:
            raise ValidationError("oracle.batch must be at least 100, random_pairs positive and fd_step positive")


@dataclass(frozen=True)
class EvalConfig:
    samples: int = 2000

    def __post_init__(self):
        if self.samples < 2:
            raise ValidationError(f"eval.samples must be at least 2, got {self.samples}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = ''
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule)
    weighting: WeightingFn = field(default_factory=WeightingFn)
    dataset: ToyDataset = field(default_factory=ToyDataset)
    score_net: NetConfig = field(default_factory=NetConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sds: SdsConfig = field(default_factory=SdsConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.train.seed != self.seed:
            object.__setattr__(self, 'train', dataclasses.replace(self.train, seed=self.seed))

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Path(settings.INSTRUCT_OUTPUT_ROOT)

    def to_dict(self) -> dict:
        data = {'seed': self.seed, 'output_dir': str(self.output_path)}
        for section in SECTIONS:
            value = getattr(self, section)
            data[section] = value.to_dict() if hasattr(value, 'to_dict') else dataclasses.asdict(value)
        # the run seed lives at the top level only
        data['train'].pop('seed', None)
        return data


SECTIONS = {
    'schedule': DiffusionSchedule,
    'weighting': WeightingFn,
    'dataset': ToyDataset,
    'score_net': NetConfig,
    'generator': GeneratorConfig,
    'teacher': TeacherConfig,
    'train': TrainConfig,
    'sds': SdsConfig,
    'oracle': OracleConfig,
    'eval': EvalConfig,
}


def build_section(name: str, cls, data) -> object:
    if not isinstance(data, dict):
        raise ValidationError(f"Config section '{name}' must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    if name == 'train':
        known.discard('seed')
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"Unknown config key(s): {', '.join(f'{name}.{key}' for key in unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"Invalid '{name}' section: {exc}") from exc


def parse_config(data: dict, seed: Optional[int] = None, output_dir: Optional[str] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a parsed JSON document.

    Args:
        data: The document
        seed: Overrides the document's seed
        output_dir: Overrides the document's output directory
    """
    if not isinstance(data, dict):
        raise ValidationError("A config must be a JSON object")
    top_level = {'seed', 'output_dir', *SECTIONS}
    unknown = sorted(set(data) - top_level)
    if unknown:
        raise ValidationError(f"Unknown config key(s): {', '.join(unknown)}")

    sections = {name: build_section(name, cls, data[name]) for name, cls in SECTIONS.items() if name in data}
    resolved_seed = data.get('seed', getattr(settings, 'INSTRUCT_DEFAULT_SEED', 0)) if seed is None else seed
    if isinstance(resolved_seed, bool) or not isinstance(resolved_seed, int) or not 0 <= resolved_seed < 2 ** 64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {resolved_seed!r}")
    if 'train' in sections:
        sections['train'] = dataclasses.replace(sections['train'], seed=resolved_seed)
    return ExperimentConfig(
        seed=resolved_seed,
        output_dir=str(output_dir if output_dir is not None else data.get('output_dir', '')),
        **sections,
    )


def load_config(path=None, seed: Optional[int] = None, output_dir: Optional[str] = None) -> ExperimentConfig:
    """Read and parse a config file; with no path, every default applies."""
    if path is None:
        return parse_config({}, seed, output_dir)
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ValidationError(f"Cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, seed, output_dir)


def with_overrides(cfg: ExperimentConfig, **sections) -> ExperimentConfig:
    """Replace fields inside sections, e.g. with_overrides(cfg, teacher={'checkpoint': 'a.json'})."""
    updates = {}
    for name, values in sections.items():
        updates[name] = dataclasses.replace(getattr(cfg, name), **values)
    return dataclasses.replace(cfg, **updates)


def write_resolved_config(cfg: ExperimentConfig, directory=None) -> Path:
    directory = Path(directory) if directory is not None else cfg.output_path
    return write_atomic(directory / RESOLVED_CONFIG_NAME, json.dumps(cfg.to_dict(), indent=2) + '\n')
