"""
Shared plumbing for the lab's management commands.
"""

import json
from pathlib import Path
from typing import List

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from instruct_app.analytic import GaussianScore
from instruct_app.diffusion import sigma_to_time
from instruct_app.exceptions import CheckpointError, DivergenceError, ShapeMismatchError, TimeWindowError
from instruct_app.nets import Generator, affine_generator, init_generator_from_teacher, pushforward_gaussian
from instruct_app.tensorgrad import MlpNet
from instruct_app.utils.checkpoints import ROLE_GENERATOR, ROLE_SCORE, load_checkpoint
from instruct_app.utils.config import (ExperimentConfig, GeneratorConfig, TeacherConfig, build_section,
                                         load_config, with_overrides, write_resolved_config)
from instruct_app.utils.datasets import ToyDataset
from instruct_app.utils.rng import spawn_streams

USAGE_ERRORS = (ValidationError, CheckpointError, ShapeMismatchError, TimeWindowError, ValueError, OSError)


def _error_text(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return '; '.join(exc.messages)
    return str(exc)


class LabCommand(BaseCommand):
    """
    A command that reads an experiment config, writes the resolved config to
    its output directory and maps library errors onto exit codes
    (1 for usage, config and checkpoint problems, 2 for divergence).
    """

    uses_teacher = False
    uses_generator = False
    writes_outputs = True

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, help='Experiment config JSON')
        parser.add_argument('--out', type=str, help='Output directory (overrides output_dir)')
        parser.add_argument('--seed', type=int, help='Run seed (overrides the config)')
        if self.uses_teacher:
            parser.add_argument('--teacher', type=str, help='Teacher score checkpoint')
        if self.uses_generator:
            parser.add_argument('--generator', type=str, help='Generator checkpoint')

    def handle(self, *args, **options):
        try:
            cfg = load_config(options.get('config'), seed=options.get('seed'), output_dir=options.get('out'))
            if options.get('teacher'):
                cfg = with_overrides(cfg, teacher={'kind': TeacherConfig.CHECKPOINT,
                                                   'checkpoint': options['teacher']})
            if options.get('generator'):
                cfg = with_overrides(cfg, generator={'checkpoint': options['generator']})
            out = cfg.output_path
            if self.writes_outputs:
                out.mkdir(parents=True, exist_ok=True)
                write_resolved_config(cfg, out)
            self.run(cfg, out, options)
        except DivergenceError as exc:
            raise CommandError(f'Training diverged: {exc}', returncode=2) from exc
        except USAGE_ERRORS as exc:
            raise CommandError(_error_text(exc), returncode=1) from exc

    def run(self, cfg: ExperimentConfig, out: Path, options: dict) -> None:
        raise NotImplementedError

    # Helpers shared by several commands

    def load_teacher(self, cfg: ExperimentConfig):
        """The trained teacher checkpoint, or the dataset's exact score."""
        if cfg.teacher.kind == TeacherConfig.ANALYTIC:
            teacher = cfg.dataset.analytic_teacher(cfg.schedule)
            if teacher is None:
                raise ValidationError(f"Dataset '{cfg.dataset.kind}' has no analytic score; train a teacher")
            return teacher
        if not cfg.teacher.checkpoint:
            raise ValidationError('A teacher checkpoint is required (--teacher or teacher.checkpoint)')
        dim = cfg.dataset.dim
        return load_checkpoint(cfg.teacher.checkpoint, role=ROLE_SCORE,
                               layer_sizes=[dim + 1, *cfg.score_net.hidden, dim])

    def load_generator(self, cfg: ExperimentConfig) -> Generator:
        if not cfg.generator.checkpoint:
            raise ValidationError('A generator checkpoint is required (--generator or generator.checkpoint)')
        return load_checkpoint(cfg.generator.checkpoint, role=ROLE_GENERATOR,
                               layer_sizes=generator_layer_sizes(cfg))

    def build_generator(self, cfg: ExperimentConfig, teacher) -> Generator:
        """The initial student described by the config's generator section."""
        gen_cfg = cfg.generator
        dim = teacher.data_dim
        init_rng = spawn_streams(cfg.seed).init
        if gen_cfg.init == GeneratorConfig.TWEEDIE:
            t_star = gen_cfg.t_star if gen_cfg.t_star is not None else sigma_to_time(cfg.schedule, gen_cfg.sigma_star)
            return init_generator_from_teacher(teacher, cfg.schedule, t_star, rng=init_rng,
                                               correction_hidden=gen_cfg.hidden)
        if gen_cfg.init == GeneratorConfig.AFFINE:
            mean = gen_cfg.mean if gen_cfg.mean is not None else [0.0] * dim
            scale = gen_cfg.scale if gen_cfg.scale is not None else [1.0] * dim
            if len(mean) != dim or len(scale) != dim:
                raise ShapeMismatchError(f"Affine generator mean/scale of length {len(mean)}/{len(scale)} "
                                         f"for {dim}-dimensional data")
            return affine_generator(mean, scale, gen_cfg.latent_sigma)
        latent_dim = gen_cfg.latent_dim or dim
        net = MlpNet.initialize([latent_dim, *gen_cfg.hidden, dim], init_rng, gen_cfg.activation)
        return Generator(net, latent_dim, gen_cfg.latent_sigma, dim)

    def exact_score_oracle(self, cfg: ExperimentConfig):
        """Exact diffused score of an affine student's output, if the config asks for it."""
        if not cfg.generator.exact_score:
            return None
        return lambda g: GaussianScore(pushforward_gaussian(g), cfg.schedule)


def generator_layer_sizes(cfg: ExperimentConfig) -> List[int]:
    """Network shape of a generator built from ``cfg``, as stored in its checkpoint."""
    gen_cfg = cfg.generator
    dim = cfg.dataset.dim
    if gen_cfg.init == GeneratorConfig.AFFINE:
        return [dim, dim]
    if gen_cfg.init == GeneratorConfig.TWEEDIE:
        if cfg.teacher.kind == TeacherConfig.ANALYTIC:
            return [dim, *gen_cfg.hidden, dim]
        # unrolled copy of the teacher network
        return [dim + 1, *cfg.score_net.hidden, dim]
    return [gen_cfg.latent_dim or dim, *gen_cfg.hidden, dim]


def read_dataset_file(path) -> ToyDataset:
    """A dataset from a JSON file holding either a bare dataset object or a config with a dataset section."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except OSError as exc:
        raise ValidationError(f"Cannot read dataset file {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must hold a JSON object")
    if 'dataset' in data:
        return load_config(path).dataset
    return build_section('dataset', ToyDataset, data)

