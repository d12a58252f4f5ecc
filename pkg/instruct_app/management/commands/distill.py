from instruct_app.analytic import GaussianScore, ikl_quadrature
from instruct_app.nets import pushforward_gaussian
from instruct_app.training import diff_instruct
from instruct_app.utils.checkpoints import save_checkpoint
from instruct_app.utils.rng import spawn_streams

from ._base import LabCommand


class Command(LabCommand):
    help = 'Distill a teacher into a one-step generator with Diff-Instruct'

    uses_teacher = True

    def initial_generator(self, cfg, teacher):
        return self.build_generator(cfg, teacher)

    def run(self, cfg, out, options):
        teacher = self.load_teacher(cfg)
        g0 = self.initial_generator(cfg, teacher)
        reference = cfg.dataset.sample(spawn_streams(cfg.seed).data, cfg.eval.samples)

        exact_ikl = None
        if cfg.generator.exact_score and isinstance(teacher, GaussianScore):
            def exact_ikl(g):
                return ikl_quadrature(pushforward_gaussian(g), teacher.family, cfg.schedule, cfg.weighting)

        last_path = out / 'generator_last.json'

        def checkpoint(g, iteration):
            save_checkpoint(g, last_path)
            self.stdout.write(f'Checkpoint at iteration {iteration}: {last_path}')

        self.stdout.write(f'Running Diff-Instruct for {cfg.train.iterations} iterations (seed {cfg.seed})')
        generator = diff_instruct(
            g0, teacher, cfg.train, cfg.schedule, cfg.weighting,
            phi_oracle=self.exact_score_oracle(cfg),
            phi_hidden=cfg.score_net.hidden,
            reference=reference,
            exact_ikl=exact_ikl,
            metrics_path=out / 'metrics.csv',
            checkpoint_fn=checkpoint,
        )
        path = save_checkpoint(generator, out / 'generator.json')
        self.stdout.write(self.style.SUCCESS(f'Saved generator checkpoint to {path}'))
