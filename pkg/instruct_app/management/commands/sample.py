from instruct_app.nets import sample_generator
from instruct_app.utils.csv_generator import save_samples_csv
from instruct_app.utils.rng import spawn_streams

from ._base import LabCommand


class Command(LabCommand):
    help = 'Draw samples from a generator checkpoint into samples.csv'

    uses_generator = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--n', type=int, help='Number of samples (default: eval.samples)')

    def run(self, cfg, out, options):
        generator = self.load_generator(cfg)
        n = options.get('n') or cfg.eval.samples
        if n < 1:
            raise ValueError(f'--n must be positive, got {n}')
        samples = sample_generator(generator, spawn_streams(cfg.seed).eval, n)
        path = save_samples_csv(samples, out / 'samples.csv')
        self.stdout.write(self.style.SUCCESS(f'Wrote {n} samples to {path}'))
