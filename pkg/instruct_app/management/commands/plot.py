from pathlib import Path

from instruct_app.nets import sample_generator
from instruct_app.utils.csv_generator import load_samples_csv
from instruct_app.utils.plotting import render_scatter
from instruct_app.utils.rng import spawn_streams

from ._base import LabCommand


class Command(LabCommand):
    help = 'Render 2-D samples (from a generator checkpoint or a samples CSV) as samples.svg'

    uses_generator = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--samples', type=str, help='Samples CSV to plot instead of a generator')

    def run(self, cfg, out, options):
        if options.get('samples'):
            samples = load_samples_csv(Path(options['samples']))
        else:
            samples = sample_generator(self.load_generator(cfg), spawn_streams(cfg.seed).eval, cfg.eval.samples)
        path = render_scatter(samples, out / 'samples.svg')
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(samples)} points to {path}'))
