from instruct_app.nets import sample_generator
from instruct_app.utils.energy import energy_distance
from instruct_app.utils.rng import spawn_streams

from ._base import LabCommand, read_dataset_file


class Command(LabCommand):
    help = 'Print the energy distance between generator samples and data, with a data-vs-data baseline'

    uses_generator = True
    writes_outputs = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--dataset', type=str, help='Dataset JSON (a dataset object or a config)')

    def run(self, cfg, out, options):
        generator = self.load_generator(cfg)
        dataset = read_dataset_file(options['dataset']) if options.get('dataset') else cfg.dataset
        if dataset.dim != generator.data_dim:
            raise ValueError(f'Generator of dimension {generator.data_dim} for {dataset.dim}-dimensional data')

        streams = spawn_streams(cfg.seed)
        n = cfg.eval.samples
        data = dataset.sample(streams.data, n)
        distance = energy_distance(sample_generator(generator, streams.eval, n), data)
        baseline = energy_distance(dataset.sample(streams.data, n), data)
        self.stderr.write('energy_distance,baseline', style_func=str)
        self.stdout.write(f'{distance!r},{baseline!r}')
