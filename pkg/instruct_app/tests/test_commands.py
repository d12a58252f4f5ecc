import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from instruct_app.cli import cli
from instruct_app.nets import Generator, ScoreNet
from instruct_app.utils.checkpoints import load_checkpoint
from instruct_app.utils.csv_generator import load_samples_csv, read_metrics_csv, save_samples_csv

GAUSSIAN_RUN = {
    'seed': 3,
    'dataset': {'kind': 'gaussian', 'mean': [0.5], 'std': 1.0},
    'schedule': {'kind': 'VE', 't_min': 0.001, 'T': 10.0},
    'score_net': {'hidden': [8]},
    'generator': {'hidden': [8]},
    'train': {'iterations': 4, 'batch_size': 16, 'log_every': 2, 'eval_samples': 50},
    'eval': {'samples': 50},
}


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, name='config.json', **sections):
        data = json.loads(json.dumps(GAUSSIAN_RUN))
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        path = self.dir / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)

    def call(self, name, stderr=None, **options):
        out = StringIO()
        call_command(name, stdout=out, stderr=stderr or StringIO(), **options)
        return out.getvalue()


class TrainingCommandTests(CommandTestCase):

    def test_train_teacher_writes_checkpoint_metrics_and_config(self):
        out = self.dir / 'teacher'
        output = self.call('train_teacher', config=self.write_config(), out=str(out))
        self.assertIn('Saved teacher checkpoint', output)
        self.assertIsInstance(load_checkpoint(out / 'teacher.json'), ScoreNet)
        self.assertEqual([row['iteration'] for row in read_metrics_csv(out / 'metrics.csv')], ['2', '4'])
        resolved = json.loads((out / 'config.json').read_text(encoding='utf-8'))
        self.assertEqual(resolved['seed'], 3)
        self.assertEqual(resolved['output_dir'], str(out))

    def test_seed_flag_overrides_config(self):
        out = self.dir / 'teacher'
        self.call('train_teacher', config=self.write_config(), out=str(out), seed=8)
        self.assertEqual(json.loads((out / 'config.json').read_text(encoding='utf-8'))['seed'], 8)

    def test_distill_then_refine_then_sample(self):
        teacher_dir = self.dir / 'teacher'
        self.call('train_teacher', config=self.write_config(), out=str(teacher_dir))

        distill_dir = self.dir / 'distill'
        self.call('distill', config=self.write_config(), out=str(distill_dir),
                  teacher=str(teacher_dir / 'teacher.json'))
        generator = load_checkpoint(distill_dir / 'generator.json')
        self.assertIsInstance(generator, Generator)
        self.assertIsNotNone(generator.tweedie)
        self.assertAlmostEqual(generator.tweedie.t_star, 6.25)
        rows = read_metrics_csv(distill_dir / 'metrics.csv')
        self.assertEqual(len(rows), 2)
        self.assertNotEqual(rows[-1]['energy_distance'], '')

        refine_dir = self.dir / 'refine'
        self.call('refine', config=self.write_config(), out=str(refine_dir),
                  teacher=str(teacher_dir / 'teacher.json'), generator=str(distill_dir / 'generator.json'))
        self.assertTrue((refine_dir / 'generator.json').exists())

        sample_dir = self.dir / 'samples'
        self.call('sample', config=self.write_config(), out=str(sample_dir),
                  generator=str(refine_dir / 'generator.json'), n=10)
        self.assertEqual(load_samples_csv(sample_dir / 'samples.csv').shape, (10, 1))

    def test_distill_affine_student_with_exact_scores(self):
        out = self.dir / 'affine'
        config = self.write_config(teacher={'kind': 'analytic'},
                                   generator={'init': 'affine', 'mean': [2.0], 'scale': [1.0], 'exact_score': True})
        self.call('distill', config=config, out=str(out))
        rows = read_metrics_csv(out / 'metrics.csv')
        self.assertTrue(all(row['ikl_estimate'] for row in rows))
        self.assertTrue(all(row['dsm_loss'] == '' for row in rows))
        self.assertFalse((out / 'generator_last.json').exists())

    def test_sds_writes_trajectory(self):
        out = self.dir / 'sds'
        output = self.call('sds', config=self.write_config(teacher={'kind': 'analytic'}, sds={'init': [2.0]}),
                           out=str(out))
        self.assertIn('Final point', output)
        self.assertEqual(load_samples_csv(out / 'trajectory.csv').shape, (5, 1))
        self.assertEqual(load_samples_csv(out / 'trajectory.csv')[0, 0], 2.0)


class EvaluationCommandTests(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.generator_dir = self.dir / 'affine'
        config = self.write_config(
            dataset={'kind': 'gaussian_mixture_ring'},
            teacher={'kind': 'analytic'},
            generator={'init': 'affine', 'exact_score': False},
            train={'iterations': 2},
        )
        self.call('distill', config=config, out=str(self.generator_dir))
        self.generator = str(self.generator_dir / 'generator.json')
        self.config = config

    def test_eval_prints_one_row(self):
        stderr = StringIO()
        output = self.call('eval', config=self.config, generator=self.generator, stderr=stderr)
        (row,) = output.strip().splitlines()
        self.assertEqual(stderr.getvalue().strip(), 'energy_distance,baseline')
        distance, baseline = (float(v) for v in row.split(','))
        self.assertGreaterEqual(distance, 0.0)
        self.assertGreaterEqual(baseline, 0.0)

    def test_eval_accepts_a_dataset_file(self):
        dataset = self.dir / 'dataset.json'
        dataset.write_text(json.dumps({'kind': 'two_moons'}), encoding='utf-8')
        output = self.call('eval', config=self.config, generator=self.generator, dataset=str(dataset))
        self.assertEqual(len(output.strip().split(',')), 2)

    def test_plot_from_generator(self):
        out = self.dir / 'plot'
        self.call('plot', config=self.config, generator=self.generator, out=str(out))
        self.assertIn('<svg', (out / 'samples.svg').read_text(encoding='utf-8'))

    def test_plot_from_samples_csv(self):
        samples = self.dir / 'points.csv'
        save_samples_csv([[0.0, 0.0], [1.0, 1.0]], samples)
        out = self.dir / 'plot'
        output = self.call('plot', config=self.config, samples=str(samples), out=str(out))
        self.assertIn('Wrote 2 points', output)


class OracleCommandTests(CommandTestCase):

    def test_oracle_passes(self):
        out = self.dir / 'oracle'
        config = self.write_config(seed=0, oracle={'batch': 20000, 'random_pairs': 20})
        output = self.call('oracle', config=config, out=str(out))
        self.assertIn('All 15 oracle checks passed', output)
        header = (out / 'oracle.csv').read_text(encoding='utf-8').splitlines()[0]
        self.assertEqual(header, 'check,expected,observed,tolerance,status')


class CommandErrorTests(CommandTestCase):

    def assertExitCode(self, code, name, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return str(ctx.exception)

    def test_unknown_config_key(self):
        message = self.assertExitCode(1, 'train_teacher', config=self.write_config(train={'momentum': 0.9}),
                                      out=str(self.dir / 'x'))
        self.assertIn('train.momentum', message)

    def test_missing_teacher_checkpoint(self):
        self.assertExitCode(1, 'distill', config=self.write_config(), out=str(self.dir / 'x'))

    def test_corrupt_teacher_checkpoint(self):
        broken = self.dir / 'teacher.json'
        broken.write_text('{"format": "diff-instruct-lab/checkpoint", "role": ', encoding='utf-8')
        message = self.assertExitCode(1, 'distill', config=self.write_config(), out=str(self.dir / 'x'),
                                      teacher=str(broken))
        self.assertIn('line 1', message)

    def test_teacher_checkpoint_shape_must_match_config(self):
        teacher_dir = self.dir / 'teacher'
        self.call('train_teacher', config=self.write_config(), out=str(teacher_dir))
        message = self.assertExitCode(1, 'distill', config=self.write_config(score_net={'hidden': [16]}),
                                      out=str(self.dir / 'x'), teacher=str(teacher_dir / 'teacher.json'))
        self.assertIn('[2, 8, 1]', message)
        self.assertIn('[2, 16, 1]', message)

    def test_generator_checkpoint_shape_must_match_config(self):
        out = self.dir / 'affine'
        self.call('distill', config=self.write_config(teacher={'kind': 'analytic'}, generator={'init': 'affine'}),
                  out=str(out))
        config = self.write_config(teacher={'kind': 'analytic'}, generator={'init': 'mlp'})
        message = self.assertExitCode(1, 'eval', config=config, generator=str(out / 'generator.json'))
        self.assertIn('[1, 8, 1]', message)

    def test_no_analytic_score_for_moons(self):
        config = self.write_config(dataset={'kind': 'two_moons'}, teacher={'kind': 'analytic'})
        self.assertExitCode(1, 'sds', config=config, out=str(self.dir / 'x'))

    def test_divergence_exit_code(self):
        config = self.write_config(train={'loss_limit': 1e-12})
        message = self.assertExitCode(2, 'train_teacher', config=config, out=str(self.dir / 'x'))
        self.assertIn('diverged', message)


class CliTests(CommandTestCase):

    def test_usage_for_unknown_subcommand(self):
        stderr = StringIO()
        self.assertEqual(cli(['bogus'], stderr=stderr), 1)
        self.assertIn('usage: diff-instruct', stderr.getvalue())

    def test_hyphenated_subcommand(self):
        stdout, stderr = StringIO(), StringIO()
        code = cli(['train-teacher', '--config', self.write_config(), '--out', str(self.dir / 'run')],
                   stdout=stdout, stderr=stderr)
        self.assertEqual(code, 0)
        self.assertTrue((self.dir / 'run' / 'teacher.json').exists())

    def test_divergence_returns_two(self):
        stderr = StringIO()
        config = self.write_config(train={'loss_limit': 1e-12})
        self.assertEqual(cli(['train-teacher', '--config', config, '--out', str(self.dir / 'run')],
                             stdout=StringIO(), stderr=stderr), 2)
        self.assertIn('Error:', stderr.getvalue())
