from instruct_app.training import train_teacher
from instruct_app.utils.checkpoints import save_checkpoint

from ._base import LabCommand


class Command(LabCommand):
    help = 'Train a teacher score network on a toy dataset by denoising score matching'

    def run(self, cfg, out, options):
        dataset = cfg.dataset
        self.stdout.write(f'Training teacher on {dataset.kind} ({cfg.train.iterations} iterations, seed {cfg.seed})')
        teacher = train_teacher(dataset, cfg.train, cfg.schedule, cfg.weighting,
                                hidden=cfg.score_net.hidden, activation=cfg.score_net.activation,
                                metrics_path=out / 'metrics.csv')
        path = save_checkpoint(teacher, out / 'teacher.json')
        self.stdout.write(self.style.SUCCESS(f'Saved teacher checkpoint to {path}'))
