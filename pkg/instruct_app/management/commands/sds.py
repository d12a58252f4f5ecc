import numpy as np

from instruct_app.training import run_sds
from instruct_app.utils.csv_generator import save_samples_csv

from ._base import LabCommand


class Command(LabCommand):
    help = 'Optimize a single point against the teacher with score distillation'

    uses_teacher = True

    def run(self, cfg, out, options):
        teacher = self.load_teacher(cfg)
        point, trajectory = run_sds(np.array(cfg.sds.init), teacher, cfg.schedule, cfg.weighting, cfg.train,
                                    metrics_path=out / 'metrics.csv')
        save_samples_csv(trajectory, out / 'trajectory.csv')
        formatted = ', '.join(f'{v:.6g}' for v in point)
        self.stdout.write(self.style.SUCCESS(f'Final point: [{formatted}]'))
