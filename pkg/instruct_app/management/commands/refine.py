from .distill import Command as DistillCommand


class Command(DistillCommand):
    help = 'Improve an existing generator checkpoint with Diff-Instruct'

    uses_generator = True

    def initial_generator(self, cfg, teacher):
        generator = self.load_generator(cfg)
        if generator.data_dim != teacher.data_dim:
            raise ValueError(f'Generator of dimension {generator.data_dim} for a {teacher.data_dim}-dimensional teacher')
        return generator
