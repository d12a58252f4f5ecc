from django.core.management.base import CommandError

from instruct_app.utils.csv_generator import OracleCSVGenerator
from instruct_app.utils.oracle_battery import run_oracle_battery

from ._base import LabCommand


class Command(LabCommand):
    help = 'Run the analytic oracle battery and write oracle.csv'

    def run(self, cfg, out, options):
        results = run_oracle_battery(cfg.oracle.batch, cfg.oracle.fd_step, cfg.oracle.random_pairs, cfg.seed)
        report = OracleCSVGenerator()
        for result in results:
            report.add_result(result)
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f'{result.status:4}  {result.check}: observed {result.observed!r}, '
                                    f'expected {result.expected!r} (tolerance {result.tolerance!r})'))
        path = report.save_to_file(out / 'oracle.csv')

        failed = [r.check for r in results if not r.passed]
        if failed:
            raise CommandError(f"{len(failed)} oracle check(s) failed: {', '.join(failed)}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f'All {len(results)} oracle checks passed ({path})'))
