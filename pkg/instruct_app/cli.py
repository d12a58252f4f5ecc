"""
``diff-instruct`` command-line entry point.

Maps the hyphenated subcommands onto the app's management commands, so
``diff-instruct train-teacher --config c.json`` is the same run as
``python manage.py train_teacher --config c.json``.
"""

import os
import sys

import django
from django.core.management import call_command
from django.core.management.base import CommandError

SUBCOMMANDS = {
    'train-teacher': 'train_teacher',
    'distill': 'distill',
    'refine': 'refine',
    'sds': 'sds',
    'oracle': 'oracle',
    'sample': 'sample',
    'eval': 'eval',
    'plot': 'plot',
}

USAGE = f"usage: diff-instruct {{{','.join(SUBCOMMANDS)}}} [--config PATH] [--out DIR] [--seed N] ...\n"


def setup_django() -> None:
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'diff_instruct_lab.settings')
    django.setup()


def cli(argv=None, stdout=None, stderr=None) -> int:
    """
    Run one subcommand and return its exit code.

    Returns:
        0 on success, 1 for usage, config and checkpoint errors, 2 when training diverged
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    stderr = stderr or sys.stderr
    if not argv or argv[0] not in SUBCOMMANDS:
        stderr.write(USAGE)
        return 1

    setup_django()
    options = {'stdout': stdout} if stdout is not None else {}
    try:
        call_command(SUBCOMMANDS[argv[0]], *argv[1:], stderr=stderr, **options)
    except CommandError as exc:
        stderr.write(f'Error: {exc}\n')
        return exc.returncode
    return 0


def main() -> None:
    sys.exit(cli())
