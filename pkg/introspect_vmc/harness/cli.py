"""
``ivmc`` console entry point.

Configures Django with the harness settings and dispatches to the management
commands. Hyphenated subcommands (``gen-demos``) map to the command modules
(``gen_demos``). When ``--out`` is given, logs also go to ``<out>/logs``.
"""

import argparse
import os
import sys
from typing import List, Optional

SETTINGS_MODULE = 'introspect_vmc.harness.settings'


def main(argv: Optional[List[str]] = None) -> None:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and not argv[0].startswith('-'):
        argv[0] = argv[0].replace('-', '_')

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--out', default=None)
    known, _ = pre.parse_known_args(argv[1:])
    if known.out:
        os.environ.setdefault('IVMC_LOG_DIR', os.path.join(known.out, 'logs'))

    os.environ.setdefault('DJANGO_SETTINGS_MODULE', SETTINGS_MODULE)
    from django.core.management import execute_from_command_line

    execute_from_command_line(['ivmc', *argv])


if __name__ == '__main__':
    main()
