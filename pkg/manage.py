#!/usr/bin/env python
"""Django's command-line utility for administrative tasks."""
import os
import sys

# single-threaded BLAS keeps training runs bit-reproducible
THREAD_VARIABLES = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")


def main():
    """Run administrative tasks."""
    for variable in THREAD_VARIABLES:
        os.environ.setdefault(variable, '1')
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'segmentation_lab.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
