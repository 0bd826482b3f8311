#!/usr/bin/env python
"""
Run the medqte commands against the test settings without a host project, e.g.

    ./manage.py migrate
    ./manage.py medqte_estimate --input sample.csv --out results
"""
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "tests.settings")
    from django.core.management import execute_from_command_line

    execute_from_command_line(sys.argv)
