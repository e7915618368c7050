"""Behave hooks: every scenario gets its own scratch directory."""

import shutil
import sys
import tempfile
from pathlib import Path

# step modules share the config builders in tests/helpers.py
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))


def before_scenario(context, scenario):
    context.workdir = tempfile.mkdtemp(prefix="dfdnn-")


def after_scenario(context, scenario):
    shutil.rmtree(context.workdir, ignore_errors=True)
