import shutil
import tempfile
import unittest
from pathlib import Path

from django.conf import settings
from django.test import tag

from commons.seeding import configure_torch
from corpus.generator import CorpusSpec, generate_corpus
from corpus.manifest import read_manifest


def slow(test):
    """Desk-scale runs: tagged `slow` and skipped unless LARAGEN_SLOW_TESTS is set."""
    skip = unittest.skipUnless(settings.LARAGEN["SLOW_TESTS"], "set LARAGEN_SLOW_TESTS=1 to run")
    return tag("slow")(skip(test))


class WorkspaceMixin:
    """Gives every test a scratch directory and deterministic torch kernels."""

    def setUp(self):
        super().setUp()
        configure_torch(1)
        self.workdir = Path(tempfile.mkdtemp(prefix="laragen-test-"))
        self.addCleanup(shutil.rmtree, self.workdir, ignore_errors=True)


def make_corpus(out_dir, **spec):
    """Write a small corpus and return its `Manifest`."""
    defaults = {"vocab_size": 16, "clip_len": 32, "n_clips": 24, "seed": 0}
    generate_corpus(CorpusSpec(**{**defaults, **spec}), out_dir)
    return read_manifest(out_dir)
