import logging

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from commons.exceptions import LaraGenError
from commons.seeding import configure_torch
from pipeline.config import load_config

logger = logging.getLogger(__name__)


def flatten_detail(detail, prefix=""):
    """`{"train": {"lr": ["..."]}}` -> `["train.lr: ..."]`."""
    if isinstance(detail, dict):
        messages = []
        for key, value in detail.items():
            messages += flatten_detail(value, f"{prefix}{key}.")
        return messages
    if isinstance(detail, list):
        return [message for item in detail for message in flatten_detail(item, prefix)]
    return [f"{prefix.rstrip('.')}: {detail}" if prefix else str(detail)]


def add_global_arguments(parser, default=None):
    """
    The `--config`, `--seed` and `--threads` flags. Subcommand parsers pass
    `argparse.SUPPRESS` so a flag given before the subcommand is not reset.
    """
    parser.add_argument("--config", default=default, help="INI run configuration; omitted sections use defaults.")
    parser.add_argument("--seed", type=int, default=default, help="Seed applied to every seeded configuration section.")
    parser.add_argument(
        "--threads", type=int, default=default, help="Torch intra-op thread count (default from LARAGEN_THREADS)."
    )


class PipelineCommand(BaseCommand):
    """
    Shared surface of the pipeline commands: the global `--seed`, `--config`
    and `--threads` flags, torch set-up and translation of pipeline failures
    into exit code 1.
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        add_global_arguments(parser)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            configure_torch(options.get("threads"))
            config = load_config(options.pop("config", None), options.get("seed"))
            return self.run(config, **options)
        except serializers.ValidationError as exc:
            raise CommandError("; ".join(flatten_detail(exc.detail)), returncode=1) from exc
        except (LaraGenError, OSError) as exc:
            raise CommandError(str(exc), returncode=1) from exc

    def run(self, config, **options):
        raise NotImplementedError
