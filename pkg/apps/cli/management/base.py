import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """Shared --seed/--threads/--out-dir handling and error translation.

    Commands that draw no random numbers or run nothing in parallel set
    `uses_seed` or `uses_threads` to False and reject the flag.
    """

    uses_seed = True
    uses_threads = True

    def add_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=None, help="Random seed (default: AUTOAMG_SEED)")
        parser.add_argument(
            "--threads", type=int, default=None, help="Worker threads (default: AUTOAMG_THREADS)"
        )
        parser.add_argument(
            "--out-dir", default=None, help="Output directory (default: AUTOAMG_DATA_DIR)"
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def handle(self, *args, **options):
        for flag, used in (("seed", self.uses_seed), ("threads", self.uses_threads)):
            if options[flag] is not None and not used:
                raise CommandError(f"--{flag} has no effect on {self.command_name}")
        self.seed_option = options["seed"]
        self.seed = options["seed"] if options["seed"] is not None else settings.AUTOAMG_SEED
        self.threads = options["threads"] or settings.AUTOAMG_THREADS
        self.out_dir = Path(options["out_dir"] or settings.AUTOAMG_DATA_DIR)
        try:
            self.run(**options)
        except ValidationError as e:
            raise CommandError(f"Invalid input: {e.detail}") from e
        except (OSError, ValueError, KeyError, ArithmeticError) as e:
            logger.error(f"{self.command_name} failed: {str(e)}")
            raise CommandError(str(e)) from e

    def run(self, **options):
        raise NotImplementedError

    def manifest_path(self, options):
        return Path(options.get("manifest") or self.out_dir / "manifest.json")

    def write_json(self, data):
        self.stdout.write(json.dumps(data, indent=2, default=str))
