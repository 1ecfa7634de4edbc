from pathlib import Path

from apps.cli.management.base import PipelineCommand
from apps.cli.pipeline import run_sensitivity
from apps.cli.utils.data_loader import load_json_data, write_csv


class Command(PipelineCommand):
    help = "Theta sweep of one matrix or problem spec, written as a plot-ready CSV."

    def add_command_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--matrix", default=None, help="Path to a .mtx file")
        source.add_argument("--spec", default=None, help="Path to a problem spec JSON")
        parser.add_argument("--tg", action="store_true", help="Stationary two-grid sweep of the boundary matrix")
        parser.add_argument("--delta", type=float, default=None, help="Multiscale threshold")
        parser.add_argument("--output", default=None, help="CSV path (default: <out-dir>/sensitivity/<name>.csv)")

    def run(self, **options):
        spec = load_json_data(options["spec"]) if options["spec"] else None
        frame, summary = run_sensitivity(
            matrix_path=options["matrix"],
            spec=spec,
            tg=options["tg"],
            delta=options["delta"],
            n_jobs=self.threads,
            seed=self.seed,
        )
        name = Path(options["matrix"] or options["spec"]).stem + ("_tg" if options["tg"] else "")
        path = write_csv(frame, options["output"] or self.out_dir / "sensitivity" / f"{name}.csv")
        self.write_json(summary)
        self.stdout.write(self.style.SUCCESS(f"Sensitivity rows written to {path}"))
