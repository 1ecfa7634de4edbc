from apps.cli.management.base import PipelineCommand
from apps.cli.manifest import DatasetManifest
from apps.cli.pipeline import MODEL_NAME, evaluate_model
from apps.model.persistence import load_model


class Command(PipelineCommand):
    help = "Compare theta_opt, default thetas and theta_auto on the test split."
    uses_seed = False

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", default=None, help="Manifest path (default: <out-dir>/manifest.json)")
        parser.add_argument("--model", default=None, help="Model path (default: <out-dir>/model.json)")
        parser.add_argument("--defaults", type=float, nargs="+", default=None, help="Default thetas to compare")
        parser.add_argument("--repeats", type=int, default=None, help="Timing repeats (median is reported)")

    def run(self, **options):
        manifest = DatasetManifest.load(self.manifest_path(options))
        model = load_model(options["model"] or self.out_dir / MODEL_NAME)
        result = evaluate_model(
            manifest, model, defaults=options["defaults"], repeats=options["repeats"], n_jobs=self.threads
        )
        path = result.save(self.out_dir)
        self.stdout.write(result.table.to_string(index=False))
        self.stdout.write(self.style.SUCCESS(f"Evaluation table written to {path}"))
