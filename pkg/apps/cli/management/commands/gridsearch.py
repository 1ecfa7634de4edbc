from apps.cli.management.base import PipelineCommand
from apps.cli.manifest import DatasetManifest
from apps.cli.pipeline import label_dataset


class Command(PipelineCommand):
    help = "Label every manifest entry with theta_opt by exhaustive grid search."
    uses_seed = False

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", default=None, help="Manifest path (default: <out-dir>/manifest.json)")
        parser.add_argument("--force", action="store_true", help="Relabel entries that already have theta_opt")

    def run(self, **options):
        manifest = DatasetManifest.load(self.manifest_path(options))
        labeled = label_dataset(manifest, force=options["force"], n_jobs=self.threads)
        if not labeled:
            self.stdout.write(self.style.WARNING("All entries already labeled; use --force to relabel"))
            return
        self.stdout.write(self.style.SUCCESS(f"Labeled {len(labeled)} matrices"))
