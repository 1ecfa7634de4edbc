from apps.cli.management.base import PipelineCommand
from apps.cli.pipeline import generate_dataset
from apps.cli.utils.data_loader import load_json_data


class Command(PipelineCommand):
    help = "Generate a matrix dataset and its manifest from a JSON generation config."

    def add_command_arguments(self, parser):
        parser.add_argument("config", help="Path to the generation config JSON")
        parser.add_argument("--delta", type=float, default=None, help="Multiscale threshold recorded per matrix")

    def run(self, **options):
        config = load_json_data(options["config"])
        manifest = generate_dataset(
            config, self.out_dir, seed=self.seed_option, delta=options["delta"], n_jobs=self.threads
        )
        if not manifest.entries:
            self.stdout.write(self.style.WARNING(f"No matrices generated; empty manifest in {self.out_dir}"))
            return
        self.stdout.write(
            self.style.SUCCESS(
                f"Generated {len(manifest.entries)} matrices "
                f"({len(manifest.train_entries)} train, {len(manifest.test_entries)} test) in {self.out_dir}"
            )
        )
