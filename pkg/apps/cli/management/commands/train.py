from apps.cli.management.base import PipelineCommand
from apps.cli.manifest import DatasetManifest
from apps.cli.pipeline import train_model
from apps.cli.utils.data_loader import load_json_data
from apps.model.serializers import TrainConfigSerializer
from apps.model.training import TrainConfig


class Command(PipelineCommand):
    help = "Train the GCIN + head model on the labeled train split."

    def add_command_arguments(self, parser):
        parser.add_argument("--manifest", default=None, help="Manifest path (default: <out-dir>/manifest.json)")
        parser.add_argument("--config", default=None, help="Training config JSON")
        parser.add_argument("--model", default=None, help="Model output path (default: <out-dir>/model.json)")

    def run(self, **options):
        raw = load_json_data(options["config"]) if options["config"] else {}
        serializer = TrainConfigSerializer(data=raw)
        serializer.is_valid(raise_exception=True)
        values = dict(serializer.validated_data)
        gcin = values.pop("gcin", None)
        head = values.pop("head", None)
        if self.seed_option is not None:
            values["seed"] = self.seed_option
        cfg = TrainConfig.from_settings(**values)

        manifest = DatasetManifest.load(self.manifest_path(options))
        model, path = train_model(
            manifest, cfg, out_dir=self.out_dir, n_jobs=self.threads, gcin=gcin, head=head,
            model_path=options["model"],
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"Model written to {path} (best epoch {model.metadata['best_epoch']}, "
                f"loss {model.metadata['best_loss']:.6f})"
            )
        )
