from apps.cli.management.base import PipelineCommand
from apps.cli.pipeline import MODEL_NAME, predict_matrix
from apps.model.persistence import load_model


class Command(PipelineCommand):
    help = "Predict theta for a Matrix Market file, optionally solving at it."
    uses_seed = False
    uses_threads = False

    def add_command_arguments(self, parser):
        parser.add_argument("matrix", help="Path to a .mtx file")
        parser.add_argument("--model", default=None, help="Model path (default: <out-dir>/model.json)")
        parser.add_argument("--solve", action="store_true", help="Run AMG-preconditioned GMRES at theta_auto")
        parser.add_argument("--time", action="store_true", help="Report inference time")
        parser.add_argument("--delta", type=float, default=None, help="Multiscale threshold for the report")

    def run(self, **options):
        model = load_model(options["model"] or self.out_dir / MODEL_NAME)
        result = predict_matrix(
            options["matrix"], model, solve=options["solve"], timing=options["time"], delta=options["delta"]
        )
        self.write_json(result)
