"""Dataset manifests: the on-disk index of a generated and labeled corpus.

Paths inside a manifest are relative to the manifest file, so a dataset
directory can be moved as a whole.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .serializers import ManifestSerializer
from .utils.data_loader import dump_json_data, load_json_data

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class ManifestEntry:
    matrix_id: str
    matrix_path: str
    problem: str
    split: str
    n_rows: int
    nnz: int
    multiscale_rows: int
    spec: dict = None
    theta_opt: float = None
    iters_at_opt: int = None
    grid_csv: str = None

    @property
    def labeled(self):
        return self.theta_opt is not None

    @property
    def group(self):
        """EvalTable group: radiation, or the dimension of a diffusion problem."""
        if self.problem == "radiation":
            return "radiation"
        if self.spec and self.spec.get("dim") == 3:
            return "3d"
        if self.spec:
            return "2d"
        return self.problem


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    delta: float = 3.0
    config: dict = field(default_factory=dict)
    root: Path = field(default_factory=Path)
    version: int = MANIFEST_VERSION

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    @property
    def train_entries(self):
        return self.split("train")

    @property
    def test_entries(self):
        return self.split("test")

    def entry(self, matrix_id):
        for e in self.entries:
            if e.matrix_id == matrix_id:
                return e
        raise KeyError(f"no matrix '{matrix_id}' in manifest")

    def resolve(self, relative):
        return self.root / relative

    def matrix_file(self, entry):
        return self.resolve(entry.matrix_path)

    def unlabeled(self, entries=None):
        return [e.matrix_id for e in (self.entries if entries is None else entries) if not e.labeled]

    def missing_files(self):
        return [e.matrix_id for e in self.entries if not self.matrix_file(e).is_file()]

    def to_dict(self):
        return {
            "version": self.version,
            "delta": self.delta,
            "config": self.config,
            "entries": [asdict(e) for e in self.entries],
        }

    def save(self, path=None):
        path = Path(path) if path else self.root / MANIFEST_NAME
        return dump_json_data(self.to_dict(), path)

    @classmethod
    def load(cls, path, check_files=True):
        path = Path(path)
        serializer = ManifestSerializer(data=load_json_data(path))
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        manifest = cls(
            entries=[ManifestEntry(**dict(e)) for e in data["entries"]],
            delta=data["delta"],
            config=dict(data["config"]),
            root=path.parent,
            version=data["version"],
        )
        if check_files:
            missing = manifest.missing_files()
            if missing:
                logger.error(f"Manifest {path} references missing matrix files: {missing}")
                raise FileNotFoundError(f"matrix files missing for: {', '.join(missing)}")
        return manifest
