"""Test-matrix generators.

`gen_diffusion` discretizes -div(kappa grad u) = 1 on the unit square/cube
with cell-centered finite volumes: kappa is diagonal and constant per
coefficient block, face transmissibilities are harmonic means of the two
adjacent cells, and zero Dirichlet data is folded into the diagonal.

`gen_radiation_surrogate` stacks three such operators into the 3x3 block
pattern of a radiation-diffusion system. It reproduces the sparsity and
coupling structure only, not the physics.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from apps.sparse.analysis import drop_min_entry, multiscale_report
from apps.sparse.csr import CsrMatrix

from .serializers import DiffusionSpecSerializer, RadiationSurrogateSpecSerializer

logger = logging.getLogger(__name__)


class NotMultiscale(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSpec:
    dim: int
    nx: int
    ny: int
    M: int
    nz: int = 1
    bx: int = 1
    by: int = 1
    bz: int = 1
    seed: int = 0
    kappa_y_fixed: bool = False

    @classmethod
    def from_dict(cls, data):
        serializer = DiffusionSpecSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        return cls(**serializer.validated_data)

    def to_dict(self):
        return asdict(self)

    @property
    def n_cells(self):
        return self.nx * self.ny * (self.nz if self.dim == 3 else 1)


@dataclass(frozen=True)
class RadiationSurrogateSpec:
    nx: int
    ny: int
    nz: int
    M: int
    omega_er: float
    omega_ei: float
    bx: int = 1
    by: int = 1
    bz: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        serializer = RadiationSurrogateSpecSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        return cls(**serializer.validated_data)

    def to_dict(self):
        return asdict(self)

    def block_spec(self, seed):
        return DiffusionSpec(
            dim=3, nx=self.nx, ny=self.ny, nz=self.nz, bx=self.bx, by=self.by, bz=self.bz,
            M=self.M, seed=seed,
        )


@dataclass
class LinearProblem:
    A: CsrMatrix
    b: np.ndarray
    meta: dict = field(default_factory=dict)


def spec_from_dict(data):
    """Problem spec from its JSON form; coupling fields select the surrogate."""
    if "omega_er" in data or "omega_ei" in data:
        return RadiationSurrogateSpec.from_dict(data)
    return DiffusionSpec.from_dict(data)


def generate(spec):
    if isinstance(spec, RadiationSurrogateSpec):
        return gen_radiation_surrogate(spec)
    return gen_diffusion(spec)


def _validated(spec, serializer_class):
    # dataclasses built directly in code go through the same checks as JSON input
    serializer = serializer_class(data=spec.to_dict())
    serializer.is_valid(raise_exception=True)


def _block_index(n_cells, n_blocks):
    return (np.arange(n_cells) * n_blocks) // n_cells


def cell_coefficients(spec):
    """Per-cell axis coefficients, shape (dim, nz, ny, nx)."""
    shape = (spec.nz, spec.ny, spec.nx) if spec.dim == 3 else (1, spec.ny, spec.nx)
    blocks = (spec.bz, spec.by, spec.bx) if spec.dim == 3 else (1, spec.by, spec.bx)
    rng = np.random.default_rng(spec.seed)
    r = rng.random(blocks + (spec.dim,))
    if spec.kappa_y_fixed:
        r[..., 1] = 0.0
    kappa_blocks = 10.0 ** (spec.M * r)
    iz = _block_index(shape[0], blocks[0])
    iy = _block_index(shape[1], blocks[1])
    ix = _block_index(shape[2], blocks[2])
    per_cell = kappa_blocks[np.ix_(iz, iy, ix)]
    return np.moveaxis(per_cell, -1, 0)


def mesh_factors(spec):
    """Face area over centre distance for each axis on the unit domain."""
    if spec.dim == 2:
        return (spec.nx / spec.ny, spec.ny / spec.nx)
    return (
        spec.nx / (spec.ny * spec.nz),
        spec.ny / (spec.nx * spec.nz),
        spec.nz / (spec.nx * spec.ny),
    )


def gen_diffusion(spec):
    _validated(spec, DiffusionSpecSerializer)
    kappa = cell_coefficients(spec)
    factors = mesh_factors(spec)
    grid_shape = kappa.shape[1:]
    n = spec.n_cells
    index = np.arange(n).reshape(grid_shape)
    diag = np.zeros(grid_shape)
    rows, cols, vals = [], [], []

    # array axis 2 is x, 1 is y, 0 is z
    for axis in range(spec.dim):
        array_axis = 2 - axis
        k = kappa[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[array_axis] = slice(None, -1)
        hi[array_axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)

        a, b = k[lo], k[hi]
        trans = factors[axis] * 2.0 * a * b / (a + b)
        diag[lo] += trans
        diag[hi] += trans
        left, right = index[lo].ravel(), index[hi].ravel()
        rows += [left, right]
        cols += [right, left]
        vals += [-trans.ravel(), -trans.ravel()]

        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[array_axis] = slice(0, 1)
        last[array_axis] = slice(-1, None)
        diag[tuple(first)] += factors[axis] * k[tuple(first)]
        diag[tuple(last)] += factors[axis] * k[tuple(last)]

    rows.append(index.ravel())
    cols.append(index.ravel())
    vals.append(diag.ravel())
    A = CsrMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n))
    logger.debug(f"Generated diffusion matrix {A!r} from {spec}")
    return LinearProblem(A=A, b=np.ones(n), meta={"problem": "diffusion", "spec": spec.to_dict()})


def block_seeds(seed, count=3):
    """Independent 64-bit seeds for the surrogate's diagonal blocks."""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) for s in state]


def gen_radiation_surrogate(spec):
    _validated(spec, RadiationSurrogateSpecSerializer)
    blocks = [gen_diffusion(spec.block_spec(s)).A.scipy for s in block_seeds(spec.seed)]
    n = blocks[0].shape[0]
    rng = np.random.default_rng([spec.seed, len(blocks)])
    w_er = rng.uniform(0.0, spec.omega_er, n)
    w_ei = rng.uniform(0.0, spec.omega_ei, n)

    a_r = blocks[0] + sp.diags(w_er)
    a_e = blocks[1] + sp.diags(w_er + w_ei)
    a_i = blocks[2] + sp.diags(w_ei)
    d_er = sp.diags(-w_er) if spec.omega_er > 0 else None
    d_ei = sp.diags(-w_ei) if spec.omega_ei > 0 else None
    assembled = sp.bmat(
        [[a_r, d_er, None], [d_er, a_e, d_ei], [None, d_ei, a_i]], format="csr"
    )
    A = CsrMatrix.from_scipy(assembled)
    logger.debug(f"Generated radiation surrogate {A!r} from {spec}")
    return LinearProblem(
        A=A, b=np.ones(3 * n), meta={"problem": "radiation", "spec": spec.to_dict()}
    )


def boundary_matrix(A, delta):
    """Drop minimal entries until one more drop would leave A single-scale."""
    if not multiscale_report(A, delta).is_multiscale:
        raise NotMultiscale(f"matrix is single-scale at delta={delta}")
    drops = 0
    while True:
        candidate = drop_min_entry(A)
        if not multiscale_report(candidate, delta).is_multiscale:
            logger.info(f"Boundary matrix reached after {drops} drops (nnz={A.nnz})")
            return A
        A = candidate
        drops += 1
