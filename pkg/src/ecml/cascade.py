"""Ensemble cascade machinery.

A cascade is L grouped learning stages followed by one plain metric. Each
stage zero-pads its input to a multiple of the stage's group count, shuffles
the padded dimensions with a seeded permutation, splits them into contiguous
equal-width groups, fits the metric learner per group, factorizes each
learned matrix through a PSD-clamping spectral decomposition, maps the group
features through the resulting projection, and square-root normalizes the
concatenated output. The final stage fits one ungrouped metric on the last
stage's output and performs no mapping or normalization.

Inference replays the stored permutations and projections exactly, so a
fitted model reproduces its training-time stage outputs bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._linalg import fix_column_signs, freeze_array, symmetrize
from .errors import NumericalError, ValidationError
from .features import FeatureMatrix, PairSet, PcaModel, zero_pad
from .metrics import MetricModel, accumulate_stats

DEFAULT_CASCADE_LAMBDA = 0.1
DEFAULT_STAGES = 3

CLAMP_TOL = 1e-10

MODEL_MAGIC = b"ECML"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Projection:
    """Per-group mapping matrix P with P @ P.T symmetric PSD."""

    p: np.ndarray
    clamped_count: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError(f"projection must be square, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise ValidationError("projection has non-finite entries")
        if self.clamped_count < 0:
            raise ValidationError("clamped_count must be nonnegative")
        gram = p @ p.T
        scale = max(1.0, float(np.abs(gram).max()))
        if np.linalg.eigvalsh(symmetrize(gram)).min() < -1e-8 * scale:
            raise ValidationError("projection gram matrix is not PSD within 1e-8")
        object.__setattr__(self, "p", freeze_array(p))
        object.__setattr__(self, "clamped_count", int(self.clamped_count))

    @property
    def dim(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class StageModel:
    """One ensemble stage: a dimension shuffle plus per-group projections."""

    permutation: np.ndarray
    group_count: int
    group_dim: int
    projections: tuple[Projection, ...]

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        width = self.group_count * self.group_dim
        if self.group_count < 1 or self.group_dim < 1:
            raise ValidationError("group_count and group_dim must be >= 1")
        if perm.ndim != 1 or perm.size != width:
            raise ValidationError(f"permutation must have length {width}, got {perm.size}")
        if not np.array_equal(np.sort(perm), np.arange(width)):
            raise ValidationError("permutation is not a bijection of the padded dimensions")
        projections = tuple(self.projections)
        if len(projections) != self.group_count:
            raise ValidationError(
                f"expected {self.group_count} projections, got {len(projections)}"
            )
        for g, proj in enumerate(projections):
            if proj.dim != self.group_dim:
                raise ValidationError(
                    f"group {g} projection has dim {proj.dim}, expected {self.group_dim}"
                )
        object.__setattr__(self, "permutation", freeze_array(perm))
        object.__setattr__(self, "projections", projections)

    @property
    def width(self) -> int:
        return self.group_count * self.group_dim


@dataclass(frozen=True)
class CascadeModel:
    """Fitted cascade: ordered stages plus the final scoring metric."""

    stages: tuple[StageModel, ...]
    final_metric: MetricModel
    input_dim: int
    seed: int

    def __post_init__(self):
        stages = tuple(self.stages)
        if self.input_dim < 1:
            raise ValidationError("input_dim must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")
        dim = self.input_dim
        for s, stage in enumerate(stages):
            padded = -(-dim // stage.group_count) * stage.group_count
            if stage.width != padded:
                raise ValidationError(
                    f"stage {s} has width {stage.width}, but the previous output "
                    f"pads to {padded}"
                )
            dim = stage.width
        if self.final_metric.dim != dim:
            raise ValidationError(
                f"final metric dim {self.final_metric.dim} does not match "
                f"last stage output dim {dim}"
            )
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def stage_count(self) -> int:
        return len(self.stages)

    @property
    def output_dim(self) -> int:
        return self.final_metric.dim

    @property
    def learner(self) -> str:
        return self.final_metric.learner


# ---------------------------------------------------------------------------
# core operations


def mcd(matrix) -> Projection:
    """Spectral factorization with negative eigenvalues clamped to zero.

    Decomposes the symmetrized input as Q diag(w) Q^T, zeroes negative
    eigenvalues, and returns P = Q diag(sqrt(max(w, 0))) so that P @ P.T
    reconstructs the clamped matrix. Eigenvalues are kept in ascending order
    and eigenvector signs pinned, fixing the basis freedom. Eigenvalues in
    (-CLAMP_TOL, 0) are treated as zero without counting as clamped.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValidationError("matrix has non-finite entries")
    m = symmetrize(m)
    try:
        evals, evecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for {m.shape[0]}x{m.shape[0]} matrix "
            f"(fro norm {np.linalg.norm(m):.3e}): {exc}"
        ) from exc
    evecs = fix_column_signs(evecs)
    clamped = int((evals <= -CLAMP_TOL).sum())
    p = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return Projection(p=p, clamped_count=clamped)


def _sqrt_norm(arr):
    return np.sign(arr) * np.sqrt(np.abs(arr))


def sqrt_normalize(features: FeatureMatrix) -> FeatureMatrix:
    """Elementwise signed square root, sgn(v) * |v|**0.5."""
    return FeatureMatrix(_sqrt_norm(features.data))


def group_counts(stage_count: int) -> list[int]:
    """Ensemble group counts per stage: 2**L, 2**(L-1), ..., 2."""
    if stage_count < 1:
        raise ValidationError(f"stage count must be >= 1, got {stage_count}")
    return [2 ** (stage_count - l + 1) for l in range(1, stage_count + 1)]


def fit_stage(features: FeatureMatrix, pairs: PairSet, n_groups, learner, seed):
    """Fit one ensemble stage; returns (StageModel, stage output features)."""
    return _fit_stage(features, pairs, n_groups, learner, np.random.default_rng(seed))


def _fit_stage(features, pairs, n_groups, learner, rng):
    if n_groups < 1:
        raise ValidationError(f"group count must be >= 1, got {n_groups}")
    padded = zero_pad(features, n_groups)
    width = padded.dim
    gdim = width // n_groups
    perm = rng.permutation(width)
    shuffled = padded.data[:, perm]
    projections = []
    for g in range(n_groups):
        block = shuffled[:, g * gdim : (g + 1) * gdim]
        stats = accumulate_stats(FeatureMatrix(block), pairs)
        try:
            model = learner(stats)
        except NumericalError as exc:
            failure = type(exc)(f"ensemble group {g} of {n_groups}: {exc}")
            failure.group_index = g
            raise failure from exc
        projections.append(mcd(model.matrix))
    stage = StageModel(
        permutation=perm,
        group_count=n_groups,
        group_dim=gdim,
        projections=tuple(projections),
    )
    return stage, _apply_stage(stage, features)


def _apply_stage(stage: StageModel, features: FeatureMatrix) -> FeatureMatrix:
    # Single replay path: fitting and inference both produce stage outputs here.
    padded = zero_pad(features, stage.group_count)
    if padded.dim != stage.width:
        raise ValidationError(
            f"stage expects width {stage.width} after padding, got {padded.dim}"
        )
    shuffled = padded.data[:, stage.permutation]
    gdim = stage.group_dim
    blocks = [
        _sqrt_norm(shuffled[:, g * gdim : (g + 1) * gdim] @ proj.p)
        for g, proj in enumerate(stage.projections)
    ]
    return FeatureMatrix(np.hstack(blocks))


def fit_cascade(features: FeatureMatrix, pairs: PairSet, stage_count, learner, seed) -> CascadeModel:
    """Fit ``stage_count`` ensemble stages plus one final ungrouped metric.

    Stage group counts follow :func:`group_counts`; each stage consumes the
    previous stage's output. ``stage_count = 0`` degenerates to the plain
    learner on the raw features. The final metric is fitted without grouping
    and is never factorized or normalized.
    """
    if stage_count < 0:
        raise ValidationError(f"stage count must be >= 0, got {stage_count}")
    rng = np.random.default_rng(seed)
    stages = []
    current = features
    counts = group_counts(stage_count) if stage_count else []
    for s, n_groups in enumerate(counts):
        try:
            stage, current = _fit_stage(current, pairs, n_groups, learner, rng)
        except NumericalError as exc:
            failure = type(exc)(f"stage {s}: {exc}")
            failure.stage_index = s
            failure.group_index = getattr(exc, "group_index", None)
            raise failure from exc
        stages.append(stage)
    final = learner(accumulate_stats(current, pairs))
    return CascadeModel(
        stages=tuple(stages),
        final_metric=final,
        input_dim=features.dim,
        seed=int(seed),
    )


def transform(model: CascadeModel, features: FeatureMatrix) -> FeatureMatrix:
    """Replay the fitted stages; output lives in the final metric's space."""
    if features.dim != model.input_dim:
        raise ValidationError(
            f"feature dim {features.dim} does not match model input dim {model.input_dim}"
        )
    current = features
    for stage in model.stages:
        current = _apply_stage(stage, current)
    return current


def cascade_distance(model: CascadeModel, x, y) -> float:
    """Squared metric distance d^T M d between two transformed vectors."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != model.input_dim or y.size != model.input_dim:
        raise ValidationError(
            f"vectors must have dim {model.input_dim}, got {x.size} and {y.size}"
        )
    mapped = transform(model, FeatureMatrix(np.vstack([x, y])))
    d = mapped.data[0] - mapped.data[1]
    return float(d @ model.final_metric.matrix @ d)


# ---------------------------------------------------------------------------
# persistence

# Layout (version 1, all little-endian):
#   magic "ECML", u32 version, u32 tag length, tag utf-8 bytes,
#   f64 lambda (NaN if n/a), f64 rho (NaN if n/a), u64 seed,
#   u32 input_dim, u32 stage count;
#   per stage: u32 group_count, u32 group_dim, u32 permutation[width],
#              group_count dense f64 P matrices (group_dim x group_dim,
#              row-major), u32 clamped_count[group_count];
#   u32 final dim, dense f64 final metric; u8 pca flag, and if set:
#   u32 pca input dim, u32 pca k, f64 mean, dense f64 basis (row-major).


def save_model(model: CascadeModel, path, pca: PcaModel | None = None) -> None:
    """Serialize a cascade model (and optional PCA front end) to ``path``."""
    tag = model.final_metric.learner.encode("utf-8")
    lam = model.final_metric.lam
    rho = model.final_metric.rho
    chunks = [
        MODEL_MAGIC,
        struct.pack("<II", MODEL_VERSION, len(tag)),
        tag,
        struct.pack(
            "<ddQII",
            float("nan") if lam is None else float(lam),
            float("nan") if rho is None else float(rho),
            model.seed,
            model.input_dim,
            model.stage_count,
        ),
    ]
    for stage in model.stages:
        chunks.append(struct.pack("<II", stage.group_count, stage.group_dim))
        chunks.append(stage.permutation.astype("<u4").tobytes())
        for proj in stage.projections:
            chunks.append(np.ascontiguousarray(proj.p, dtype="<f8").tobytes())
        counts = np.asarray([p.clamped_count for p in stage.projections], dtype="<u4")
        chunks.append(counts.tobytes())
    fm = model.final_metric.matrix
    chunks.append(struct.pack("<I", fm.shape[0]))
    chunks.append(np.ascontiguousarray(fm, dtype="<f8").tobytes())
    if pca is None:
        chunks.append(b"\x00")
    else:
        chunks.append(b"\x01")
        chunks.append(struct.pack("<II", pca.input_dim, pca.k))
        chunks.append(np.ascontiguousarray(pca.mean, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(pca.basis, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Cursor:
    """Sequential reader that reports expected vs actual length on underrun."""

    def __init__(self, buf, path):
        self.buf = buf
        self.path = path
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise ValidationError(
                f"{self.path}: truncated model file: need {self.off + n} bytes "
                f"through {what}, file has {len(self.buf)}"
            )
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count, what):
        raw = self.take(count * 8, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def uints(self, count, what):
        raw = self.take(count * 4, what)
        return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def load_model(path):
    """Load a model file; returns (CascadeModel, PcaModel or None)."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read model file: {exc}") from exc
    cur = _Cursor(buf, path)
    magic = cur.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    (version, tag_len) = cur.unpack("<II", "header")
    if version != MODEL_VERSION:
        raise ValidationError(f"{path}: unsupported model version {version}")
    tag = cur.take(tag_len, "learner tag").decode("utf-8")
    lam, rho, seed, input_dim, n_stages = cur.unpack("<ddQII", "model header")
    stages = []
    for s in range(n_stages):
        n_groups, gdim = cur.unpack("<II", f"stage {s} header")
        width = n_groups * gdim
        perm = cur.uints(width, f"stage {s} permutation")
        mats = [
            cur.floats(gdim * gdim, f"stage {s} group {g} projection").reshape(gdim, gdim)
            for g in range(n_groups)
        ]
        counts = cur.uints(n_groups, f"stage {s} clamped counts")
        projections = tuple(
            Projection(p=mat, clamped_count=int(c)) for mat, c in zip(mats, counts)
        )
        stages.append(
            StageModel(
                permutation=perm,
                group_count=int(n_groups),
                group_dim=int(gdim),
                projections=projections,
            )
        )
    (final_dim,) = cur.unpack("<I", "final metric dim")
    fm = cur.floats(final_dim * final_dim, "final metric").reshape(final_dim, final_dim)
    final = MetricModel(
        matrix=fm,
        learner=tag,
        lam=None if np.isnan(lam) else float(lam),
        rho=None if np.isnan(rho) else float(rho),
    )
    (has_pca,) = cur.unpack("<B", "pca flag")
    pca = None
    if has_pca == 1:
        pca_dim, pca_k = cur.unpack("<II", "pca header")
        mean = cur.floats(pca_dim, "pca mean")
        basis = cur.floats(pca_dim * pca_k, "pca basis").reshape(pca_dim, pca_k)
        pca = PcaModel(mean=mean, basis=basis)
    elif has_pca != 0:
        raise ValidationError(f"{path}: invalid pca flag {has_pca}")
    if cur.off != len(buf):
        raise ValidationError(
            f"{path}: {len(buf) - cur.off} unexpected trailing bytes after model payload"
        )
    model = CascadeModel(
        stages=tuple(stages),
        final_metric=final,
        input_dim=int(input_dim),
        seed=int(seed),
    )
    return model, pca
