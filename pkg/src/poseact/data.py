"""Dataset and model files, planted synthetic data, splits, standardization.

Dataset files are UTF-8 text: a JSON header object on line 1 (block layout,
class list, group names) followed by one JSON array per line per instance,
skeleton features first, then object features, then the label string for
labeled data.  Model files are a single JSON document.  Both writers are
atomic (temp file plus rename) and byte-deterministic, so saving what load
returned reproduces the file exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, FeatureLayout, GroupNames, Model, default_names
from .errors import (
    ConfigError,
    DataFormatError,
    LayoutError,
    ValidationError,
)
from .solver import SolverConfig, _MAX_SEED

__all__ = [
    "DATASET_FORMAT",
    "MODEL_FORMAT",
    "FORMAT_VERSION",
    "Standardizer",
    "SynthSpec",
    "GeneratedData",
    "load_dataset",
    "save_dataset",
    "load_model",
    "save_model",
    "generate",
    "split",
    "standardize",
]

DATASET_FORMAT = "poseact-dataset"
MODEL_FORMAT = "poseact-model"
FORMAT_VERSION = 1


# --- standardization --------------------------------------------------------


def _frozen_vector(value, what):
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise LayoutError(f"{what} must be 1-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature centering and scaling fitted on one training set.

    Zero-variance features are centered but kept at scale 1; their indices
    are recorded in skeleton_constant / object_constant so downstream
    reports can flag them.
    """

    skeleton_mean: np.ndarray = field(repr=False)
    skeleton_scale: np.ndarray = field(repr=False)
    object_mean: np.ndarray = field(repr=False)
    object_scale: np.ndarray = field(repr=False)
    skeleton_constant: tuple[int, ...] = ()
    object_constant: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("skeleton_mean", "skeleton_scale", "object_mean", "object_scale"):
            object.__setattr__(self, name, _frozen_vector(getattr(self, name), name))
        if self.skeleton_mean.shape != self.skeleton_scale.shape:
            raise LayoutError("skeleton mean and scale lengths disagree")
        if self.object_mean.shape != self.object_scale.shape:
            raise LayoutError("object mean and scale lengths disagree")
        if np.any(self.skeleton_scale <= 0) or np.any(self.object_scale <= 0):
            raise ValidationError("scales must be strictly positive")
        object.__setattr__(
            self, "skeleton_constant", tuple(int(i) for i in self.skeleton_constant)
        )
        object.__setattr__(
            self, "object_constant", tuple(int(i) for i in self.object_constant)
        )

    def apply(self, dataset: Dataset) -> Dataset:
        """Transform a dataset exactly the way the training set was transformed."""
        if dataset.layout.d_t != self.skeleton_mean.shape[0]:
            raise LayoutError(
                f"dataset has {dataset.layout.d_t} skeleton features, "
                f"transform expects {self.skeleton_mean.shape[0]}"
            )
        if dataset.layout.d_o != self.object_mean.shape[0]:
            raise LayoutError(
                f"dataset has {dataset.layout.d_o} object features, "
                f"transform expects {self.object_mean.shape[0]}"
            )
        skeleton = (dataset.skeleton - self.skeleton_mean[:, None]) / self.skeleton_scale[:, None]
        objects = (dataset.objects - self.object_mean[:, None]) / self.object_scale[:, None]
        return Dataset(
            layout=dataset.layout,
            skeleton=skeleton,
            objects=objects,
            labels=dataset.labels,
            class_names=dataset.class_names,
            names=dataset.names,
        )


def standardize(dataset: Dataset) -> tuple[Dataset, Standardizer]:
    """Center every feature and scale it to unit variance across instances.

    Needs at least two instances.  Returns the transformed dataset and the
    transform itself, for replaying on held-out data.
    """
    if dataset.n_instances < 2:
        raise ValidationError("standardize needs at least two instances")

    def stats(mat):
        mean = mat.mean(axis=1)
        scale = mat.std(axis=1)
        constant = tuple(int(i) for i in np.flatnonzero(scale == 0.0))
        scale = np.where(scale == 0.0, 1.0, scale)
        return mean, scale, constant

    t_mean, t_scale, t_const = stats(dataset.skeleton)
    o_mean, o_scale, o_const = stats(dataset.objects)
    transform = Standardizer(
        skeleton_mean=t_mean,
        skeleton_scale=t_scale,
        object_mean=o_mean,
        object_scale=o_scale,
        skeleton_constant=t_const,
        object_constant=o_const,
    )
    return transform.apply(dataset), transform


# --- synthetic data ----------------------------------------------------------


def _checked_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed < _MAX_SEED:
        raise ConfigError(f"seed must fit in 64 unsigned bits, got {seed}")
    return int(seed)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for synthetic data with known discriminative structure.

    planted_joints[c] lists the joint indices whose ground-truth skeleton
    weights are nonzero for class c; planted_blocks[c] lists (object,
    modality) pairs likewise.  Everything outside those blocks is exactly
    zero in the ground truth.
    """

    layout: FeatureLayout
    n_classes: int
    n_instances: int
    noise_sigma: float
    planted_joints: tuple[tuple[int, ...], ...]
    planted_blocks: tuple[tuple[tuple[int, int], ...], ...]
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n_classes, bool) or not isinstance(self.n_classes, (int, np.integer)):
            raise ConfigError(f"n_classes must be an integer, got {self.n_classes!r}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        object.__setattr__(self, "n_classes", int(self.n_classes))
        if isinstance(self.n_instances, bool) or not isinstance(self.n_instances, (int, np.integer)):
            raise ConfigError(f"n_instances must be an integer, got {self.n_instances!r}")
        if self.n_instances < 1:
            raise ConfigError(f"n_instances must be >= 1, got {self.n_instances}")
        object.__setattr__(self, "n_instances", int(self.n_instances))
        sigma = self.noise_sigma
        try:
            sigma = float(sigma)
        except (TypeError, ValueError):
            raise ConfigError(f"noise_sigma must be a number, got {sigma!r}") from None
        if not math.isfinite(sigma) or sigma < 0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {sigma}")
        object.__setattr__(self, "noise_sigma", sigma)
        object.__setattr__(self, "seed", _checked_seed(self.seed))

        joints = tuple(self.planted_joints)
        if len(joints) != self.n_classes:
            raise ConfigError(
                f"planted_joints lists {len(joints)} classes, expected {self.n_classes}"
            )
        cleaned_joints = []
        for c, entry in enumerate(joints):
            idx = sorted({int(j) for j in entry})
            if not idx:
                raise ConfigError(f"planted_joints for class {c} is empty")
            if idx[0] < 0 or idx[-1] >= self.layout.n_joints:
                raise ConfigError(
                    f"planted_joints for class {c} outside [0, {self.layout.n_joints})"
                )
            cleaned_joints.append(tuple(idx))
        object.__setattr__(self, "planted_joints", tuple(cleaned_joints))

        blocks = tuple(self.planted_blocks)
        if len(blocks) != self.n_classes:
            raise ConfigError(
                f"planted_blocks lists {len(blocks)} classes, expected {self.n_classes}"
            )
        cleaned_blocks = []
        for c, entry in enumerate(blocks):
            pairs = sorted({(int(o), int(m)) for o, m in entry})
            if not pairs:
                raise ConfigError(f"planted_blocks for class {c} is empty")
            for o, m in pairs:
                if not 0 <= o < self.layout.object_count:
                    raise ConfigError(
                        f"planted object {o} for class {c} outside [0, {self.layout.object_count})"
                    )
                if not 0 <= m < self.layout.n_modalities:
                    raise ConfigError(
                        f"planted modality {m} for class {c} outside [0, {self.layout.n_modalities})"
                    )
            cleaned_blocks.append(tuple(pairs))
        object.__setattr__(self, "planted_blocks", tuple(cleaned_blocks))


@dataclass(frozen=True, eq=False)
class GeneratedData:
    """A synthetic dataset together with the weights that produced its labels."""

    dataset: Dataset
    true_w: np.ndarray = field(repr=False)
    true_u: np.ndarray = field(repr=False)


def generate(spec: SynthSpec) -> GeneratedData:
    """Draw a dataset whose labels come from planted ground-truth weights.

    Ground-truth entries on the planted blocks, then the feature matrices,
    are standard-normal draws from one seeded generator.  Labels are the
    argmax of the noiseless ground-truth scores; noise_sigma-scaled noise is
    then added to the features only, so the labels stay clean.
    """
    layout = spec.layout
    rng = np.random.default_rng(spec.seed)
    true_w = np.zeros((layout.d_t, spec.n_classes))
    true_u = np.zeros((layout.d_o, spec.n_classes))
    for c in range(spec.n_classes):
        for j in spec.planted_joints[c]:
            sl = layout.joint_slices[j]
            true_w[sl, c] = rng.standard_normal(sl.stop - sl.start)
    for c in range(spec.n_classes):
        for o, m in spec.planted_blocks[c]:
            sl = layout.object_block_slices[layout.object_block_index(o, m)]
            true_u[sl, c] = rng.standard_normal(sl.stop - sl.start)

    skeleton = rng.standard_normal((layout.d_t, spec.n_instances))
    objects = rng.standard_normal((layout.d_o, spec.n_instances))
    scores = skeleton.T @ true_w + objects.T @ true_u
    winners = np.argmax(scores, axis=1)
    labels = np.zeros((spec.n_instances, spec.n_classes))
    labels[np.arange(spec.n_instances), winners] = 1.0
    if spec.noise_sigma > 0:
        skeleton = skeleton + spec.noise_sigma * rng.standard_normal(skeleton.shape)
        objects = objects + spec.noise_sigma * rng.standard_normal(objects.shape)

    dataset = Dataset(
        layout=layout,
        skeleton=skeleton,
        objects=objects,
        labels=labels,
        class_names=tuple(f"class_{c}" for c in range(spec.n_classes)),
    )
    true_w.setflags(write=False)
    true_u.setflags(write=False)
    return GeneratedData(dataset=dataset, true_w=true_w, true_u=true_u)


# --- splitting ---------------------------------------------------------------


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle instances with the seed and cut them into train and test parts.

    Both sides keep the full layout, class list, and names; either side
    coming out empty is an error.
    """
    try:
        frac = float(train_fraction)
    except (TypeError, ValueError):
        raise ConfigError(f"train_fraction must be a number, got {train_fraction!r}") from None
    if not 0.0 < frac < 1.0:
        raise ConfigError(f"train_fraction must lie strictly between 0 and 1, got {frac}")
    seed = _checked_seed(seed)
    n = dataset.n_instances
    n_train = int(round(frac * n))
    if n_train == 0 or n_train == n:
        raise ConfigError(
            f"train_fraction {frac} leaves an empty side for {n} instances"
        )
    order = np.random.default_rng(seed).permutation(n)

    def take(idx):
        return Dataset(
            layout=dataset.layout,
            skeleton=dataset.skeleton[:, idx],
            objects=dataset.objects[:, idx],
            labels=None if dataset.labels is None else dataset.labels[idx],
            class_names=dataset.class_names,
            names=dataset.names,
        )

    return take(order[:n_train]), take(order[n_train:])


# --- dataset files -----------------------------------------------------------


def _atomic_write(path, text, overwrite):
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} already exists; pass overwrite=True to replace it")
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def save_dataset(dataset: Dataset, path, overwrite: bool = False) -> None:
    """Write a dataset file; see the module docstring for the format."""
    names = dataset.names
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "joint_dims": list(dataset.layout.joint_dims),
        "object_count": dataset.layout.object_count,
        "modality_dims": list(dataset.layout.modality_dims),
        "classes": list(dataset.class_names) if dataset.class_names else [],
        "names": {
            "joints": list(names.joints),
            "objects": list(names.objects),
            "modalities": list(names.modalities),
        },
    }
    lines = [json.dumps(header)]
    labeled = dataset.labels is not None
    if labeled:
        winners = np.argmax(dataset.labels, axis=1)
    for i in range(dataset.n_instances):
        row: list = dataset.skeleton[:, i].tolist() + dataset.objects[:, i].tolist()
        if labeled:
            row.append(dataset.class_names[int(winners[i])])
        lines.append(json.dumps(row))
    _atomic_write(path, "\n".join(lines) + "\n", overwrite)


def _parse_header(line):
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"line 1: header is not valid JSON ({exc.msg})") from exc
    if not isinstance(header, dict):
        raise DataFormatError("line 1: header must be a JSON object")
    if header.get("format") != DATASET_FORMAT:
        raise DataFormatError(
            f"line 1: format is {header.get('format')!r}, expected {DATASET_FORMAT!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise DataFormatError(
            f"line 1: unsupported version {header.get('version')!r}, expected {FORMAT_VERSION}"
        )
    for key in ("joint_dims", "object_count", "modality_dims", "classes"):
        if key not in header:
            raise DataFormatError(f"line 1: header is missing {key!r}")
    try:
        layout = FeatureLayout(
            joint_dims=tuple(header["joint_dims"]),
            object_count=header["object_count"],
            modality_dims=tuple(header["modality_dims"]),
        )
    except (LayoutError, TypeError) as exc:
        raise DataFormatError(f"line 1: bad layout ({exc})") from exc
    classes = header["classes"]
    if not isinstance(classes, list) or not all(isinstance(c, str) and c for c in classes):
        raise DataFormatError("line 1: classes must be a list of non-empty strings")
    if len(set(classes)) != len(classes):
        raise DataFormatError("line 1: classes contains duplicates")
    names_raw = header.get("names")
    names = None
    if names_raw is not None:
        if not isinstance(names_raw, dict):
            raise DataFormatError("line 1: names must be an object")
        try:
            names = GroupNames(
                joints=tuple(names_raw.get("joints", ())),
                objects=tuple(names_raw.get("objects", ())),
                modalities=tuple(names_raw.get("modalities", ())),
            )
            names.check_against(layout)
        except (LayoutError, ValidationError, TypeError) as exc:
            raise DataFormatError(f"line 1: bad names ({exc})") from exc
    return layout, tuple(classes), names


def _row_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_dataset(path) -> Dataset:
    """Read a dataset file back into memory; inverse of save_dataset."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataFormatError("file is empty")
    layout, classes, names = _parse_header(lines[0])
    width = layout.d_t + layout.d_o
    features = []
    label_indices: list[int] = []
    labeled = None
    class_index = {name: c for c, name in enumerate(classes)}
    for offset, raw in enumerate(lines[1:]):
        row_id = f"row {offset} (line {offset + 2})"
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{row_id}: not valid JSON ({exc.msg})") from exc
        if not isinstance(row, list):
            raise DataFormatError(f"{row_id}: expected a JSON array")
        has_label = len(row) == width + 1
        if not has_label and len(row) != width:
            raise DataFormatError(
                f"{row_id}: {len(row)} entries, expected {width} features"
                f" plus an optional label"
            )
        if labeled is None:
            labeled = has_label
        elif labeled != has_label:
            raise DataFormatError(f"{row_id}: mixes labeled and unlabeled rows")
        values = row[:width]
        for k, v in enumerate(values):
            if not _row_number(v):
                raise DataFormatError(f"{row_id}: entry {k} is not a number ({v!r})")
            if not math.isfinite(v):
                raise DataFormatError(f"{row_id}: entry {k} is not finite ({v!r})")
        if has_label:
            label = row[width]
            if not isinstance(label, str):
                raise DataFormatError(f"{row_id}: label must be a string, got {label!r}")
            if label not in class_index:
                raise DataFormatError(f"{row_id}: unknown label {label!r}")
            label_indices.append(class_index[label])
        features.append(values)
    if not features:
        raise DataFormatError("file has a header but no instance rows")
    data = np.array(features, dtype=np.float64).T
    labels = None
    if labeled:
        if len(classes) < 2:
            raise DataFormatError(
                "rows carry labels but the header declares fewer than two classes"
            )
        labels = np.zeros((len(features), len(classes)))
        labels[np.arange(len(features)), label_indices] = 1.0
    return Dataset(
        layout=layout,
        skeleton=data[: layout.d_t],
        objects=data[layout.d_t :],
        labels=labels,
        class_names=classes if classes else None,
        names=names,
    )


# --- model files -------------------------------------------------------------


def _standardizer_to_dict(transform: Standardizer | None):
    if transform is None:
        return None
    return {
        "skeleton_mean": transform.skeleton_mean.tolist(),
        "skeleton_scale": transform.skeleton_scale.tolist(),
        "object_mean": transform.object_mean.tolist(),
        "object_scale": transform.object_scale.tolist(),
        "skeleton_constant": list(transform.skeleton_constant),
        "object_constant": list(transform.object_constant),
    }


def _standardizer_from_dict(raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise DataFormatError("standardizer must be an object or null")
    try:
        return Standardizer(
            skeleton_mean=raw["skeleton_mean"],
            skeleton_scale=raw["skeleton_scale"],
            object_mean=raw["object_mean"],
            object_scale=raw["object_scale"],
            skeleton_constant=tuple(raw.get("skeleton_constant", ())),
            object_constant=tuple(raw.get("object_constant", ())),
        )
    except (KeyError, LayoutError, ValidationError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad standardizer ({exc})") from exc


def save_model(model: Model, path, overwrite: bool = False) -> None:
    """Write a model as one JSON document with row-major weight arrays."""
    config = model.hyperparams
    doc = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "layout": {
            "joint_dims": list(model.layout.joint_dims),
            "object_count": model.layout.object_count,
            "modality_dims": list(model.layout.modality_dims),
        },
        "classes": list(model.class_names),
        "names": {
            "joints": list(model.names.joints),
            "objects": list(model.names.objects),
            "modalities": list(model.names.modalities),
        },
        "hyperparams": {
            "lambda1": config.lambda1,
            "lambda2": config.lambda2,
            "tol": config.tol,
            "max_iters": config.max_iters,
            "epsilon": config.epsilon,
            "seed": config.seed,
        },
        "w": model.w.ravel(order="C").tolist(),
        "u": model.u.ravel(order="C").tolist(),
        "standardizer": _standardizer_to_dict(model.standardizer),
    }
    _atomic_write(path, json.dumps(doc, indent=2) + "\n", overwrite)


def load_model(path) -> Model:
    """Read a model file back into memory; inverse of save_model."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model file is not valid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise DataFormatError("model file must hold a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        raise DataFormatError(
            f"format is {doc.get('format')!r}, expected {MODEL_FORMAT!r}"
        )
    if doc.get("version") != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported version {doc.get('version')!r}, expected {FORMAT_VERSION}"
        )
    layout_raw = doc.get("layout")
    if not isinstance(layout_raw, dict):
        raise DataFormatError("layout must be an object")
    try:
        layout = FeatureLayout(
            joint_dims=tuple(layout_raw.get("joint_dims", ())),
            object_count=layout_raw.get("object_count", 0),
            modality_dims=tuple(layout_raw.get("modality_dims", ())),
        )
    except (LayoutError, TypeError) as exc:
        raise DataFormatError(f"bad layout ({exc})") from exc
    classes = doc.get("classes")
    if not isinstance(classes, list) or not classes:
        raise DataFormatError("classes must be a non-empty list")
    hp = doc.get("hyperparams")
    if not isinstance(hp, dict):
        raise DataFormatError("hyperparams must be an object")
    try:
        config = SolverConfig(
            lambda1=hp.get("lambda1", 0.1),
            lambda2=hp.get("lambda2", 0.1),
            tol=hp.get("tol", 1e-6),
            max_iters=hp.get("max_iters", 100),
            epsilon=hp.get("epsilon", 1e-8),
            seed=hp.get("seed", 0),
        )
    except ConfigError as exc:
        raise DataFormatError(f"bad hyperparams ({exc})") from exc
    n_classes = len(classes)
    w_flat = doc.get("w")
    u_flat = doc.get("u")
    if not isinstance(w_flat, list) or len(w_flat) != layout.d_t * n_classes:
        raise DataFormatError(
            f"w must hold {layout.d_t * n_classes} values for this layout and class count"
        )
    if not isinstance(u_flat, list) or len(u_flat) != layout.d_o * n_classes:
        raise DataFormatError(
            f"u must hold {layout.d_o * n_classes} values for this layout and class count"
        )
    for label, flat in (("w", w_flat), ("u", u_flat)):
        for v in flat:
            if not _row_number(v) or not math.isfinite(v):
                raise DataFormatError(f"{label} contains a non-finite or non-numeric entry")
    names_raw = doc.get("names")
    names = None
    if names_raw is not None:
        if not isinstance(names_raw, dict):
            raise DataFormatError("names must be an object or null")
        try:
            names = GroupNames(
                joints=tuple(names_raw.get("joints", ())),
                objects=tuple(names_raw.get("objects", ())),
                modalities=tuple(names_raw.get("modalities", ())),
            )
            names.check_against(layout)
        except (LayoutError, ValidationError, TypeError) as exc:
            raise DataFormatError(f"bad names ({exc})") from exc
    try:
        return Model(
            layout=layout,
            w=np.array(w_flat, dtype=np.float64).reshape(layout.d_t, n_classes),
            u=np.array(u_flat, dtype=np.float64).reshape(layout.d_o, n_classes),
            class_names=tuple(classes),
            hyperparams=config,
            names=names,
            standardizer=_standardizer_from_dict(doc.get("standardizer")),
        )
    except (LayoutError, ValidationError) as exc:
        raise DataFormatError(f"bad model content ({exc})") from exc
