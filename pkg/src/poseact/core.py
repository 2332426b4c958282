"""Block-structured linear activity models.

An instance pairs a skeleton feature vector t (one block per body joint)
with an object feature vector o (one block per tracked object and attribute
modality).  A model keeps one weight column per activity class and scores an
instance as t'w_c + o'u_c; the class with the largest raw score wins, ties
going to the lowest class index.  Instances sit in the *columns* of the data
matrices, so a dataset of N instances stores skeleton as d_t x N and objects
as d_o x N, with one-hot labels as rows of an N x C matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, LayoutError, ValidationError

if TYPE_CHECKING:  # pragma: no cover - import cycles broken at runtime
    from .data import Standardizer
    from .solver import SolverConfig

__all__ = [
    "FeatureLayout",
    "GroupNames",
    "Dataset",
    "Model",
    "default_names",
    "skeletal_norm",
    "attribute_norm",
    "loss",
    "objective",
    "predict",
    "predict_batch",
]


def _positive_int(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise LayoutError(f"{what} must be an integer, got {value!r}")
    if value < 1:
        raise LayoutError(f"{what} must be >= 1, got {value}")
    return int(value)


def _positive_int_tuple(values, what):
    try:
        items = tuple(values)
    except TypeError:
        raise LayoutError(f"{what} must be a sequence of positive integers") from None
    if not items:
        raise LayoutError(f"{what} must not be empty")
    return tuple(_positive_int(v, f"every entry of {what}") for v in items)


def _str_tuple(values, what):
    items = tuple(values)
    for v in items:
        if not isinstance(v, str) or not v:
            raise ValidationError(f"{what} must be non-empty strings, got {v!r}")
    return items


@dataclass(frozen=True)
class FeatureLayout:
    """Block structure shared by datasets and models.

    joint_dims[j] is the feature dimension of body joint j.  Each of the
    object_count objects carries one block per attribute modality, of size
    modality_dims[m], laid out object-major: all M modality blocks of object
    0 first, then object 1, and so on.
    """

    joint_dims: tuple[int, ...]
    object_count: int
    modality_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "joint_dims", _positive_int_tuple(self.joint_dims, "joint_dims")
        )
        object.__setattr__(
            self, "modality_dims", _positive_int_tuple(self.modality_dims, "modality_dims")
        )
        object.__setattr__(
            self, "object_count", _positive_int(self.object_count, "object_count")
        )

    @property
    def n_joints(self) -> int:
        return len(self.joint_dims)

    @property
    def n_modalities(self) -> int:
        return len(self.modality_dims)

    @property
    def n_object_blocks(self) -> int:
        return self.object_count * len(self.modality_dims)

    @cached_property
    def d_t(self) -> int:
        """Total skeleton feature dimension."""
        return sum(self.joint_dims)

    @cached_property
    def d_o(self) -> int:
        """Total object feature dimension."""
        return self.object_count * sum(self.modality_dims)

    @cached_property
    def joint_slices(self) -> tuple[slice, ...]:
        """One slice into the skeleton axis per joint."""
        slices, stop = [], 0
        for dim in self.joint_dims:
            slices.append(slice(stop, stop + dim))
            stop += dim
        return tuple(slices)

    @cached_property
    def object_block_slices(self) -> tuple[slice, ...]:
        """One slice into the object axis per (object, modality) block, object-major."""
        slices, stop = [], 0
        for _ in range(self.object_count):
            for dim in self.modality_dims:
                slices.append(slice(stop, stop + dim))
                stop += dim
        return tuple(slices)

    def object_block_index(self, obj: int, modality: int) -> int:
        """Flat index of object obj's block for the given modality."""
        if not 0 <= obj < self.object_count:
            raise LayoutError(f"object index {obj} out of range [0, {self.object_count})")
        if not 0 <= modality < self.n_modalities:
            raise LayoutError(
                f"modality index {modality} out of range [0, {self.n_modalities})"
            )
        return obj * self.n_modalities + modality


@dataclass(frozen=True)
class GroupNames:
    """Human-readable labels for joints, objects, and modalities."""

    joints: tuple[str, ...]
    objects: tuple[str, ...]
    modalities: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "joints", _str_tuple(self.joints, "joint names"))
        object.__setattr__(self, "objects", _str_tuple(self.objects, "object names"))
        object.__setattr__(self, "modalities", _str_tuple(self.modalities, "modality names"))

    def check_against(self, layout: FeatureLayout) -> None:
        if len(self.joints) != layout.n_joints:
            raise LayoutError(
                f"{len(self.joints)} joint names for {layout.n_joints} joints"
            )
        if len(self.objects) != layout.object_count:
            raise LayoutError(
                f"{len(self.objects)} object names for {layout.object_count} objects"
            )
        if len(self.modalities) != layout.n_modalities:
            raise LayoutError(
                f"{len(self.modalities)} modality names for {layout.n_modalities} modalities"
            )


def default_names(layout: FeatureLayout) -> GroupNames:
    """Placeholder names used when a producer supplies none."""
    return GroupNames(
        joints=tuple(f"joint_{j}" for j in range(layout.n_joints)),
        objects=tuple(f"object_{o}" for o in range(layout.object_count)),
        modalities=tuple(f"modality_{m}" for m in range(layout.n_modalities)),
    )


def _frozen_matrix(value, what):
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise LayoutError(f"{what} must be a 2-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _require_finite(arr, what):
    if not np.isfinite(arr).all():
        raise ValidationError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable paired observations with optional one-hot labels.

    skeleton is d_t x N and objects is d_o x N; instance i occupies column i
    of both.  labels, when present, is N x C with exactly one 1.0 per row and
    0.0 elsewhere, and class_names gives the string behind each column.
    """

    layout: FeatureLayout
    skeleton: np.ndarray = field(repr=False)
    objects: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    class_names: tuple[str, ...] | None = None
    names: GroupNames | None = None

    def __post_init__(self):
        skeleton = _frozen_matrix(self.skeleton, "skeleton matrix")
        objects = _frozen_matrix(self.objects, "object matrix")
        if skeleton.shape[0] != self.layout.d_t:
            raise LayoutError(
                f"skeleton matrix has {skeleton.shape[0]} rows, layout expects {self.layout.d_t}"
            )
        if objects.shape[0] != self.layout.d_o:
            raise LayoutError(
                f"object matrix has {objects.shape[0]} rows, layout expects {self.layout.d_o}"
            )
        if skeleton.shape[1] != objects.shape[1]:
            raise LayoutError(
                f"skeleton holds {skeleton.shape[1]} instances but objects holds {objects.shape[1]}"
            )
        if skeleton.shape[1] < 1:
            raise ValidationError("a dataset needs at least one instance")
        _require_finite(skeleton, "skeleton matrix")
        _require_finite(objects, "object matrix")
        object.__setattr__(self, "skeleton", skeleton)
        object.__setattr__(self, "objects", objects)

        if self.labels is not None:
            labels = _frozen_matrix(self.labels, "label matrix")
            if labels.shape[0] != skeleton.shape[1]:
                raise LayoutError(
                    f"label matrix has {labels.shape[0]} rows for {skeleton.shape[1]} instances"
                )
            if labels.shape[1] < 2:
                raise ValidationError("labeled data needs at least two classes")
            is_one = labels == 1.0
            if not np.all(is_one | (labels == 0.0)) or not np.all(is_one.sum(axis=1) == 1):
                raise ValidationError(
                    "labels must be one-hot rows: exactly one 1.0, all other entries 0.0"
                )
            object.__setattr__(self, "labels", labels)
            class_names = self.class_names
            if class_names is None:
                class_names = tuple(f"class_{c}" for c in range(labels.shape[1]))
            class_names = _str_tuple(class_names, "class names")
            if len(class_names) != labels.shape[1]:
                raise LayoutError(
                    f"{len(class_names)} class names for {labels.shape[1]} label columns"
                )
            if len(set(class_names)) != len(class_names):
                raise ValidationError("class names must be unique")
            object.__setattr__(self, "class_names", class_names)
        elif self.class_names is not None:
            object.__setattr__(
                self, "class_names", _str_tuple(self.class_names, "class names")
            )

        names = self.names if self.names is not None else default_names(self.layout)
        names.check_against(self.layout)
        object.__setattr__(self, "names", names)

    @property
    def n_instances(self) -> int:
        return self.skeleton.shape[1]

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else self.labels.shape[1]

    def instance(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Skeleton and object feature vectors of instance i (read-only views)."""
        if not 0 <= i < self.n_instances:
            raise LayoutError(f"instance index {i} out of range [0, {self.n_instances})")
        return self.skeleton[:, i], self.objects[:, i]

    def class_counts(self) -> dict[str, int] | None:
        """Instances per class, or None for unlabeled data."""
        if self.labels is None:
            return None
        counts = self.labels.sum(axis=0).astype(int)
        return {name: int(n) for name, n in zip(self.class_names, counts)}


@dataclass(frozen=True, eq=False)
class Model:
    """Per-class weight columns over skeleton (w) and object (u) features.

    names and standardizer are optional metadata carried along so reports
    can label blocks and so raw inputs can be re-scaled the way the training
    data was.  Scoring itself never touches either.
    """

    layout: FeatureLayout
    w: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    class_names: tuple[str, ...]
    hyperparams: "SolverConfig"
    names: GroupNames | None = None
    standardizer: "Standardizer | None" = field(default=None, repr=False)

    def __post_init__(self):
        w = _frozen_matrix(self.w, "skeleton weight matrix")
        u = _frozen_matrix(self.u, "object weight matrix")
        class_names = _str_tuple(self.class_names, "class names")
        if not class_names:
            raise ValidationError("a model needs at least one class")
        if len(set(class_names)) != len(class_names):
            raise ValidationError("class names must be unique")
        if w.shape != (self.layout.d_t, len(class_names)):
            raise LayoutError(
                f"skeleton weights have shape {w.shape}, expected "
                f"({self.layout.d_t}, {len(class_names)})"
            )
        if u.shape != (self.layout.d_o, len(class_names)):
            raise LayoutError(
                f"object weights have shape {u.shape}, expected "
                f"({self.layout.d_o}, {len(class_names)})"
            )
        _require_finite(w, "skeleton weight matrix")
        _require_finite(u, "object weight matrix")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "class_names", class_names)
        names = self.names if self.names is not None else default_names(self.layout)
        names.check_against(self.layout)
        object.__setattr__(self, "names", names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


# --- norms, loss, scoring -------------------------------------------------


def _check_weight_matrix(mat, rows, what):
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise LayoutError(
            f"{what} must have {rows} rows, got shape {getattr(arr, 'shape', None)}"
        )
    return arr


def _block_norm_sum(mat: np.ndarray, slices: tuple[slice, ...]) -> float:
    total = 0.0
    for sl in slices:
        total += float(np.linalg.norm(mat[sl], axis=0).sum())
    return total


def skeletal_norm(w, layout: FeatureLayout) -> float:
    """Sum over classes and joints of the Euclidean norm of each joint block.

    Behaves like an l1 norm across joints and an l2 norm inside each joint,
    which is what drives whole joints to zero under regularization.
    """
    w = _check_weight_matrix(w, layout.d_t, "skeleton weight matrix")
    return _block_norm_sum(w, layout.joint_slices)


def attribute_norm(u, layout: FeatureLayout) -> float:
    """Sum over classes, objects, and modalities of per-block Euclidean norms."""
    u = _check_weight_matrix(u, layout.d_o, "object weight matrix")
    return _block_norm_sum(u, layout.object_block_slices)


def loss(dataset: Dataset, w, u) -> float:
    """Squared Frobenius residual of the joint linear fit against the labels."""
    if dataset.labels is None:
        raise ValidationError("loss needs a labeled dataset")
    w = _check_weight_matrix(w, dataset.layout.d_t, "skeleton weight matrix")
    u = _check_weight_matrix(u, dataset.layout.d_o, "object weight matrix")
    if w.shape[1] != dataset.labels.shape[1] or u.shape[1] != dataset.labels.shape[1]:
        raise LayoutError(
            f"weight matrices have {w.shape[1]} and {u.shape[1]} columns "
            f"for {dataset.labels.shape[1]} classes"
        )
    r = dataset.skeleton.T @ w + dataset.objects.T @ u - dataset.labels
    return float(np.sum(r * r))


def objective(dataset: Dataset, w, u, lambda1: float, lambda2: float) -> float:
    """Loss plus lambda1 times the skeletal norm plus lambda2 times the attribute norm."""
    for name, lam in (("lambda1", lambda1), ("lambda2", lambda2)):
        if not np.isfinite(lam) or lam < 0:
            raise ConfigError(f"{name} must be a finite value >= 0, got {lam!r}")
    return (
        loss(dataset, w, u)
        + lambda1 * skeletal_norm(w, dataset.layout)
        + lambda2 * attribute_norm(u, dataset.layout)
    )


def predict(model: Model, skeleton_vec, object_vec) -> tuple[int, np.ndarray]:
    """Score one instance and return (class index, raw per-class scores).

    Scores are plain affine responses t'w_c + o'u_c with no squashing; exact
    ties resolve to the lowest class index.
    """
    t = np.asarray(skeleton_vec, dtype=np.float64)
    o = np.asarray(object_vec, dtype=np.float64)
    if t.shape != (model.layout.d_t,):
        raise LayoutError(
            f"skeleton vector has shape {t.shape}, expected ({model.layout.d_t},)"
        )
    if o.shape != (model.layout.d_o,):
        raise LayoutError(
            f"object vector has shape {o.shape}, expected ({model.layout.d_o},)"
        )
    if not np.isfinite(t).all() or not np.isfinite(o).all():
        raise ValidationError("input vectors contain non-finite values")
    scores = t @ model.w + o @ model.u
    return int(np.argmax(scores)), scores


def predict_batch(model: Model, dataset: Dataset) -> tuple[np.ndarray, float | None]:
    """Predicted class indices for every instance, plus accuracy when labeled."""
    if dataset.layout != model.layout:
        raise LayoutError("dataset layout does not match model layout")
    scores = dataset.skeleton.T @ model.w + dataset.objects.T @ model.u
    predicted = np.argmax(scores, axis=1)
    if dataset.labels is None:
        return predicted, None
    if dataset.class_names != model.class_names:
        raise ValidationError(
            f"dataset classes {dataset.class_names} do not match "
            f"model classes {model.class_names}"
        )
    truth = np.argmax(dataset.labels, axis=1)
    return predicted, float(np.mean(predicted == truth))
