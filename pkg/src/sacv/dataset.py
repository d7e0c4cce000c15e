"""Stratified datasets, CSV ingestion and synthetic domain-shift benchmarks.

A :class:`LabeledDataset` holds a feature matrix, binary labels and one stratum
identifier per row. Every normal row (label 0) carries the reserved stratum
``"NORMAL"``; fault rows carry their fault subgroup. Each row also keeps a
``row_ids`` entry naming its position in the source dataset, so that
partitions and split plans can be audited against the original rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParameterError

NORMAL = "NORMAL"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    strata: np.ndarray
    row_ids: np.ndarray | None = None
    # subsets (an OOD test set, a validation fold) may hold a single class
    partial: bool = field(default=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {X.shape}")
        n, d = X.shape
        z = np.asarray(self.labels)
        s = np.asarray(self.strata, dtype=object)
        if z.shape != (n,) or s.shape != (n,):
            raise DataError(
                f"features, labels and strata lengths differ: {n}, {z.shape}, {s.shape}")
        if n < 1 or d < 1:
            raise DataError("dataset needs at least one row and one feature")
        if not np.all((z == 0) | (z == 1)):
            raise DataError("labels must be 0 or 1")
        z = z.astype(np.int8)
        bad = np.flatnonzero((z == 0) != (s == NORMAL))
        if bad.size:
            i = int(bad[0])
            raise DataError(
                f"row {i}: label {z[i]} inconsistent with stratum {s[i]!r} "
                f"(label 0 rows must have stratum {NORMAL!r} and only they may)")
        if not self.partial and not (np.any(z == 0) and np.any(z == 1)):
            raise DataError("dataset needs at least one normal and one fault row")
        ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataError("row_ids length differs from number of rows")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(z))
        object.__setattr__(self, "strata", _frozen(s))
        object.__setattr__(self, "row_ids", _frozen(ids))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    @property
    def fault_strata(self) -> list[str]:
        """Sorted fault stratum identifiers present in the dataset."""
        return sorted({str(s) for s in self.strata if s != NORMAL})

    @property
    def all_strata(self) -> set[str]:
        return {str(s) for s in self.strata}

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx],
                              self.strata[idx], self.row_ids[idx], partial=True)

    def with_features(self, X: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(X, self.labels, self.strata, self.row_ids, partial=self.partial)

    def fingerprint(self) -> str:
        """Content hash over row ids, labels and features (for audit trails)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.row_ids).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(np.ascontiguousarray(self.features).tobytes())
        return h.hexdigest()[:16]


def concat(parts: Sequence[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.strata for p in parts]),
        np.concatenate([p.row_ids for p in parts]),
        partial=all(p.partial for p in parts),
    )


@dataclass(frozen=True, eq=False)
class PartitionedData:
    """Development set, in-distribution test set and held-out OOD test set."""

    dev: LabeledDataset
    test_id: LabeledDataset
    test_ood: LabeledDataset
    held_out_stratum: str

    @property
    def held_out_strata(self) -> tuple[str, ...]:
        return tuple(self.held_out_stratum.split("+"))


# --------------------------------------------------------------------------
# CSV


def load_csv(path, partial: bool = False) -> LabeledDataset:
    """Read ``f0,...,f{d-1},label,stratum`` rows; row order is preserved.

    ``partial=True`` accepts single-class files such as a saved OOD test set.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header") from None
        header = [h.strip() for h in header]
        if "label" not in header or "stratum" not in header:
            raise DataError(f"{path}: header must contain 'label' and 'stratum' columns")
        li, si = header.index("label"), header.index("stratum")
        fcols = [i for i in range(len(header)) if i not in (li, si)]
        if not fcols:
            raise DataError(f"{path}: no feature columns")
        X, z, s = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats = [float(row[i]) for i in fcols]
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: bad feature value ({exc})") from None
            if not all(np.isfinite(feats)):
                raise DataError(f"{path}: row {lineno}: non-finite feature value")
            lab = row[li].strip()
            if lab not in ("0", "1"):
                raise DataError(f"{path}: row {lineno}: label must be 0 or 1, got {lab!r}")
            stratum = row[si].strip()
            if (lab == "0") != (stratum == NORMAL):
                raise DataError(
                    f"{path}: row {lineno}: label {lab} inconsistent with stratum {stratum!r}")
            X.append(feats)
            z.append(int(lab))
            s.append(stratum)
    if not X:
        raise DataError(f"{path}: no rows")
    try:
        return LabeledDataset(np.array(X), np.array(z), np.array(s, dtype=object), partial=partial)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_csv(ds: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(ds.d)] + ["label", "stratum"])
        for x, z, s in zip(ds.features, ds.labels, ds.strata):
            w.writerow([repr(float(v)) for v in x] + [int(z), s])


# --------------------------------------------------------------------------
# partitioning


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_groups(groups: np.ndarray, row_ids: np.ndarray, fraction: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split positions per group, sending ``round(fraction * size)`` of each to the second part.

    Groups are visited in sorted order and rows are ordered by ``row_ids`` before
    shuffling, so the result depends on row identity, not row position. Each
    group with at least two rows keeps at least one row on each side.
    """
    first, second = [], []
    for g in sorted(set(groups.tolist())):
        pos = np.flatnonzero(groups == g)
        pos = pos[np.argsort(row_ids[pos], kind="stable")]
        pos = pos[rng.permutation(pos.size)]
        k = _round_half_up(fraction * pos.size)
        if pos.size >= 2:
            k = min(max(k, 1), pos.size - 1)
        second.append(pos[:k])
        first.append(pos[k:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def _partition(ds: LabeledDataset, held_out: Sequence[str], id_test_fraction: float,
               rng: np.random.Generator) -> PartitionedData:
    if not 0.0 < id_test_fraction < 1.0:
        raise ParameterError(f"id_test_fraction must lie in (0, 1), got {id_test_fraction}")
    held_out = list(held_out)
    if not held_out:
        raise ParameterError("at least one stratum must be held out")
    present = set(ds.fault_strata)
    for h in held_out:
        if h == NORMAL:
            raise ParameterError(f"{NORMAL!r} cannot be held out as OOD")
        if h not in present:
            raise ParameterError(f"held-out stratum {h!r} not present in dataset")
    if not present - set(held_out):
        raise ParameterError("holding out every fault stratum leaves no fault data for development")
    ood_mask = np.isin(ds.strata, held_out)
    ood = np.flatnonzero(ood_mask)
    rest = np.flatnonzero(~ood_mask)
    for g in set(ds.strata[rest].tolist()):
        if np.count_nonzero(ds.strata[rest] == g) < 2:
            raise DataError(f"stratum {g!r} needs at least 2 rows to appear in dev and test_id")
    dev_pos, test_pos = split_groups(ds.strata[rest], ds.row_ids[rest], id_test_fraction, rng)
    return PartitionedData(
        dev=ds.subset(rest[dev_pos]),
        test_id=ds.subset(rest[test_pos]),
        test_ood=ds.subset(ood),
        held_out_stratum="+".join(held_out),
    )


def partition_leave_one_stratum(ds: LabeledDataset, held_out: str,
                                id_test_fraction: float = 0.3, seed: int = 0) -> PartitionedData:
    """Send every ``held_out`` fault row to the OOD test set; split the rest per stratum."""
    return _partition(ds, [held_out], id_test_fraction, np.random.default_rng(seed))


def leave_one_stratum_partitions(ds: LabeledDataset, id_test_fraction: float = 0.3,
                                 seed: int = 0) -> list[PartitionedData]:
    return [partition_leave_one_stratum(ds, s, id_test_fraction, seed) for s in ds.fault_strata]


# --------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, ds: LabeledDataset) -> "Standardizer":
        mean = ds.features.mean(axis=0)
        std = ds.features.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, ds: LabeledDataset) -> LabeledDataset:
        return ds.with_features((ds.features - self.mean) / self.std)


def standardize(part: PartitionedData) -> PartitionedData:
    """Scale all three sets with statistics computed on the development set only."""
    sc = Standardizer.fit(part.dev)
    return PartitionedData(sc.transform(part.dev), sc.transform(part.test_id),
                           sc.transform(part.test_ood), part.held_out_stratum)


# --------------------------------------------------------------------------
# synthetic benchmarks


@dataclass(frozen=True)
class ClusterSpec:
    center: tuple[float, ...]
    scale: float
    n: int
    stratum: str = NORMAL


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian cluster per stratum; covariance is ``scale * I``."""

    d: int
    strata_specs: tuple[ClusterSpec, ...]
    normal_spec: ClusterSpec
    ood_strata: tuple[str, ...]
    seed: int = 0
    id_test_fraction: float = 0.3
    name: str = "synthetic"

    def validate(self) -> None:
        if self.d < 1:
            raise ParameterError("d must be >= 1")
        ids = [c.stratum for c in self.strata_specs]
        if len(set(ids)) != len(ids):
            raise ParameterError("duplicate stratum ids in strata_specs")
        if NORMAL in ids:
            raise ParameterError(f"{NORMAL!r} is reserved for the normal cluster")
        for c in (self.normal_spec, *self.strata_specs):
            if len(c.center) != self.d:
                raise ParameterError(f"center of {c.stratum!r} has length {len(c.center)}, expected {self.d}")
            if not c.scale > 0:
                raise ParameterError(f"covariance scale of {c.stratum!r} must be > 0, got {c.scale}")
            if c.n < 1:
                raise ParameterError(f"sample count of {c.stratum!r} must be >= 1")
        if not set(self.ood_strata) <= set(ids):
            raise ParameterError(f"ood_strata {self.ood_strata} not a subset of {ids}")

    def to_dict(self) -> dict:
        def cl(c: ClusterSpec) -> dict:
            return {"stratum": c.stratum, "center": list(c.center), "scale": c.scale, "n": c.n}
        return {
            "name": self.name,
            "d": self.d,
            "strata_specs": [cl(c) for c in self.strata_specs],
            "normal_spec": cl(self.normal_spec),
            "ood_strata": list(self.ood_strata),
            "seed": self.seed,
            "id_test_fraction": self.id_test_fraction,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        def cl(c: dict, default: str) -> ClusterSpec:
            return ClusterSpec(tuple(float(v) for v in c["center"]), float(c["scale"]),
                               int(c["n"]), str(c.get("stratum", default)))
        try:
            return cls(
                d=int(doc["d"]),
                strata_specs=tuple(cl(c, "") for c in doc["strata_specs"]),
                normal_spec=cl(doc["normal_spec"], NORMAL),
                ood_strata=tuple(doc.get("ood_strata", ())),
                seed=int(doc.get("seed", 0)),
                id_test_fraction=float(doc.get("id_test_fraction", 0.3)),
                name=str(doc.get("name", "synthetic")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed synthetic spec: {exc!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls.from_dict(json.loads(text))


def sample_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Draw every cluster (normal first, then strata in spec order) as one dataset."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    X, z, s = [], [], []
    for c in (spec.normal_spec, *spec.strata_specs):
        pts = np.asarray(c.center) + np.sqrt(c.scale) * rng.standard_normal((c.n, spec.d))
        X.append(pts)
        lab = 0 if c is spec.normal_spec else 1
        z.append(np.full(c.n, lab))
        s.append(np.full(c.n, NORMAL if lab == 0 else c.stratum, dtype=object))
    return LabeledDataset(np.vstack(X), np.concatenate(z), np.concatenate(s))


def generate_synthetic(spec: SyntheticSpec) -> PartitionedData:
    """Sample the benchmark and route ``ood_strata`` rows to the OOD test set.

    The remaining strata are split per stratum between dev and test_id at
    ``spec.id_test_fraction``. Deterministic given ``spec.seed``.
    """
    ds = sample_synthetic(spec)
    if not spec.ood_strata:
        raise ParameterError("synthetic spec needs at least one ood stratum")
    rng = np.random.default_rng([spec.seed, 1])
    return _partition(ds, list(spec.ood_strata), spec.id_test_fraction, rng)


def index_sets(part: PartitionedData) -> Iterable[np.ndarray]:
    return part.dev.row_ids, part.test_id.row_ids, part.test_ood.row_ids
