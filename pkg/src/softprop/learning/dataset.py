"""Aligned sensing records and their CSV form."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from ..errors import DatasetError
from ..io import read_csv_rows, write_csv

POSE = ("Dx", "Dy", "Dz", "Drx", "Dry", "Drz")
WRENCH = ("Fx", "Fy", "Fz", "Tx", "Ty", "Tz")
WRENCH_LIMITS = np.array([20.0, 20.0, 10.0, 2.0, 2.0, 0.5])
FEATURE_SETS = {"D": 1, "D+Dd": 2, "D+Dd+Ddd": 3}


@dataclass
class Dataset:
    split: np.ndarray  # "train" / "test"
    protocol: np.ndarray  # protocol index
    t: np.ndarray  # global timestamp (s), unique per record
    probe_mm: np.ndarray
    warmup: np.ndarray  # bool: motion features not yet defined
    D: np.ndarray
    D_dot: np.ndarray
    D_ddot: np.ndarray
    wrench: np.ndarray
    nodes: Optional[np.ndarray] = None  # (n, 78) mm

    def __post_init__(self):
        n = len(self.t)
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and len(v) != n:
                raise DatasetError(f"column {f.name} has {len(v)} rows, expected {n}")

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls, with_nodes=False) -> "Dataset":
        z6 = np.zeros((0, 6))
        return cls(
            np.zeros(0, dtype="<U5"), np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros(0, bool),
            z6, z6.copy(), z6.copy(), z6.copy(), np.zeros((0, 78)) if with_nodes else None,
        )

    def subset(self, mask) -> "Dataset":
        kw = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[mask]) for f in fields(self)}
        return Dataset(**kw)

    def select(self, split: str, drop_warmup: bool = True) -> "Dataset":
        m = self.split == split
        if drop_warmup:
            m &= ~self.warmup
        return self.subset(m)

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        if not parts:
            return Dataset.empty()
        kw = {}
        for f in fields(Dataset):
            vals = [getattr(p, f.name) for p in parts]
            kw[f.name] = None if any(v is None for v in vals) else np.concatenate(vals)
        return Dataset(**kw)

    def validate(self):
        arrays = [self.t, self.probe_mm, self.D, self.D_dot, self.D_ddot, self.wrench]
        if self.nodes is not None:
            arrays.append(self.nodes)
        if any(np.isnan(a).any() for a in arrays):
            raise DatasetError("dataset contains NaN")
        over = np.abs(self.wrench) > WRENCH_LIMITS
        if over.any():
            ch = WRENCH[int(np.argmax(over.any(axis=0)))]
            raise DatasetError(f"wrench label {ch} exceeds its declared maximum")
        check_leakage(self)

    def features(self, feature_set: str = "D+Dd"):
        if feature_set not in FEATURE_SETS:
            raise DatasetError(f"feature set must be one of {list(FEATURE_SETS)}")
        blocks = [self.D, self.D_dot, self.D_ddot][: FEATURE_SETS[feature_set]]
        return np.hstack(blocks)


def check_leakage(ds: Dataset):
    """Train and test must not share any timestamp."""
    tr = set(np.round(ds.t[ds.split == "train"], 9).tolist())
    te = set(np.round(ds.t[ds.split == "test"], 9).tolist())
    shared = tr & te
    if shared:
        raise DatasetError(f"split leakage: {len(shared)} timestamps appear in both train and test")


def _header(with_nodes, n_nodes=26):
    h = ["split", "protocol", "t_s", "probe_mm", "warmup", *POSE, *("d" + c for c in POSE), *("dd" + c for c in POSE), *WRENCH]
    if with_nodes:
        h += [f"n{i}_{ax}" for i in range(n_nodes) for ax in "xyz"]
    return h


def write_dataset_csv(path, ds: Dataset):
    with_nodes = ds.nodes is not None
    n_nodes = ds.nodes.shape[1] // 3 if with_nodes else 0
    rows = []
    for i in range(len(ds)):
        row = [ds.split[i], int(ds.protocol[i]), ds.t[i], ds.probe_mm[i], bool(ds.warmup[i]),
               *ds.D[i], *ds.D_dot[i], *ds.D_ddot[i], *ds.wrench[i]]
        if with_nodes:
            row += list(ds.nodes[i])
        rows.append(row)
    write_csv(path, _header(with_nodes, n_nodes), rows, kind="dataset")


def read_dataset_csv(path) -> Dataset:
    header, rows = read_csv_rows(path, expected_kind="dataset")
    if header[:5] != ["split", "protocol", "t_s", "probe_mm", "warmup"]:
        raise DatasetError(f"{path}: not a dataset file")
    if not rows:
        return Dataset.empty(with_nodes=len(header) > 29)
    split = np.array([r[0] for r in rows])
    num = np.asarray([r[1:] for r in rows], dtype=float)
    nodes = num[:, 28:] if num.shape[1] > 28 else None
    return Dataset(
        split=split,
        protocol=num[:, 0].astype(int),
        t=num[:, 1],
        probe_mm=num[:, 2],
        warmup=num[:, 3].astype(bool),
        D=num[:, 4:10],
        D_dot=num[:, 10:16],
        D_ddot=num[:, 16:22],
        wrench=num[:, 22:28],
        nodes=nodes,
    )
