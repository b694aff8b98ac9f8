"""UEA-style ``.ts`` ingestion: parsing, normalization, padding, batching.

The text format: header directives prefixed with ``@`` (``@problemName``,
``@classLabel``, ...), ``#`` comment lines, then one instance per line after
``@data`` with channels separated by ``:``, values within a channel separated
by commas, and the trailing field holding the class label.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from danet.tensor import Tensor

__all__ = [
    "BatchPlan",
    "ChannelStats",
    "MvDataset",
    "ParseError",
    "SchemaError",
    "VocabularyError",
    "dump_debug_json",
    "make_batches",
    "pad_to_multiple",
    "parse_ts_file",
    "write_ts_file",
    "zscore_normalize",
]


class ParseError(ValueError):
    """A data line or header could not be read; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ValueError):
    """Instances disagree on structure (channel counts, stats shape)."""


class VocabularyError(ValueError):
    """A label falls outside the declared class vocabulary."""


@dataclass(frozen=True)
class MvDataset:
    """A labelled multivariate time series collection.

    instances: per-instance [channels x timestamps] float64 matrices
    labels: class index per instance, into class_names
    class_names: ordered label vocabulary
    split: "train" or "test"
    name: dataset identifier
    """

    instances: list[np.ndarray]
    labels: list[int]
    class_names: list[str]
    split: str = "train"
    name: str = "unnamed"

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        if len(self.labels) != len(self.instances):
            raise SchemaError(
                f"{len(self.labels)} labels for {len(self.instances)} instances"
            )
        channels = {inst.shape[0] for inst in self.instances}
        if len(channels) > 1:
            raise SchemaError(f"inconsistent channel counts {sorted(channels)}")
        for lab in self.labels:
            if not 0 <= lab < len(self.class_names):
                raise VocabularyError(
                    f"label index {lab} outside vocabulary of {len(self.class_names)}"
                )

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    @property
    def n_channels(self) -> int:
        return self.instances[0].shape[0] if self.instances else 0

    @property
    def n_timestamps(self) -> int:
        return self.instances[0].shape[1] if self.instances else 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class BatchPlan:
    """A deterministic pass order over a dataset.

    The permutation comes from a seeded PCG64 generator, so the same seed and
    size always reproduce the same order, on any platform.
    """

    batch_size: int
    shuffle_seed: int
    order: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.order and sorted(self.order) != list(range(len(self.order))):
            raise ValueError("order is not a permutation of 0..N-1")

    @classmethod
    def for_dataset(
        cls, n: int, batch_size: int, shuffle_seed: int, shuffle: bool = True
    ) -> "BatchPlan":
        if shuffle:
            order = tuple(int(i) for i in np.random.default_rng(shuffle_seed).permutation(n))
        else:
            order = tuple(range(n))
        return cls(batch_size=batch_size, shuffle_seed=shuffle_seed, order=order)


class ChannelStats(NamedTuple):
    """Per-channel normalization statistics."""

    mean: np.ndarray
    std: np.ndarray


def _infer_split(path: str) -> str:
    stem = os.path.basename(path).rsplit(".", 1)[0].upper()
    return "test" if stem.endswith("_TEST") else "train"


def _parse_channel(text: str, line_no: int) -> np.ndarray:
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            raise ParseError("empty value in channel", line_no)
        try:
            values.append(float(token))
        except ValueError:
            raise ParseError(f"non-numeric value {token!r}", line_no) from None
    return np.array(values, dtype=np.float64)


def parse_ts_file(path: str) -> MvDataset:
    """Read one ``.ts`` file into an MvDataset.

    Header directives are consumed case-insensitively; a ``@classLabel true``
    directive fixes the label vocabulary and its order. Instances whose
    channels are shorter than the dataset maximum are right-padded with zeros
    so every instance ends up the same length.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()

    name = os.path.basename(path).rsplit(".", 1)[0]
    for suffix in ("_TRAIN", "_TEST"):
        if name.upper().endswith(suffix):
            name = name[: -len(suffix)]
    declared_vocab: list[str] | None = None
    in_data = False
    raw_instances: list[list[np.ndarray]] = []
    raw_labels: list[str] = []

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@"):
            if in_data:
                raise ParseError("directive after @data", line_no)
            head, _, rest = line.partition(" ")
            key = head[1:].lower()
            if key == "problemname" and rest.strip():
                name = rest.strip()
            elif key == "classlabel":
                fields = rest.split()
                if fields and fields[0].lower() == "true":
                    declared_vocab = fields[1:]
            elif key == "data":
                in_data = True
            continue
        if not in_data:
            raise ParseError("data line before @data directive", line_no)
        fields = line.split(":")
        if len(fields) < 2:
            raise ParseError("missing class label field", line_no)
        *channel_texts, label = fields
        label = label.strip()
        if not label:
            raise ParseError("missing class label field", line_no)
        raw_instances.append(
            [_parse_channel(ch, line_no) for ch in channel_texts]
        )
        raw_labels.append(label)

    if not raw_instances:
        raise ParseError("no data lines found", len(lines) or None)

    n_channels = len(raw_instances[0])
    for idx, chans in enumerate(raw_instances):
        if len(chans) != n_channels:
            raise SchemaError(
                f"instance {idx} has {len(chans)} channels, expected {n_channels}"
            )

    if declared_vocab is not None:
        vocab = list(declared_vocab)
        index = {label: i for i, label in enumerate(vocab)}
        for label in raw_labels:
            if label not in index:
                raise VocabularyError(
                    f"label {label!r} not in declared vocabulary {vocab}"
                )
    else:
        vocab = sorted(set(raw_labels))
        index = {label: i for i, label in enumerate(vocab)}

    max_t = max(ch.size for chans in raw_instances for ch in chans)
    instances = []
    for chans in raw_instances:
        mat = np.zeros((n_channels, max_t), dtype=np.float64)
        for c, ch in enumerate(chans):
            mat[c, : ch.size] = ch
        instances.append(mat)

    return MvDataset(
        instances=instances,
        labels=[index[label] for label in raw_labels],
        class_names=vocab,
        split=_infer_split(path),
        name=name,
    )


def write_ts_file(ds: MvDataset, path: str) -> None:
    """Serialize a dataset back to ``.ts`` text (debug writer).

    parse -> write -> parse is value-identical for equal-length data.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"@problemName {ds.name}\n")
        fh.write(f"@dimensions {ds.n_channels}\n")
        fh.write(f"@seriesLength {ds.n_timestamps}\n")
        fh.write(f"@classLabel true {' '.join(ds.class_names)}\n")
        fh.write("@data\n")
        for inst, lab in zip(ds.instances, ds.labels):
            chans = ":".join(",".join(repr(float(v)) for v in row) for row in inst)
            fh.write(f"{chans}:{ds.class_names[lab]}\n")


def zscore_normalize(
    ds: MvDataset, stats: ChannelStats | None = None
) -> tuple[MvDataset, ChannelStats]:
    """Shift and scale each channel to zero mean, unit population std.

    Without ``stats`` the statistics are computed from ``ds`` itself (the
    train split); pass the returned stats when normalizing the test split so
    both use train-side numbers. Channels whose std is below 1e-12 become
    all zeros.
    """
    if stats is not None and stats.mean.shape != (ds.n_channels,):
        raise SchemaError(
            f"stats cover {stats.mean.shape[0]} channels, dataset has {ds.n_channels}"
        )
    if stats is None:
        stacked = np.concatenate(ds.instances, axis=1)
        stats = ChannelStats(
            mean=stacked.mean(axis=1), std=stacked.std(axis=1)
        )
    live = stats.std >= 1e-12
    normalized = []
    for inst in ds.instances:
        out = np.zeros_like(inst)
        out[live] = (inst[live] - stats.mean[live, None]) / stats.std[live, None]
        normalized.append(out)
    return replace(ds, instances=normalized), stats


def pad_to_multiple(ds: MvDataset, granule: int) -> MvDataset:
    """Right-pad every instance with zeros to the next multiple of ``granule``."""
    if granule < 1:
        raise ValueError(f"granule must be >= 1, got {granule}")
    t = ds.n_timestamps
    target = ((t + granule - 1) // granule) * granule
    if target == t:
        return ds
    padded = [
        np.pad(inst, ((0, 0), (0, target - t)), mode="constant") for inst in ds.instances
    ]
    return replace(ds, instances=padded)


def make_batches(
    ds: MvDataset, plan: BatchPlan
) -> list[tuple[Tensor, np.ndarray]]:
    """Split the planned order into (series [B x T x C], label vector) batches.

    Batches partition the permutation; the final one may be smaller. Series
    matrices are transposed from the stored [C x T] to time-major [T x C].
    """
    order = plan.order if plan.order else tuple(range(ds.n_instances))
    if len(order) != ds.n_instances:
        raise ValueError(
            f"plan covers {len(order)} instances, dataset has {ds.n_instances}"
        )
    batches = []
    for start in range(0, len(order), plan.batch_size):
        idx = order[start : start + plan.batch_size]
        series = np.stack([ds.instances[i].T for i in idx])
        labels = np.array([ds.labels[i] for i in idx], dtype=np.int64)
        batches.append((Tensor(series), labels))
    return batches


def dump_debug_json(ds: MvDataset, stats: ChannelStats | None = None) -> str:
    """Shape, stats, and first instance as JSON, for fixture tests."""
    payload = {
        "name": ds.name,
        "split": ds.split,
        "n_instances": ds.n_instances,
        "n_channels": ds.n_channels,
        "n_timestamps": ds.n_timestamps,
        "class_names": ds.class_names,
        "label_counts": {
            cls: int(sum(1 for lab in ds.labels if lab == i))
            for i, cls in enumerate(ds.class_names)
        },
        "first_instance": ds.instances[0].tolist() if ds.instances else [],
    }
    if stats is not None:
        payload["channel_mean"] = stats.mean.tolist()
        payload["channel_std"] = stats.std.tolist()
    return json.dumps(payload, sort_keys=True, indent=2)
