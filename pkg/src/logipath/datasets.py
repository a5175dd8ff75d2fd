"""Dataset files, run artifacts, and model checkpoints.

Dataset files hold four-option multiple choice records, either as one
JSON array or as JSON lines.  Each record carries ``context``,
``question``, ``answers`` (exactly four), an ``id_string``, and an
optional integer ``label``; unlabeled records are fine, they just score
nothing.  Artifacts written by the command line start with a header
object under the key ``_config`` echoing the effective configuration,
and every reader here skips such headers, so artifacts can be fed back
in as inputs.

Checkpoints use a private container: a magic line, a canonical JSON
header, then the raw float64 buffers back to back.  Writing the same
model twice produces byte-identical files, which the repeatability
checks rely on.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import tensor as T
from .atoms import N_OPTIONS, Sample
from .model import ModelConfig, SymbolVocab
from .tensor import Tensor

log = logging.getLogger(__name__)

HEADER_KEY = "_config"

CHECKPOINT_MAGIC = b"LGPTH1\n"
CHECKPOINT_DTYPE = "<f8"


class DatasetError(ValueError):
    """A dataset file that cannot be parsed into samples."""


def record_to_sample(record: Any, index: int) -> Sample:
    if not isinstance(record, dict):
        raise DatasetError(f"record {index}: expected an object")
    for field in ("context", "question", "answers", "id_string"):
        if field not in record and not (
            field == "answers" and "options" in record
        ) and not (field == "id_string" and "id" in record):
            raise DatasetError(f"record {index}: missing field '{field}'")
    answers = record.get("answers", record.get("options"))
    if not isinstance(answers, (list, tuple)) or len(answers) != N_OPTIONS:
        raise DatasetError(
            f"record {index}: expected {N_OPTIONS} answers, "
            f"got {len(answers) if isinstance(answers, (list, tuple)) else answers!r}"
        )
    label = record.get("label")
    try:
        return Sample(
            id=str(record.get("id_string", record.get("id"))),
            context=str(record["context"]),
            question=str(record["question"]),
            options=tuple(str(a) for a in answers),  # type: ignore[arg-type]
            label=int(label) if label is not None else None,
        )
    except ValueError as exc:
        raise DatasetError(f"record {index}: {exc}") from exc


def sample_to_record(sample: Sample) -> dict[str, Any]:
    record: dict[str, Any] = {
        "id_string": sample.id,
        "context": sample.context,
        "question": sample.question,
        "answers": list(sample.options),
    }
    if sample.label is not None:
        record["label"] = sample.label
    return record


def _parse_records(text: str, path: Path) -> list[Any]:
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise DatasetError(f"{path}: top-level JSON must be an array")
        return data
    records = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{n}: invalid JSON line: {exc}") from exc
    return records


def read_dataset(path: str | Path) -> list[Sample]:
    """Parse a dataset file, array or JSON-lines, into samples."""
    path = Path(path)
    records = _parse_records(path.read_text(encoding="utf-8"), path)
    samples = []
    for i, record in enumerate(records):
        if isinstance(record, dict) and HEADER_KEY in record:
            continue
        samples.append(record_to_sample(record, i))
    return samples


def _header_record(header: dict[str, Any] | None) -> dict[str, Any] | None:
    if header is None:
        return None
    return {HEADER_KEY: header}


def write_dataset(
    samples: Sequence[Sample],
    path: str | Path,
    header: dict[str, Any] | None = None,
    jsonl: bool = False,
) -> None:
    """Write samples as a JSON array, or one record per line."""
    records: list[dict[str, Any]] = []
    head = _header_record(header)
    if head is not None:
        records.append(head)
    records.extend(sample_to_record(s) for s in samples)
    path = Path(path)
    if jsonl:
        write_rows(records, path)
        return
    path.write_text(
        json.dumps(records, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )


def write_rows(
    rows: Iterable[dict[str, Any]],
    path: str | Path,
    header: dict[str, Any] | None = None,
) -> None:
    """Write JSON lines; canonical key order keeps reruns byte-identical."""
    out = []
    head = _header_record(header)
    if head is not None:
        out.append(json.dumps(head, ensure_ascii=False, sort_keys=True))
    for row in rows:
        out.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_rows(path: str | Path) -> tuple[dict[str, Any] | None, list[dict[str, Any]]]:
    """Read JSON lines back as (header, rows); header may be absent."""
    header: dict[str, Any] | None = None
    rows: list[dict[str, Any]] = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        row = json.loads(line)
        if isinstance(row, dict) and HEADER_KEY in row:
            header = row[HEADER_KEY]
            continue
        rows.append(row)
    return header, rows


@dataclass
class Checkpoint:
    params: dict[str, Tensor]
    config: ModelConfig
    vocab: SymbolVocab
    meta: dict[str, Any]


def _config_to_dict(cfg: ModelConfig) -> dict[str, Any]:
    out = dict(cfg.__dict__)
    out["alpha"] = list(cfg.alpha)
    out["beta"] = list(cfg.beta)
    return out


def _config_from_dict(data: dict[str, Any]) -> ModelConfig:
    data = dict(data)
    data["alpha"] = tuple(data["alpha"])
    data["beta"] = tuple(data["beta"])
    return ModelConfig(**data)


def save_checkpoint(
    path: str | Path,
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: SymbolVocab,
    meta: dict[str, Any] | None = None,
) -> None:
    names = sorted(params)
    tensors = []
    offset = 0
    for name in names:
        # np.array, not ascontiguousarray: the latter turns 0-d into 1-d
        arr = np.array(params[name].data, dtype=np.float64, order="C")
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset}
        )
        offset += arr.nbytes
    header = {
        "version": 1,
        "dtype": CHECKPOINT_DTYPE,
        "config": _config_to_dict(config),
        "vocab": vocab.to_list(),
        "meta": meta or {},
        "tensors": tensors,
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for name in names:
            arr = np.array(params[name].data, dtype="<f8", order="C")
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DatasetError(f"{path}: not a checkpoint file")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode())
        if header.get("dtype") != CHECKPOINT_DTYPE:
            raise DatasetError(f"{path}: unsupported dtype {header.get('dtype')}")
        body = fh.read()
    params: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(
            body, dtype="<f8", count=count, offset=start
        ).reshape(shape)
        params[entry["name"]] = T.param(arr.astype(np.float64))
    return Checkpoint(
        params=params,
        config=_config_from_dict(header["config"]),
        vocab=SymbolVocab.from_list(header["vocab"]),
        meta=header.get("meta", {}),
    )
