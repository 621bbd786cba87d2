"""Decoupled image embeddings, text-feature tables, and missing-text imputation."""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .imagecore import ImageGrid, vectorize


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """``raw-pixels`` flattens the grid; ``block-mean`` averages b x b blocks."""

    kind: str = "raw-pixels"
    block: int = 1

    def __post_init__(self):
        if self.kind not in ("raw-pixels", "block-mean"):
            raise ValueError(f"unknown extractor {self.kind!r}")
        if self.block < 1:
            raise ValueError("block size must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "FeatureExtractorSpec":
        """Accepts ``raw-pixels`` or ``block-mean:<b>``."""
        if text == "raw-pixels":
            return cls()
        kind, _, b = text.partition(":")
        if kind != "block-mean" or not b.isdigit():
            raise ValueError(f"bad extractor spec {text!r}")
        return cls("block-mean", int(b))

    def __str__(self):
        return self.kind if self.kind == "raw-pixels" else f"block-mean:{self.block}"

    def output_dim(self, width: int, height: int, channels: int = 1) -> int:
        if self.kind == "raw-pixels":
            return width * height * channels
        if width % self.block or height % self.block:
            raise ValueError(f"{width}x{height} not divisible by block {self.block}")
        return (width // self.block) * (height // self.block) * channels


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    target_id: str
    template_id: int | None
    image_part: np.ndarray
    text_part: np.ndarray | None = None
    text_imputed: bool = False
    # "template" or "corpus" when imputed
    imputed_from: str | None = None

    @property
    def full(self) -> np.ndarray:
        if self.text_part is None:
            return self.image_part
        return np.concatenate([self.image_part, self.text_part])


def extract_image_features(img: ImageGrid, spec: FeatureExtractorSpec) -> np.ndarray:
    if spec.kind == "raw-pixels":
        return vectorize(img)
    b = spec.block
    spec.output_dim(img.width, img.height, img.channels)
    h, w, c = img.shape
    blocks = img.data.reshape(h // b, b, w // b, b, c).mean(axis=(1, 3))
    return blocks.reshape(-1)


def decoupled_embedding(target: ImageGrid, match, spec: FeatureExtractorSpec) -> np.ndarray:
    """``[f(template), f(target - template)]`` for one match result."""
    if match.template_image.shape != target.shape or match.overlay.shape != target.shape:
        raise ValueError("match result does not fit the target")
    first = extract_image_features(match.template_image, spec)
    second = extract_image_features(match.overlay, spec)
    if first.shape != second.shape:
        raise ValueError("extractor output dims disagree")
    return np.concatenate([first, second])


def build_records(target_ids: Sequence[str], targets: Sequence[ImageGrid], matches,
                  spec: FeatureExtractorSpec) -> list[EmbeddingRecord]:
    return [EmbeddingRecord(tid, m.template_id, decoupled_embedding(t, m, spec))
            for tid, t, m in zip(target_ids, targets, matches)]


# ---------------------------------------------------------------------------
# Embedding tables

def read_table(path) -> dict[str, np.ndarray]:
    """Read an ETBL (text) or ETBB (binary) table into ``{id: vector}``."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == b"ETBB":
        return _read_binary(raw, path)
    return _read_text(raw.decode("utf-8"), path)


def _read_text(text: str, path) -> dict[str, np.ndarray]:
    lines = text.splitlines()
    if not lines:
        raise TableFormatError(f"{path}:1: empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "ETBL1" or not head[1].isdigit():
        raise TableFormatError(f"{path}:1: expected header 'ETBL1 <dim>'")
    dim = int(head[1])
    table = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != dim + 1:
            raise TableFormatError(
                f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
        rid = parts[0]
        if rid in table:
            raise TableFormatError(f"{path}:{lineno}: duplicate id {rid!r}")
        try:
            table[rid] = np.array([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise TableFormatError(f"{path}:{lineno}: {exc}") from exc
    return table


def _read_binary(raw: bytes, path) -> dict[str, np.ndarray]:
    try:
        dim, count = struct.unpack_from("<II", raw, 4)
        pos = 12
        table = {}
        for rec in range(count):
            (idlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            rid = raw[pos:pos + idlen].decode("utf-8")
            pos += idlen
            if len(raw) < pos + 4 * dim:
                raise TableFormatError(f"{path}: record {rec} truncated")
            if rid in table:
                raise TableFormatError(f"{path}: record {rec}: duplicate id {rid!r}")
            table[rid] = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).astype(np.float64)
            pos += 4 * dim
    except struct.error as exc:
        raise TableFormatError(f"{path}: truncated binary table") from exc
    return table


def ingest_text_features(path) -> dict[str, np.ndarray]:
    """Text vectors keyed by target id; ids missing from the table have no text."""
    return read_table(path)


def _check_dims(table: Mapping[str, np.ndarray]) -> int:
    dims = {np.asarray(v).shape for v in table.values()}
    if len(dims) > 1:
        raise TableFormatError(f"ragged table dims {sorted(dims)}")
    return dims.pop()[0] if dims else 0


def format_table(table: Mapping[str, np.ndarray]) -> str:
    dim = _check_dims(table)
    lines = [f"ETBL1 {dim}"]
    for rid, vec in table.items():
        if not rid or any(ch.isspace() for ch in rid):
            raise TableFormatError(f"id {rid!r} must be non-empty with no whitespace")
        lines.append(" ".join([rid] + [repr(float(v)) for v in vec]))
    return "\n".join(lines) + "\n"


def write_table(table: Mapping[str, np.ndarray], path, binary: bool = False) -> None:
    path = Path(path)
    if not binary:
        path.write_text(format_table(table), encoding="utf-8")
        return
    dim = _check_dims(table)
    chunks = [b"ETBB", struct.pack("<II", dim, len(table))]
    for rid, vec in table.items():
        key = rid.encode("utf-8")
        chunks.append(struct.pack("<H", len(key)) + key)
        chunks.append(np.asarray(vec, dtype="<f4").tobytes())
    path.write_bytes(b"".join(chunks))


# ---------------------------------------------------------------------------
# Text imputation

def impute_missing_text(records: Sequence[EmbeddingRecord], text: Mapping[str, np.ndarray],
                        text_dim: int | None = None) -> list[EmbeddingRecord]:
    """Attach text vectors, filling gaps with the mean over same-template records.

    A template with no texted members (and unmatched records, whose template
    is ``None``) falls back to the corpus-wide mean. With no text anywhere,
    ``text_dim`` zeros are used, or the call fails.
    """
    have = {}
    for r in records:
        vec = r.text_part if r.text_part is not None else text.get(r.target_id)
        if vec is not None:
            have[r.target_id] = np.asarray(vec, dtype=np.float64)
    dim = _check_dims(have) if have else text_dim
    if dim is None:
        raise ValueError("cannot impute: no text vectors and no dimension hint")

    by_template: dict = {}
    for r in records:
        if r.target_id in have and r.template_id is not None:
            by_template.setdefault(r.template_id, []).append(have[r.target_id])
    template_mean = {t: np.mean(v, axis=0) for t, v in by_template.items()}
    corpus_mean = (np.mean(list(have.values()), axis=0) if have else np.zeros(dim))

    out = []
    for r in records:
        if r.target_id in have:
            if r.text_part is not None:
                out.append(r)
            else:
                out.append(replace(r, text_part=have[r.target_id]))
        elif r.template_id in template_mean:
            out.append(replace(r, text_part=template_mean[r.template_id],
                               text_imputed=True, imputed_from="template"))
        else:
            out.append(replace(r, text_part=corpus_mean, text_imputed=True,
                               imputed_from="corpus"))
    return out
