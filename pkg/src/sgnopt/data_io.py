"""LIBSVM-format datasets: parsing, canonical serialization, synthetic data."""

from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass
from typing import IO, Optional, Union

import numpy as np
import scipy.sparse as sp

GZIP_MAGIC = b"\x1f\x8b"


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary-labelled sparse dataset; labels are +-1, features CSR n x d."""

    labels: np.ndarray
    features: sp.csr_matrix

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float).ravel()
        feats = sp.csr_matrix(self.features, dtype=float)
        if feats.shape[0] != labels.size:
            raise ValueError("labels and feature rows disagree")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        feats.sort_indices()
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.features, other.features
        return (
            a.shape == b.shape
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None


def _label(token: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(lineno, f"non-numeric label {token!r}") from None
    if v == 1.0:
        return 1.0
    if v in (0.0, -1.0):
        return -1.0
    raise ParseError(lineno, f"label {token!r} is not binary (expected 0/1 or -1/+1)")


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
        return _decode(raw)
    if isinstance(source, (bytes, bytearray)):
        return _decode(bytes(source))
    if isinstance(source, io.TextIOBase) or hasattr(source, "encoding"):
        return source
    return _decode(source.read())


def _decode(raw: bytes) -> IO[str]:
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return io.StringIO(raw.decode("utf-8"))


def parse_libsvm(source: Union[str, os.PathLike, bytes, IO], n_features: Optional[int] = None) -> Dataset:
    """Parse LIBSVM text (path, bytes, binary or text stream; gzip auto-detected).

    Indices are 1-based and must be strictly increasing within a line. The
    feature dimension is the largest index seen unless ``n_features`` pins it.
    Malformed input raises :class:`ParseError` carrying the line number.
    """
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_index = 0
    for lineno, line in enumerate(_open_text(source), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_label(tokens[0], lineno))
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected index:value, got {tok!r}")
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(lineno, f"non-integer index {idx_s!r}") from None
            try:
                val = float(val_s)
            except ValueError:
                raise ParseError(lineno, f"non-numeric value {val_s!r}") from None
            if idx < 1:
                raise ParseError(lineno, f"index {idx} is not positive")
            if idx == prev:
                raise ParseError(lineno, f"duplicate index {idx}")
            if idx < prev:
                raise ParseError(lineno, f"index {idx} out of order (after {prev})")
            if not np.isfinite(val):
                raise ParseError(lineno, f"non-finite value {val_s!r}")
            indices.append(idx - 1)
            values.append(val)
            prev = idx
        max_index = max(max_index, prev)
        indptr.append(len(indices))
    if n_features is not None:
        if max_index > n_features:
            raise ValueError(f"index {max_index} exceeds pinned dimension {n_features}")
        d = n_features
    else:
        d = max_index
    feats = sp.csr_matrix(
        (np.asarray(values, dtype=float), np.asarray(indices, dtype=np.int32), np.asarray(indptr)),
        shape=(len(labels), d),
    )
    return Dataset(np.asarray(labels), feats)


def write_libsvm(ds: Dataset, stream: IO[str]) -> None:
    """Write canonical LIBSVM text: integer +-1 labels, ascending 1-based indices,
    shortest round-trip float repr."""
    a = ds.features
    for i in range(ds.n):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        parts = ["1" if ds.labels[i] > 0 else "-1"]
        parts.extend(f"{j + 1}:{float(v)!r}" for j, v in zip(a.indices[lo:hi], a.data[lo:hi]))
        stream.write(" ".join(parts) + "\n")


def dumps_libsvm(ds: Dataset) -> str:
    buf = io.StringIO()
    write_libsvm(ds, buf)
    return buf.getvalue()


def save_libsvm(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_libsvm(ds, fh)


def synth_logistic(n: int, d: int, condition: float = 1.0, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Gaussian features with population second moment of condition number
    ``condition``; labels from a planted model with ``noise`` flip rate."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if condition < 1:
        raise ValueError("condition must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    spectrum = condition ** (-np.linspace(0.0, 1.0, d)) if d > 1 else np.ones(1)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q *= np.sign(np.diag(r))
    z = rng.standard_normal((n, d))
    x = (z * np.sqrt(spectrum)) @ q.T
    w = rng.standard_normal(d) / np.sqrt(np.mean(spectrum) * d)
    y = np.where(x @ w >= 0, 1.0, -1.0)
    flip = rng.random(n) < noise
    y[flip] = -y[flip]
    return Dataset(y, sp.csr_matrix(x))
