"""Text-format I/O: embedding matrices, translation lexicons, orthogonal maps.

Embedding files use the common text layout: a header line ``n d`` followed by
one line per token holding the token and d decimal floats, space separated.
Map files hold a ``d`` header followed by d rows of d floats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Deviation ||W^T W - I||_F above which a loaded map triggers a warning.
MAP_ORTHOGONALITY_WARN = 1e-4


class ParseError(ValueError):
    """A malformed input file, with the offending line number."""

    def __init__(self, path: str | Path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


@dataclass
class EmbeddingMatrix:
    """An ordered vocabulary paired with one float64 row vector per token."""

    vocab: list[str]
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-d, got shape {self.vectors.shape}")
        if len(self.vocab) != self.vectors.shape[0]:
            raise ValueError(
                f"vocab size {len(self.vocab)} does not match {self.vectors.shape[0]} vector rows"
            )
        if not np.isfinite(self.vectors).all():
            raise ValueError("vectors contain non-finite values")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab contains duplicate tokens")
        self._index: dict[str, int] | None = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def index(self) -> dict[str, int]:
        """Token -> row lookup, built on first use."""
        if self._index is None:
            self._index = {tok: i for i, tok in enumerate(self.vocab)}
        return self._index

    def head(self, n: int) -> "EmbeddingMatrix":
        """The first n rows as a new matrix (frequency-ordered inputs assumed)."""
        if n > len(self):
            raise ValueError(f"requested head of {n} rows from {len(self)}")
        return EmbeddingMatrix(self.vocab[:n], self.vectors[:n].copy())


@dataclass
class Lexicon:
    """Source -> set-of-targets translation pairs plus load accounting.

    n_kept / n_dropped count dictionary lines against the loaded vocabularies;
    n_sources_skipped counts distinct source tokens whose every line dropped.
    """

    pairs: dict[str, set[str]]
    n_kept: int = 0
    n_dropped: int = 0
    n_sources_skipped: int = 0

    def __post_init__(self):
        for src, tgts in self.pairs.items():
            if not src or not tgts or any(not t for t in tgts):
                raise ValueError(f"lexicon entry for {src!r} has an empty token")

    def __len__(self) -> int:
        return len(self.pairs)


def load_embeddings(path: str | Path, max_vocab: int = 200_000) -> EmbeddingMatrix:
    """Parse a text embedding file, keeping the first max_vocab distinct tokens.

    Later duplicates of a token are skipped and do not count toward max_vocab.
    Raises ParseError (with line number) on malformed headers, rows whose field
    count disagrees with the header dimension, non-finite values, or a file
    yielding an empty vocabulary.
    """
    if max_vocab < 1:
        raise ValueError(f"max_vocab must be positive, got {max_vocab}")
    path = Path(path)
    vocab: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        header = fh.readline()
        if not header:
            raise ParseError(path, 1, "empty file")
        fields = header.split()
        if len(fields) != 2:
            raise ParseError(path, 1, f"header must be 'n d', got {header.strip()!r}")
        try:
            n_declared, dim = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(path, 1, f"header must hold two integers, got {header.strip()!r}") from None
        if n_declared < 0 or dim < 1:
            raise ParseError(path, 1, f"bad header values n={n_declared} d={dim}")
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if parts and parts[-1] == "":  # tolerate one trailing space (common in the wild)
                parts.pop()
            if len(parts) != dim + 1:
                raise ParseError(path, line_no, f"expected token + {dim} floats, got {len(parts)} fields")
            token = parts[0]
            if not token:
                raise ParseError(path, line_no, "empty token")
            if token in seen:
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise ParseError(path, line_no, "unparseable float value") from None
            if not np.isfinite(vec).all():
                raise ParseError(path, line_no, f"non-finite value in row for token {token!r}")
            seen.add(token)
            vocab.append(token)
            rows.append(vec)
            if len(vocab) == max_vocab:
                break
    if not vocab:
        raise ParseError(path, 2, "no embedding rows (empty vocabulary)")
    return EmbeddingMatrix(vocab, np.vstack(rows))


def load_lexicon(path: str | Path, src: EmbeddingMatrix, tgt: EmbeddingMatrix) -> Lexicon:
    """Parse 'src tgt' pairs, dropping lines whose tokens miss either vocabulary."""
    path = Path(path)
    src_index = src.index
    tgt_index = tgt.index
    pairs: dict[str, set[str]] = {}
    n_kept = 0
    n_dropped = 0
    sources_seen: set[str] = set()
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 2 fields, got {len(parts)}")
            s, t = parts
            sources_seen.add(s)
            if s in src_index and t in tgt_index:
                pairs.setdefault(s, set()).add(t)
                n_kept += 1
            else:
                n_dropped += 1
    n_sources_skipped = len(sources_seen) - len(pairs)
    return Lexicon(pairs, n_kept=n_kept, n_dropped=n_dropped, n_sources_skipped=n_sources_skipped)


def save_map(W, path: str | Path) -> None:
    """Write a d x d map as a 'd' header plus d rows of shortest round-trip floats."""
    matrix = np.asarray(getattr(W, "matrix", W), dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"map must be square, got shape {matrix.shape}")
    d = matrix.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{d}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_map(path: str | Path):
    """Read a map written by save_map; warns if it is far from orthogonal."""
    from .procrustes import OrthogonalMap

    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ParseError(path, 1, "empty file")
        try:
            d = int(header.strip())
        except ValueError:
            raise ParseError(path, 1, f"header must be a single integer, got {header.strip()!r}") from None
        if d < 1:
            raise ParseError(path, 1, f"dimension must be positive, got {d}")
        rows = []
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts and line_no == d + 2:
                break  # trailing blank line
            if len(parts) != d:
                raise ParseError(path, line_no, f"expected {d} floats, got {len(parts)} fields")
            try:
                rows.append(np.array(parts, dtype=np.float64))
            except ValueError:
                raise ParseError(path, line_no, "unparseable float value") from None
            if len(rows) == d:
                break
    if len(rows) != d:
        raise ParseError(path, len(rows) + 1, f"expected {d} rows, got {len(rows)}")
    matrix = np.vstack(rows)
    gram_err = float(np.linalg.norm(matrix.T @ matrix - np.eye(d)))
    if gram_err > MAP_ORTHOGONALITY_WARN:
        warnings.warn(
            f"loaded map deviates from orthogonality: ||W^T W - I||_F = {gram_err:.3e}",
            stacklevel=2,
        )
    return OrthogonalMap(matrix, validate=False)
