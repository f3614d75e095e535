"""Small shared utilities for writing embedding and lexicon files in tests."""

from __future__ import annotations

import numpy as np


def write_vec(path, vocab, vectors, header=None):
    """Write a text embedding file; header defaults to 'n d' from the data."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n, d = vectors.shape
    lines = [header if header is not None else f"{n} {d}"]
    for tok, row in zip(vocab, vectors):
        lines.append(" ".join([tok] + [repr(float(x)) for x in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_lexicon(path, pairs):
    """Write 'src tgt' dictionary lines."""
    path.write_text("".join(f"{s} {t}\n" for s, t in pairs), encoding="utf-8")
    return path
