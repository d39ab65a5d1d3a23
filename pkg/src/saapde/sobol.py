"""Unscrambled Sobol' points from Joe-Kuo direction numbers."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

BITS = 32
_TABLE = "joe_kuo_d128.txt"


def load_direction_numbers(path=None):
    """Parse a Joe-Kuo style table into ``{dim: (s, a, [m_1, ..., m_s])}``.

    Each data line holds ``d s a m_1 ... m_s``; a non-numeric header line is
    skipped.  Dimension 1 is implicit and never listed.
    """
    if path is None:
        text = resources.files("saapde.data").joinpath(_TABLE).read_text()
    else:
        text = Path(path).read_text()
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or not parts[0].isdigit():
            continue
        vals = [int(p) for p in parts]
        d, s, a, m = vals[0], vals[1], vals[2], vals[3:]
        if len(m) != s:
            raise ValueError(f"line {lineno}: expected {s} m values, got {len(m)}")
        table[d] = (s, a, m)
    return table


def direction_vectors(dim, table=None, bits=BITS):
    """Direction integers ``V[j, i]`` for dimensions ``j < dim``, bits ``i < bits``."""
    if table is None:
        table = load_direction_numbers()
    V = np.zeros((dim, bits), dtype=np.uint64)
    V[0] = [1 << (bits - 1 - i) for i in range(bits)]
    for j in range(1, dim):
        if j + 1 not in table:
            raise ValueError(f"no direction numbers for dimension {j + 1}")
        s, a, m = table[j + 1]
        v = [0] * bits
        for i in range(min(s, bits)):
            v[i] = m[i] << (bits - 1 - i)
        for i in range(s, bits):
            x = v[i - s] ^ (v[i - s] >> s)
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    x ^= v[i - k]
            v[i] = x
        V[j] = v
    return V


class SobolGenerator:
    """Gray-code Sobol' sequence in ``[0, 1)^dim``; point 0 is the origin."""

    def __init__(self, dim, table=None):
        self.dim = int(dim)
        self._V = direction_vectors(self.dim, table)
        self._x = np.zeros(self.dim, dtype=np.uint64)
        self.index = 0

    def reset(self):
        self._x[:] = 0
        self.index = 0

    def draw(self, count):
        out = np.empty((count, self.dim))
        scale = 1.0 / float(1 << BITS)
        for r in range(count):
            if self.index > 0:
                # rightmost zero bit of index - 1
                c = ((self.index - 1) ^ self.index).bit_length() - 1
                self._x ^= self._V[:, c]
            out[r] = self._x.astype(float) * scale
            self.index += 1
        return out


def sobol_parameters(count, dim=100, skip=1):
    """First ``count`` Sobol' points after ``skip``, mapped to ``[-1, 1]^dim``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    gen = SobolGenerator(dim)
    if skip:
        gen.draw(skip)
    return 2.0 * gen.draw(count) - 1.0
