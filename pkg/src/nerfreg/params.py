"""Flat parameter vectors with a named layout.

Every trainable parameter group in this package (hash table, MLP weights,
hypernetwork) lives in a single contiguous 1-D array accompanied by a layout:
a list of (name, offset, shape) entries that tile the array exactly, with no
gaps and no overlap.  Optimizer steps, gradient accumulation and checksums
then work on plain arrays, while named views keep the math code readable.
"""

from __future__ import annotations

import hashlib
import io
import zlib
from dataclasses import dataclass

import numpy as np

_MAGIC = "PARAMV1"


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def end(self) -> int:
        return self.offset + self.size


def _check_layout(layout, total):
    """Entries must be sorted, contiguous from 0, and cover the vector."""
    seen = set()
    cursor = 0
    for e in layout:
        if e.name in seen:
            raise ValueError(f"duplicate layout entry {e.name!r}")
        seen.add(e.name)
        if e.offset != cursor:
            raise ValueError(
                f"layout entry {e.name!r} starts at {e.offset}, expected {cursor}"
            )
        if e.size <= 0:
            raise ValueError(f"layout entry {e.name!r} has empty shape")
        cursor = e.end
    if cursor != total:
        raise ValueError(f"layout covers {cursor} values, vector has {total}")


class ParamVector:
    """A named, flat view over one contiguous float array."""

    def __init__(self, values: np.ndarray, layout):
        values = np.asarray(values)
        if values.ndim != 1:
            raise ValueError("values must be 1-D")
        if values.dtype not in (np.float32, np.float64):
            raise ValueError(f"unsupported dtype {values.dtype}")
        layout = tuple(
            e if isinstance(e, LayoutEntry) else LayoutEntry(e[0], e[1], tuple(e[2]))
            for e in layout
        )
        _check_layout(layout, values.size)
        self.values = values
        self.layout = layout
        self._index = {e.name: e for e in layout}

    # -- construction ------------------------------------------------------

    @classmethod
    def zeros(cls, entries, dtype=np.float32) -> "ParamVector":
        """Build from (name, shape) pairs, values initialised to zero."""
        layout = []
        cursor = 0
        for name, shape in entries:
            shape = tuple(int(s) for s in shape)
            layout.append(LayoutEntry(name, cursor, shape))
            cursor += int(np.prod(shape))
        return cls(np.zeros(cursor, dtype=dtype), layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    # -- access ------------------------------------------------------------

    @property
    def dtype(self):
        return self.values.dtype

    def __len__(self) -> int:
        return self.values.size

    @property
    def names(self):
        return tuple(e.name for e in self.layout)

    def entry(self, name: str) -> LayoutEntry:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def view(self, name: str) -> np.ndarray:
        """Writable ndarray view of one entry, reshaped to its layout shape."""
        e = self.entry(name)
        return self.values[e.offset : e.end].reshape(e.shape)

    def subvector(self, prefix: str) -> "ParamVector":
        """View of the contiguous run of entries whose name starts with prefix.

        The returned vector shares memory with this one; offsets are rebased
        to zero.  Raises if the matching entries are not contiguous.
        """
        matched = [e for e in self.layout if e.name.startswith(prefix)]
        if not matched:
            raise KeyError(f"no parameters match prefix {prefix!r}")
        lo = matched[0].offset
        hi = matched[-1].end
        if sum(e.size for e in matched) != hi - lo:
            raise ValueError(f"entries matching {prefix!r} are not contiguous")
        layout = [LayoutEntry(e.name, e.offset - lo, e.shape) for e in matched]
        return ParamVector(self.values[lo:hi], layout)

    def checksum(self) -> str:
        """SHA-256 of the raw little-endian bytes.  Used to prove frozen
        parameter groups were not touched."""
        raw = np.ascontiguousarray(self.values, dtype=self.values.dtype)
        le = raw.astype(raw.dtype.newbyteorder("<"), copy=False)
        return hashlib.sha256(le.tobytes()).hexdigest()

    def same_layout(self, other: "ParamVector") -> bool:
        return self.layout == other.layout

    def __repr__(self):
        return (
            f"ParamVector({self.values.size} values, {len(self.layout)} entries, "
            f"{self.dtype})"
        )


# -- serialization ----------------------------------------------------------
#
# File format: a plain-text header describing the layout, then the raw values
# as little-endian IEEE-754.  The header is human-readable on purpose; the
# blob stays byte-exact across platforms.
#
#   PARAMV1 <f4|f8> <n_entries> <n_values>
#   <name> <offset> <d0,d1,...>
#   ...
#   END <crc32 of value bytes>
#   <raw little-endian values>


def save_params(pv: ParamVector, fh) -> None:
    """Write a ParamVector to a binary file object."""
    dtype_tag = "f4" if pv.dtype == np.float32 else "f8"
    lines = [f"{_MAGIC} {dtype_tag} {len(pv.layout)} {len(pv)}"]
    for e in pv.layout:
        lines.append(f"{e.name} {e.offset} {','.join(str(s) for s in e.shape)}")
    blob = pv.values.astype(f"<{dtype_tag}", copy=False).tobytes()
    lines.append(f"END {zlib.crc32(blob):08x}")
    fh.write(("\n".join(lines) + "\n").encode("ascii"))
    fh.write(blob)


def load_params(fh) -> ParamVector:
    """Read a ParamVector written by save_params."""
    header = _read_header_lines(fh)
    first = header[0].split()
    if len(first) != 4 or first[0] != _MAGIC:
        raise ValueError("not a parameter file (bad magic line)")
    dtype_tag, n_entries, n_values = first[1], int(first[2]), int(first[3])
    if dtype_tag not in ("f4", "f8"):
        raise ValueError(f"unsupported dtype tag {dtype_tag!r}")
    if len(header) != n_entries + 2:
        raise ValueError("truncated parameter header")
    layout = []
    for line in header[1:-1]:
        name, offset, shape = line.split()
        layout.append(
            LayoutEntry(name, int(offset), tuple(int(s) for s in shape.split(",")))
        )
    end = header[-1].split()
    if end[0] != "END":
        raise ValueError("missing END marker in parameter header")
    itemsize = 4 if dtype_tag == "f4" else 8
    blob = fh.read(n_values * itemsize)
    if len(blob) != n_values * itemsize:
        raise ValueError("truncated parameter blob")
    if f"{zlib.crc32(blob):08x}" != end[1]:
        raise ValueError("parameter blob checksum mismatch")
    values = np.frombuffer(blob, dtype=f"<{dtype_tag}").astype(
        np.float32 if dtype_tag == "f4" else np.float64
    )
    return ParamVector(values, layout)


def _read_header_lines(fh):
    """Read ascii lines up to and including the END line."""
    lines = []
    buf = io.BytesIO()
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("unexpected end of file in parameter header")
        if ch == b"\n":
            line = buf.getvalue().decode("ascii")
            lines.append(line)
            if line.startswith("END"):
                return lines
            buf = io.BytesIO()
        else:
            buf.write(ch)
