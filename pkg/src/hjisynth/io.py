"""Binary files: the Galerkin table cache and serialized value functions.

Both use the same layout: an 8-byte magic, a little-endian ``uint32`` format
version, a ``uint32`` header length, a UTF-8 JSON header and a raw
little-endian float64 payload whose array shapes are listed in the header.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .basis import ORDERING, MonomialBasis, enumerate_basis
from .galerkin import IntegralTables
from .separable import Hyperrectangle, Interval

log = logging.getLogger(__name__)

CACHE_ENV = "HJISYNTH_CACHE_DIR"
TABLE_MAGIC = b"HJITABLE"
VALUE_MAGIC = b"HJIVALUE"
FORMAT_VERSION = 1
_F8 = np.dtype("<f8")


class FormatError(ValueError):
    pass


def _write(path: Path, magic: bytes, header: dict, arrays: list[np.ndarray]) -> None:
    header = dict(header, shapes=[list(a.shape) for a in arrays])
    raw = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    # write-then-rename so concurrent readers never see a partial file
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=_F8).tobytes())
    os.replace(tmp, path)


def _read(path: Path, magic: bytes) -> tuple[dict, list[np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != magic:
        raise FormatError(f"{path}: not a {magic.decode()} file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    header = json.loads(data[16 : 16 + hlen].decode())
    off = 16 + hlen
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(data, dtype=_F8, count=count, offset=off).reshape(shape).astype(float)
        off += count * 8
        arrays.append(a)
    if off != len(data):
        raise FormatError(f"{path}: payload size mismatch")
    return header, arrays


# -- table cache ------------------------------------------------------------

def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "hjisynth"


class TableCache:
    """On-disk cache of the fixed Galerkin tables (drift matrix and cost
    projection), keyed by system fingerprint, basis and quadrature order.

    Systems with custom factor callbacks have no fingerprint and are never cached.
    """

    def __init__(self, directory: str | os.PathLike | None = None, enabled: bool = True):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    def key(self, tab: IntegralTables) -> str | None:
        fp = tab.sys.fingerprint()
        if fp is None:
            return None
        b = tab.basis
        return f"{fp[:32]}_d{b.d}_M{b.M}_{ORDERING}_q{tab.moments.order}"

    def path(self, tab: IntegralTables) -> Path | None:
        k = self.key(tab)
        return None if k is None else self.directory / f"{k}.tbl"

    def load(self, tab: IntegralTables) -> bool:
        p = self.path(tab) if self.enabled else None
        if p is None or not p.exists():
            self.misses += 1
            return False
        try:
            header, (F, ell) = _read(p, TABLE_MAGIC)
            if header.get("fingerprint") != tab.sys.fingerprint() or header.get("n") != tab.n:
                raise FormatError("key collision")
            tab.preload(F, ell)
        except (FormatError, ValueError, OSError) as exc:
            log.warning("ignoring unreadable table cache %s: %s", p, exc)
            self.misses += 1
            return False
        self.hits += 1
        return True

    def store(self, tab: IntegralTables) -> Path | None:
        p = self.path(tab) if self.enabled else None
        if p is None:
            return None
        header = {
            "kind": "galerkin_tables",
            "fingerprint": tab.sys.fingerprint(),
            "d": tab.basis.d,
            "M": tab.basis.M,
            "n": tab.n,
            "ordering": ORDERING,
            "quadrature_order": tab.moments.order,
        }
        try:
            _write(p, TABLE_MAGIC, header, [tab.F, tab.ell_vector])
        except OSError as exc:
            log.warning("could not write table cache %s: %s", p, exc)
            return None
        return p


# -- value functions --------------------------------------------------------

def save_value_function(V, path) -> Path:
    path = Path(path)
    header = {
        "kind": "value_function",
        "d": V.basis.d,
        "M": V.basis.M,
        "ordering": ORDERING,
        "gamma_used": None if np.isinf(V.gamma_used) else float(V.gamma_used),
    }
    bounds = np.stack([V.domain.lo, V.domain.hi])
    _write(path, VALUE_MAGIC, header, [bounds, np.asarray(V.c)])
    return path


def load_value_function(path):
    from .synthesis import ValueFunction

    header, (bounds, c) = _read(Path(path), VALUE_MAGIC)
    if header.get("ordering") != ORDERING:
        raise FormatError(f"unsupported basis ordering {header.get('ordering')!r}")
    basis: MonomialBasis = enumerate_basis(int(header["d"]), int(header["M"]))
    domain = Hyperrectangle(tuple(Interval(float(a), float(b)) for a, b in bounds.T))
    g = header.get("gamma_used")
    return ValueFunction(basis, c, domain, float("inf") if g is None else float(g))
