"""Real-world test matrices: the bundled fixture and the fetchable files.

The two Harwell-Boeing matrices are downloaded on request into a cache
directory (``$STABLEKRYLOV_MATRIX_DIR``, default ``~/.cache/stablekrylov``).
A SHA-256 digest is written next to each file on download and checked on
every later lookup; a file whose size line disagrees with the catalogue is
rejected outright.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .mmio import read_matrix_market

CACHE_ENV = "STABLEKRYLOV_MATRIX_DIR"
FIXTURE_NAME = "ill10.mtx"


@dataclass(frozen=True)
class RemoteMatrix:
    name: str
    url: str
    rows: int
    cols: int
    # pinned digest of the decompressed file; None means trust-on-first-use
    sha256: Optional[str] = None


CATALOGUE = {
    "bcsstk20": RemoteMatrix(
        "bcsstk20",
        "https://math.nist.gov/pub/MatrixMarket2/Harwell-Boeing/bcsstruc2/bcsstk20.mtx.gz",
        485, 485),
    "plat1919": RemoteMatrix(
        "plat1919",
        "https://math.nist.gov/pub/MatrixMarket2/Harwell-Boeing/platz/plat1919.mtx.gz",
        1919, 1919),
}


class ChecksumError(RuntimeError):
    pass


def fixture_path() -> str:
    """Path of the bundled 10x10 ill-conditioned Matrix Market file."""
    return str(resources.files("stablekrylov").joinpath("data", FIXTURE_NAME))


def cache_dir() -> str:
    return os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "stablekrylov")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_size_line(path: str, entry: RemoteMatrix) -> None:
    with open(path, "rb") as fh:
        for raw in fh:
            s = raw.strip()
            if s and not s.startswith(b"%"):
                rows, cols = (int(t) for t in s.split()[:2])
                break
        else:
            raise ChecksumError(f"{path}: no size line")
    if (rows, cols) != (entry.rows, entry.cols):
        raise ChecksumError(f"{path}: expected {entry.rows}x{entry.cols}, file says {rows}x{cols}")


def local_path(name: str, directory: Optional[str] = None) -> Optional[str]:
    """Verified path of a fetched matrix, or None if it has not been fetched."""
    entry = CATALOGUE[name]
    path = os.path.join(directory or cache_dir(), f"{name}.mtx")
    if not os.path.exists(path):
        return None
    expected = entry.sha256
    digest_file = path + ".sha256"
    if expected is None and os.path.exists(digest_file):
        with open(digest_file, encoding="ascii") as fh:
            expected = fh.read().split()[0]
    if expected is not None and _sha256(path) != expected:
        raise ChecksumError(f"{path}: SHA-256 mismatch")
    return path


def fetch(name: str, directory: Optional[str] = None, timeout: float = 60.0) -> str:
    """Download, decompress and verify ``name``; returns the local path."""
    if name not in CATALOGUE:
        raise KeyError(f"unknown matrix {name!r}; known: {sorted(CATALOGUE)}")
    entry = CATALOGUE[name]
    directory = directory or cache_dir()
    os.makedirs(directory, exist_ok=True)
    existing = local_path(name, directory)
    if existing is not None:
        return existing
    path = os.path.join(directory, f"{name}.mtx")
    tmp = path + ".part"
    with urllib.request.urlopen(entry.url, timeout=timeout) as resp:
        payload = resp.read()
    data = gzip.decompress(payload) if entry.url.endswith(".gz") else payload
    with open(tmp, "wb") as fh:
        fh.write(data)
    _check_size_line(tmp, entry)
    digest = _sha256(tmp)
    if entry.sha256 is not None and digest != entry.sha256:
        os.remove(tmp)
        raise ChecksumError(f"{name}: SHA-256 {digest} does not match pinned {entry.sha256}")
    os.replace(tmp, path)
    with open(path + ".sha256", "w", encoding="ascii") as fh:
        fh.write(f"{digest}  {name}.mtx\n")
    return path


def load(name: str, directory: Optional[str] = None):
    path = local_path(name, directory)
    if path is None:
        raise FileNotFoundError(f"{name} has not been fetched; run the 'fetch' subcommand")
    return read_matrix_market(path)
