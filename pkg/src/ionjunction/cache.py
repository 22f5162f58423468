"""Content-addressed on-disk cache for radial bases.

Each entry is ``<key>.npz`` (state arrays) plus ``<key>.json`` (metadata and
the sha256 of the npz).  The key hashes every input that determines the
basis together with the format version, so a version bump or any changed
input is a miss.  A checksum mismatch is treated as a miss and the entry is
rebuilt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import radial

logger = logging.getLogger(__name__)

CACHE_ENV = "IONJUNCTION_CACHE"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env).expanduser()
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "ionjunction"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class BasisSpec:
    """Everything that determines a basis."""

    alpha: float
    phi: float | None
    mass_ratio: float
    l_max: int = 48
    K: int = 1250
    E_min: float = -2000.0
    points_per_wavelength: float = 240.0

    @property
    def key(self) -> str:
        return radial.basis_key(self.alpha, self.phi, self.mass_ratio, self.l_max, self.K, self.E_min,
                                self.points_per_wavelength)

    def build(self, workers: int = 1) -> radial.BasisSet:
        return radial.build_basis(self.alpha, self.phi, self.mass_ratio, l_max=self.l_max, K=self.K,
                                  E_min=self.E_min, points_per_wavelength=self.points_per_wavelength,
                                  workers=workers)


class BasisCache:
    """Directory of cached bases.  ``directory=None`` disables persistence."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = None if directory is None else Path(directory)
        self.hits = 0
        self.misses = 0
        self.events: list[dict] = []

    def _paths(self, key: str):
        return self.directory / f"{key}.npz", self.directory / f"{key}.json"

    def load(self, spec: BasisSpec) -> radial.BasisSet | None:
        if self.directory is None:
            return None
        npz, meta_path = self._paths(spec.key)
        if not (npz.exists() and meta_path.exists()):
            return None
        try:
            meta = json.loads(meta_path.read_text())
        except (OSError, ValueError):
            logger.warning("unreadable cache metadata %s; rebuilding", meta_path)
            return None
        if meta.get("format_version") != radial.FORMAT_VERSION:
            logger.info("cache entry %s has format %s; rebuilding", spec.key, meta.get("format_version"))
            return None
        if meta.get("sha256") != _sha256(npz):
            logger.warning("checksum mismatch for cache entry %s; rebuilding", spec.key)
            return None
        with np.load(npz) as z:
            g = meta["grid"]
            grid = radial.RadialGrid(g["c"], g["s"], g["r_min"], g["r_max"], g["h"], g["n"])
            return radial.BasisSet(alpha=meta["alpha"], phi=meta["phi"], mass_ratio=meta["mass_ratio"],
                                   l_max=meta["l_max"], E_min=meta["E_min"], grid=grid,
                                   n=z["n"], l=z["l"], energies=z["energies"], u=z["u"],
                                   meta={k: meta[k] for k in ("points_per_wavelength", "E_cut", "n_bound")
                                         if k in meta})

    def store(self, basis: radial.BasisSet, key: str):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        npz, meta_path = self._paths(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".npz")
        os.close(fd)
        np.savez(tmp, n=basis.n, l=basis.l, energies=basis.energies, u=basis.u)
        os.replace(tmp, npz)
        meta = basis.metadata()
        meta["key"] = key
        meta["sha256"] = _sha256(npz)
        meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True))

    def get(self, spec: BasisSpec, workers: int = 1) -> radial.BasisSet:
        basis = self.load(spec)
        hit = basis is not None
        if hit:
            self.hits += 1
        else:
            self.misses += 1
            basis = spec.build(workers)
            self.store(basis, spec.key)
        self.events.append({"key": spec.key, "hit": hit})
        return basis
