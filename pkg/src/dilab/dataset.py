"""Colored-digits domains: a synthetic vector backend and an MNIST (IDX) image backend.

Generative chain per example: ``z_d ~ Bernoulli(1/2)``; ``y = z_d`` with
probability 0.75; ``z_c = y`` with probability ``theta``; the input copies a
base feature into the channel block selected by ``z_c`` and zeros the other.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PreconditionError
from .rng import make_rng

LABEL_AGREEMENT = 0.75
BASE_DIM = 8
BASE_SIGMA = 0.5
TRAIN_FRACTION = 0.8

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.str[1:]: k for k, v in _IDX_TYPES.items()}


class IdxParseError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.offset = offset


@dataclass(frozen=True)
class DomainSpec:
    theta: float
    n_samples: int
    role: str = "source"
    name: str = ""

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise PreconditionError(f"theta must lie in [0, 1], got {self.theta}")
        if self.n_samples < 1:
            raise PreconditionError("n_samples must be positive")
        if self.role not in ("source", "target"):
            raise PreconditionError(f"role must be 'source' or 'target', got {self.role!r}")


@dataclass(frozen=True)
class ColoredExample:
    x: np.ndarray
    y: int
    z_d: int
    z_c: int
    domain_id: int


@dataclass(frozen=True)
class ColoredDomain:
    """Column storage for one domain; indexing yields :class:`ColoredExample`."""

    spec: DomainSpec
    domain_id: int
    x: np.ndarray
    y: np.ndarray
    z_d: np.ndarray
    z_c: np.ndarray

    def __len__(self) -> int:
        return int(self.y.size)

    def __getitem__(self, i: int) -> ColoredExample:
        return ColoredExample(self.x[i], int(self.y[i]), int(self.z_d[i]), int(self.z_c[i]), self.domain_id)

    def subset(self, idx: np.ndarray) -> "ColoredDomain":
        return ColoredDomain(self.spec, self.domain_id, self.x[idx], self.y[idx], self.z_d[idx], self.z_c[idx])


def default_source_thetas(count: int = 7) -> list[float]:
    return [0.6 + 0.4 / count * i for i in range(count)]


def default_target_thetas() -> dict[str, float]:
    return {"far": 0.05, "close": 0.7}


def _chain(rng: np.random.Generator, n: int, theta: float, z_d: np.ndarray | None = None):
    if z_d is None:
        z_d = (rng.random(n) < 0.5).astype(np.uint8)
    y = np.where(rng.random(n) < LABEL_AGREEMENT, z_d, 1 - z_d).astype(np.uint8)
    z_c = np.where(rng.random(n) < theta, y, 1 - y).astype(np.uint8)
    return z_d, y, z_c


def _color(base: np.ndarray, z_c: np.ndarray) -> np.ndarray:
    red = base * (z_c == 0)[:, None]
    green = base * (z_c == 1)[:, None]
    return np.concatenate([red, green], axis=1).astype(np.float32)


def generate_domain(
    spec: DomainSpec,
    backend: str = "vector",
    seed: int = 0,
    domain_id: int = 0,
    images: np.ndarray | None = None,
    digits: np.ndarray | None = None,
) -> ColoredDomain:
    """Sample ``spec.n_samples`` examples.

    The ``idx`` backend needs ``images`` (28×28 or already pooled 14×14) and
    ``digits``; use :func:`load_mnist` to read them from IDX files.
    """
    rng = make_rng(seed, "dataset", domain_id)
    n = spec.n_samples
    if backend == "vector":
        z_d, y, z_c = _chain(rng, n, spec.theta)
        means = np.where(z_d == 1, 1.0, -1.0)[:, None]
        base = means + BASE_SIGMA * rng.standard_normal((n, BASE_DIM))
    elif backend == "idx":
        if images is None or digits is None:
            raise PreconditionError("idx backend needs images and digit labels")
        pool = mean_pool2(images) if images.shape[-1] == 28 else np.asarray(images, dtype=np.float32)
        pick = rng.choice(len(digits), size=n, replace=n > len(digits))
        z_d = (np.asarray(digits)[pick] >= 5).astype(np.uint8)
        z_d, y, z_c = _chain(rng, n, spec.theta, z_d)
        base = pool[pick].reshape(n, -1) / 255.0
    else:
        raise PreconditionError(f"unknown backend {backend!r}")
    return ColoredDomain(spec, domain_id, _color(base, z_c), y, z_d, z_c)


def split(domain: ColoredDomain, seed: int, train_fraction: float = TRAIN_FRACTION) -> tuple[ColoredDomain, ColoredDomain]:
    perm = make_rng(seed, "split", domain.domain_id).permutation(len(domain))
    cut = int(round(train_fraction * len(domain)))
    return domain.subset(np.sort(perm[:cut])), domain.subset(np.sort(perm[cut:]))


# ---------------------------------------------------------------- IDX format


def mean_pool2(images: np.ndarray) -> np.ndarray:
    """2×2 mean pooling over the last two axes (28×28 → 14×14)."""
    a = np.asarray(images, dtype=np.float32)
    h, w = a.shape[-2:]
    if h % 2 or w % 2:
        raise PreconditionError(f"image size {h}x{w} is not divisible by 2")
    a = a.reshape(*a.shape[:-2], h // 2, 2, w // 2, 2)
    return a.mean(axis=(-3, -1))


def read_idx(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxParseError(path, len(raw), f"file has {len(raw)} bytes, header needs 4")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxParseError(path, 0, f"bad magic 0x{raw[:4].hex()}: first two bytes must be zero")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise IdxParseError(path, 2, f"unknown element type 0x{code:02x}")
    if ndim == 0:
        raise IdxParseError(path, 3, "zero dimensions")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxParseError(path, len(raw), f"truncated header: expected {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    count = 1
    for d in dims:
        count *= d
    needed = header + count * dtype.itemsize
    if count * dtype.itemsize > (1 << 40):
        raise IdxParseError(path, 4, f"dimensions {dims} overflow the supported payload size")
    if len(raw) != needed:
        kind = "truncated payload" if len(raw) < needed else "trailing bytes"
        raise IdxParseError(path, min(len(raw), needed), f"{kind}: expected {needed} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=header).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array)
    code = _IDX_CODES.get(a.dtype.str[1:])
    if code is None:
        raise PreconditionError(f"dtype {a.dtype} has no IDX element code")
    big = a.astype(_IDX_TYPES[code])
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, code, a.ndim]))
        fh.write(struct.pack(f">{a.ndim}I", *a.shape))
        fh.write(big.tobytes())


def load_mnist(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise IdxParseError(images_path, 3, f"image file has {images.ndim} dimensions, expected 3")
    if labels.ndim != 1:
        raise IdxParseError(labels_path, 3, f"label file has {labels.ndim} dimensions, expected 1")
    if len(images) != len(labels):
        raise PreconditionError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


# ---------------------------------------------------------------- persistence


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([
        ("x", "<f4", (dim,)),
        ("y", "u1"),
        ("z_d", "u1"),
        ("z_c", "u1"),
        ("split", "u1"),
        ("domain_id", "<u2"),
    ])


@dataclass(frozen=True)
class DomainSplit:
    name: str
    spec: DomainSpec
    train: ColoredDomain
    val: ColoredDomain


def build_domains(
    seed: int,
    n_per_domain: int,
    backend: str = "vector",
    source_count: int = 7,
    images: np.ndarray | None = None,
    digits: np.ndarray | None = None,
) -> list[DomainSplit]:
    """Sources ``S1..SK`` then targets ``far`` and ``close``, each split 80/20."""
    specs = [(f"S{i + 1}", DomainSpec(t, n_per_domain, "source")) for i, t in enumerate(default_source_thetas(source_count))]
    specs += [(name, DomainSpec(t, n_per_domain, "target")) for name, t in default_target_thetas().items()]
    out = []
    for did, (name, spec) in enumerate(specs):
        dom = generate_domain(spec, backend, seed, did, images, digits)
        tr, va = split(dom, seed)
        out.append(DomainSplit(name, spec, tr, va))
    return out


def save_dataset(out_dir, domains: Sequence[DomainSplit], seed: int, backend: str) -> dict:
    """Write ``records.bin`` (fixed-width little-endian records) and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dim = domains[0].train.x.shape[1]
    dt = _record_dtype(dim)
    parts = []
    for d in domains:
        for flag, part in ((0, d.train), (1, d.val)):
            rec = np.zeros(len(part), dtype=dt)
            rec["x"], rec["y"], rec["z_d"], rec["z_c"] = part.x, part.y, part.z_d, part.z_c
            rec["split"], rec["domain_id"] = flag, part.domain_id
            parts.append(rec)
    blob = np.concatenate(parts).tobytes()
    (out / "records.bin").write_bytes(blob)
    manifest = {
        "seed": seed,
        "backend": backend,
        "dim": dim,
        "record_bytes": dt.itemsize,
        "records": len(blob) // dt.itemsize,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "domains": [
            {
                "name": d.name,
                "domain_id": d.train.domain_id,
                "role": d.spec.role,
                "theta": d.spec.theta,
                "n_train": len(d.train),
                "n_val": len(d.val),
            }
            for d in domains
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(out_dir) -> list[DomainSplit]:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    blob = (out / "records.bin").read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise ValueError(f"{out / 'records.bin'}: checksum does not match manifest")
    rec = np.frombuffer(blob, dtype=_record_dtype(manifest["dim"]))
    result = []
    for d in manifest["domains"]:
        spec = DomainSpec(d["theta"], d["n_train"] + d["n_val"], d["role"], d["name"])
        halves = []
        for flag in (0, 1):
            r = rec[(rec["domain_id"] == d["domain_id"]) & (rec["split"] == flag)]
            halves.append(ColoredDomain(spec, d["domain_id"], np.array(r["x"]), np.array(r["y"]),
                                        np.array(r["z_d"]), np.array(r["z_c"])))
        result.append(DomainSplit(d["name"], spec, *halves))
    return result

