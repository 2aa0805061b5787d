"""Dataset manifests, train/test splits, the DIFS feature store and model containers."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import LinearModel, ProjectionMatrix
from .errors import InvalidParameter, ManifestError, StoreError
from .fisher import Vocabulary
from .models import GmmModel, PcaModel

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"DIFS"
MODEL_MAGIC = b"DIMC"
FORMAT_VERSION = 1
KIND_TAGS = {"RL": 1, "FV": 2, "fused": 3}
MODEL_TAGS = {"PCA": 1, "GMM": 2, "LINEAR": 3, "PROJECTION": 4, "VOCABULARY": 5}
# magic, version, kind tag, dimension, count, config digest
_FEATURE_HEADER = struct.Struct("<4sIBIQ32s")
# magic, version, kind tag, metadata length, section count, payload digest
_MODEL_HEADER = struct.Struct("<4sIBII32s")


def config_digest(config: dict) -> bytes:
    """SHA-256 of the canonical JSON encoding of a configuration."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).digest()


def _atomic_write(path: Path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise StoreError(f"truncated file while reading {what}")
    return data


# -- manifest --------------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestItem:
    id: str
    path: str
    label: str | None = None
    split: str | None = None
    group: str | None = None


@dataclass
class DatasetManifest:
    items: list[ManifestItem]
    classes: tuple[str, ...]
    # directory relative item paths are resolved against
    root: Path = field(default=Path("."), compare=False)

    @property
    def class_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.classes)}

    def __len__(self):
        return len(self.items)

    @property
    def ids(self) -> list[str]:
        return [it.id for it in self.items]

    def labels(self) -> np.ndarray:
        """Class index per item, -1 for unlabeled items."""
        idx = self.class_index
        return np.array([idx[it.label] if it.label is not None else -1 for it in self.items], dtype=np.int64)

    def resolve(self, item: ManifestItem) -> Path:
        p = Path(item.path)
        return p if p.is_absolute() else self.root / p


def _opt_str(obj: dict, key: str, line: int) -> str | None:
    v = obj.get(key)
    if v is None:
        return None
    if not isinstance(v, (str, int)):
        raise ManifestError(f"field {key!r} must be a string", line)
    return str(v)


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a JSON Lines manifest.

    An optional first line ``{"classes": [...]}`` declares the class set; without
    it the sorted set of labels is used.  Unknown fields are ignored.
    """
    path = Path(path)
    root = path.parent
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    declared = None
    items: list[ManifestItem] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(obj, dict):
            raise ManifestError("each line must be a JSON object", lineno)
        if "classes" in obj and "id" not in obj:
            if declared is not None or items:
                raise ManifestError("class declaration must come first and only once", lineno)
            if not isinstance(obj["classes"], list) or len(set(map(str, obj["classes"]))) != len(obj["classes"]):
                raise ManifestError("classes must be a list of distinct names", lineno)
            declared = tuple(str(c) for c in obj["classes"])
            continue
        item_id = _opt_str(obj, "id", lineno)
        if item_id is None or item_id == "":
            raise ManifestError("item without id", lineno)
        if item_id in seen:
            raise ManifestError(f"duplicate id {item_id!r} (first on line {seen[item_id]})", lineno)
        item_path = _opt_str(obj, "path", lineno)
        if not item_path:
            raise ManifestError(f"item {item_id!r} has no path", lineno)
        item = ManifestItem(item_id, item_path, _opt_str(obj, "label", lineno),
                            _opt_str(obj, "split", lineno), _opt_str(obj, "group", lineno))
        if item.split not in (None, "train", "test"):
            raise ManifestError(f"split must be 'train' or 'test', got {item.split!r}", lineno)
        if declared is not None and item.label is not None and item.label not in declared:
            raise ManifestError(f"label {item.label!r} of item {item_id!r} is not a declared class", lineno)
        p = Path(item_path)
        if check_files and not (p if p.is_absolute() else root / p).is_file():
            raise ManifestError(f"image file {item_path!r} of item {item_id!r} does not exist", lineno)
        seen[item_id] = lineno
        items.append(item)

    if not items:
        raise ManifestError(f"manifest {path} lists no items")
    classes = declared if declared is not None else tuple(sorted({it.label for it in items if it.label is not None}))
    return DatasetManifest(items, classes, root)


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [json.dumps({"classes": list(manifest.classes)})]
    for it in manifest.items:
        obj = {"id": it.id, "path": it.path}
        for key in ("label", "split", "group"):
            if getattr(it, key) is not None:
                obj[key] = getattr(it, key)
        lines.append(json.dumps(obj, sort_keys=True))
    text = "\n".join(lines) + "\n"
    _atomic_write(Path(path), lambda f: f.write(text.encode("utf-8")))


# -- splits ----------------------------------------------------------------------------------

@dataclass
class Split:
    index: int
    train: np.ndarray  # item indices, ascending
    test: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def as_dict(self, ids: list[str]) -> dict:
        return {"index": self.index, "train": [ids[i] for i in self.train],
                "test": [ids[i] for i in self.test], "warnings": list(self.warnings)}


def _sorted_concat(parts) -> np.ndarray:
    return np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)


def split_dataset(manifest: DatasetManifest, ratio: float = 0.5, n_splits: int = 5, seed: int = 0) -> list[Split]:
    """Stratified random train/test splits over the labeled items.

    Per class, floor(ratio * n) items (at least one when n >= 2) go to train.
    A class with a single item is put entirely in train and noted in ``warnings``.
    """
    if not 0.0 < ratio < 1.0:
        raise InvalidParameter(f"ratio must lie in (0, 1), got {ratio}")
    if n_splits < 1:
        raise InvalidParameter(f"n_splits must be >= 1, got {n_splits}")
    labels = manifest.labels()
    splits = []
    for s in range(n_splits):
        train, test, warnings = [], [], []
        for c, name in enumerate(manifest.classes):
            members = np.flatnonzero(labels == c)
            n = len(members)
            if n == 0:
                continue
            if n == 1:
                warnings.append(f"class {name!r} has a single item; it is used for training only")
                train.append(members)
                continue
            rng = np.random.default_rng([seed, s, c])
            perm = members[rng.permutation(n)]
            k = max(1, int(np.floor(ratio * n)))
            train.append(perm[:k])
            test.append(perm[k:])
        for w in warnings:
            logger.warning("split %d: %s", s, w)
        splits.append(Split(s, _sorted_concat(train), _sorted_concat(test), warnings))
    return splits


def splits_from_manifest(manifest: DatasetManifest) -> Split | None:
    """The fixed split given by the items' ``split`` tags, if every labeled item has one."""
    labeled = [i for i, it in enumerate(manifest.items) if it.label is not None]
    if not labeled or any(manifest.items[i].split is None for i in labeled):
        return None
    train = np.array([i for i in labeled if manifest.items[i].split == "train"], dtype=np.int64)
    test = np.array([i for i in labeled if manifest.items[i].split == "test"], dtype=np.int64)
    return Split(0, train, test)


# -- feature store ---------------------------------------------------------------------------

@dataclass(eq=False)
class FeatureTable:
    ids: list[str]
    values: np.ndarray  # (count, dim) float32
    kind: str
    digest: bytes

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.ids)


def write_features(path, ids, values, kind: str = "RL", config: dict | None = None,
                   digest: bytes | None = None) -> bytes:
    """Persist a feature matrix as 32-bit little-endian floats; returns the config digest."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvalidParameter(f"expected a (count, dim) matrix, got shape {values.shape}")
    ids = [str(i) for i in ids]
    if len(ids) != values.shape[0]:
        raise InvalidParameter(f"{len(ids)} ids for {values.shape[0]} rows")
    if kind not in KIND_TAGS:
        raise InvalidParameter(f"unknown signature kind {kind!r}")
    if digest is None:
        digest = config_digest(config or {})
    if len(digest) != 32:
        raise InvalidParameter("digest must be 32 bytes")
    data = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise InvalidParameter("feature values must be finite")

    def write(f):
        f.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, KIND_TAGS[kind],
                                     data.shape[1], data.shape[0], digest))
        for i in ids:
            b = i.encode("utf-8")
            f.write(struct.pack("<I", len(b)))
            f.write(b)
        f.write(memoryview(data).cast("B"))

    _atomic_write(Path(path), write)
    return digest


def read_feature_header(path) -> tuple[str, int, int, bytes]:
    """(kind, dim, count, digest) without loading the payload."""
    with open(path, "rb") as f:
        return _parse_feature_header(f)


def _parse_feature_header(f) -> tuple[str, int, int, bytes]:
    raw = f.read(_FEATURE_HEADER.size)
    if len(raw) < 4 or raw[:4] != FEATURE_MAGIC:
        raise StoreError("not a feature store (bad magic)")
    if len(raw) != _FEATURE_HEADER.size:
        raise StoreError("truncated file while reading header")
    magic, version, tag, dim, count, digest = _FEATURE_HEADER.unpack(raw)
    if version != FORMAT_VERSION:
        raise StoreError(f"unsupported feature store version {version}")
    kinds = {v: k for k, v in KIND_TAGS.items()}
    if tag not in kinds:
        raise StoreError(f"unknown kind tag {tag}")
    return kinds[tag], dim, count, digest


def read_features(path, expected_dim: int | None = None, expected_digest: bytes | None = None,
                  expected_kind: str | None = None) -> FeatureTable:
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise StoreError(f"cannot open feature store {path}: {exc}") from exc
    with f:
        kind, dim, count, digest = _parse_feature_header(f)
        if expected_dim is not None and dim != expected_dim:
            raise StoreError(f"dimension mismatch: store has {dim}, expected {expected_dim}")
        if expected_digest is not None and digest != expected_digest:
            raise StoreError("configuration digest mismatch")
        if expected_kind is not None and kind != expected_kind:
            raise StoreError(f"kind mismatch: store has {kind}, expected {expected_kind}")
        ids = []
        for _ in range(count):
            (n,) = struct.unpack("<I", _read_exact(f, 4, "id table"))
            try:
                ids.append(_read_exact(f, n, "id table").decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise StoreError("id table is not valid UTF-8") from exc
        values = np.empty((count, dim), dtype="<f4")
        buf = memoryview(values).cast("B")
        if f.readinto(buf) != buf.nbytes:
            raise StoreError("truncated file while reading values")
        if f.read(1):
            raise StoreError("trailing bytes after values")
    return FeatureTable(ids, values, kind, digest)


# -- model container -------------------------------------------------------------------------

def _model_sections(model) -> tuple[str, dict[str, np.ndarray], dict]:
    if isinstance(model, PcaModel):
        return "PCA", {"mean": model.mean, "basis": model.basis, "eigenvalues": model.eigenvalues}, {}
    if isinstance(model, GmmModel):
        return "GMM", {"weights": model.weights, "means": model.means, "variances": model.variances}, \
            {"trace": list(model.trace)}
    if isinstance(model, LinearModel):
        return "LINEAR", {"weights": model.weights}, {"n_classes": model.n_classes, "hyperparams": model.hyperparams}
    if isinstance(model, ProjectionMatrix):
        return "PROJECTION", {"matrix": model.matrix}, {"trace": list(model.trace)}
    if isinstance(model, Vocabulary):
        sections = {"pca_mean": model.pca.mean, "pca_basis": model.pca.basis,
                    "pca_eigenvalues": model.pca.eigenvalues, "gmm_weights": model.gmm.weights,
                    "gmm_means": model.gmm.means, "gmm_variances": model.gmm.variances}
        return "VOCABULARY", sections, {"trace": list(model.gmm.trace)}
    raise InvalidParameter(f"cannot serialize {type(model).__name__}")


def _build_model(kind: str, s: dict[str, np.ndarray], meta: dict):
    try:
        if kind == "PCA":
            return PcaModel(s["mean"], s["basis"], s["eigenvalues"])
        if kind == "GMM":
            return GmmModel(s["weights"], s["means"], s["variances"], trace=tuple(meta.get("trace", ())))
        if kind == "LINEAR":
            return LinearModel(s["weights"], int(meta["n_classes"]), dict(meta.get("hyperparams", {})))
        if kind == "PROJECTION":
            return ProjectionMatrix(s["matrix"], trace=tuple(meta.get("trace", ())))
        pca = PcaModel(s["pca_mean"], s["pca_basis"], s["pca_eigenvalues"])
        gmm = GmmModel(s["gmm_weights"], s["gmm_means"], s["gmm_variances"], trace=tuple(meta.get("trace", ())))
        return Vocabulary(pca, gmm)
    except KeyError as exc:
        raise StoreError(f"model container lacks section {exc}") from exc


def save_model(path, model) -> None:
    """Model container: DIMC header, JSON metadata, then named float64 sections."""
    kind, sections, meta = _model_sections(model)
    payload = bytearray()
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload += meta_bytes
    for name, arr in sections.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        payload += struct.pack("<H", len(nb)) + nb
        payload += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        payload += arr.tobytes()
    header = _MODEL_HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, MODEL_TAGS[kind], len(meta_bytes),
                                len(sections), hashlib.sha256(payload).digest())

    def write(f):
        f.write(header)
        f.write(payload)

    _atomic_write(Path(path), write)


def load_model(path, expected_kind: str | None = None):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot open model container {path}: {exc}") from exc
    if data[:4] != MODEL_MAGIC:
        raise StoreError("not a model container (bad magic)")
    if len(data) < _MODEL_HEADER.size:
        raise StoreError("truncated file while reading header")
    _, version, tag, meta_len, n_sections, digest = _MODEL_HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise StoreError(f"unsupported model container version {version}")
    kinds = {v: k for k, v in MODEL_TAGS.items()}
    if tag not in kinds:
        raise StoreError(f"unknown model kind tag {tag}")
    kind = kinds[tag]
    if expected_kind is not None and kind != expected_kind:
        raise StoreError(f"model kind mismatch: container holds {kind}, expected {expected_kind}")
    payload = memoryview(data)[_MODEL_HEADER.size:]
    if hashlib.sha256(payload).digest() != digest:
        raise StoreError("model container payload digest mismatch (truncated or corrupted)")

    pos = meta_len
    meta = json.loads(bytes(payload[:meta_len]).decode("utf-8"))
    sections = {}
    try:
        for _ in range(n_sections):
            (nlen,) = struct.unpack_from("<H", payload, pos)
            name = bytes(payload[pos + 2:pos + 2 + nlen]).decode("utf-8")
            pos += 2 + nlen
            (ndim,) = struct.unpack_from("<B", payload, pos)
            shape = struct.unpack_from(f"<{ndim}Q", payload, pos + 1)
            pos += 1 + 8 * ndim
            nbytes = 8 * int(np.prod(shape, dtype=np.int64))
            if pos + nbytes > len(payload):
                raise StoreError(f"section {name!r} runs past the end of the file")
            sections[name] = np.frombuffer(payload[pos:pos + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
            pos += nbytes
    except struct.error as exc:
        raise StoreError("truncated model container") from exc
    if pos != len(payload):
        raise StoreError("trailing bytes in model container")
    return _build_model(kind, sections, meta)
