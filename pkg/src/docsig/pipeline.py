"""Experiment orchestration: configuration, extraction, training, evaluation, sweeps, patents."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .classifiers import (
    SVM_LEARNING_RATES,
    LabeledFeatureSet,
    knn_predict_scores,
    ncm_fit,
    ncm_ml_fit,
    ncm_predict_batch,
    svm_fit_ovr,
    svm_scores,
)
from .densefeat import PatchGridSpec, multi_scale_descriptors
from .errors import ConfigError, InvalidImage, StoreError
from .fisher import extract_fv, train_vocabulary
from .imgproc import GrayImage, resize_max_pixels, to_luminance
from .patent import SENTINEL, PatentDoc, classify_image_types, rank_patents, table_strategies
from .retrieval import average_precision, fuse_class_scores, evaluate_ranking, precision_at, similarity_matrix
from .runlength import SIZE_TARGETS, extract_rl, rl_dimension
from .store import (
    DatasetManifest,
    Split,
    config_digest,
    load_manifest,
    load_model,
    read_feature_header,
    read_features,
    save_model,
    split_dataset,
    splits_from_manifest,
    write_features,
)

logger = logging.getLogger(__name__)

METRICS = ("MAP", "P@1", "P@5", "KNN", "NCM", "NCM-ML", "SVM")
RL_AXES = ("S", "L", "Q")
FV_AXES = ("S", "W", "F", "G", "M", "L")
FV_WINDOWS = (24, 32, 48, 64)
FV_PCA_DIMS = (48, 64, 96)
FV_SCALES = (1, 3, 5, 7)
# FV windows this small see almost nothing on full-resolution pages
LARGE_IMAGE_PIXELS = 1_000_000


# -- configuration ---------------------------------------------------------------------------

@dataclass
class RlParams:
    S: int = 0
    L: int = 5
    Q: int = 11
    threshold: float = 0.5

    def validate(self):
        _check_in("RL S", self.S, SIZE_TARGETS)
        _check_in("RL L", self.L, range(1, 6))
        _check_in("RL Q", self.Q, range(3, 17))
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")


@dataclass
class FvParams:
    S: int = 3
    W: int = 48
    F: int = 48
    G: int = 2
    M: int = 1
    L: int = 1
    stride: int | None = None
    alpha: float = 0.5
    vocab_samples: int = 200_000
    em_iters: int = 100
    allow_large_images: bool = False

    def validate(self):
        _check_in("FV S", self.S, SIZE_TARGETS)
        _check_in("FV W", self.W, FV_WINDOWS)
        _check_in("FV F", self.F, FV_PCA_DIMS)
        _check_in("FV G", self.G, range(1, 8))
        _check_in("FV M", self.M, FV_SCALES)
        _check_in("FV L", self.L, range(1, 6))
        if self.stride is not None and not 1 <= self.stride <= self.W:
            raise ConfigError(f"FV stride must be in 1..W, got {self.stride}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"FV alpha must lie in (0, 1], got {self.alpha}")


@dataclass
class ClfParams:
    knn_k: int = 4
    svm_lambda: float | None = None  # None: per-kind default
    svm_rho: float = 5.0
    svm_passes: int = 100
    ml_dim: int = 64
    ml_lr: float = 1.0
    ml_batches: int = 200

    def validate(self):
        if self.knn_k < 1 or self.svm_passes < 1 or self.ml_dim < 1 or self.ml_batches < 1:
            raise ConfigError("classifier counts must be positive")
        if self.svm_lambda is not None and self.svm_lambda <= 0:
            raise ConfigError("svm_lambda must be positive")


@dataclass
class SplitParams:
    ratio: float = 0.5
    n_splits: int = 5
    use_manifest: bool = False

    def validate(self):
        if not 0.0 < self.ratio < 1.0 or self.n_splits < 1:
            raise ConfigError("split ratio must lie in (0, 1) and n_splits be >= 1")


@dataclass
class PatentParams:
    kind: str = "FV"
    qrels: str | None = None
    classifier: str | None = None
    drawing_type: str | None = None
    strategies: list = field(default_factory=lambda: ["I1", "I2", "I3", "I4", "I5", "I6"])
    top_k: int = 10


@dataclass
class ExperimentConfig:
    manifest: str = "manifest.jsonl"
    kinds: list = field(default_factory=lambda: ["RL"])
    fuse: bool = False
    rl: RlParams = field(default_factory=RlParams)
    fv: FvParams = field(default_factory=FvParams)
    clf: ClfParams = field(default_factory=ClfParams)
    splits: SplitParams = field(default_factory=SplitParams)
    patent: PatentParams = field(default_factory=PatentParams)
    # {"kind": "RL" | "FV", "axes": {axis name: [values]}}
    sweep: dict = field(default_factory=dict)
    # compute missing feature stores during eval/sweep/patent instead of failing
    extract_missing: bool = True
    seed: int = 0
    out: str = "out"

    def validate(self) -> "ExperimentConfig":
        if not self.kinds or any(k not in ("RL", "FV") for k in self.kinds):
            raise ConfigError(f"kinds must be a non-empty subset of RL, FV; got {self.kinds}")
        if self.fuse and set(self.kinds) != {"RL", "FV"}:
            raise ConfigError("fusion needs both RL and FV kinds")
        for part in (self.rl, self.fv, self.clf, self.splits):
            part.validate()
        if self.sweep:
            kind = self.sweep.get("kind")
            axes = self.sweep.get("axes", {})
            allowed = RL_AXES if kind == "RL" else FV_AXES if kind == "FV" else None
            if allowed is None:
                raise ConfigError(f"sweep kind must be RL or FV, got {kind!r}")
            if not axes or any(a not in allowed or not v for a, v in axes.items()):
                raise ConfigError(f"sweep axes must be non-empty lists over {allowed}")
            for combo in _grid(axes):
                _with_params(self, kind, combo)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        nested = {"rl": RlParams, "fv": FvParams, "clf": ClfParams, "splits": SplitParams, "patent": PatentParams}
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in names:
                raise ConfigError(f"unknown configuration key {key!r}")
            if key in nested:
                sub = nested[key]
                allowed = {f.name for f in dataclasses.fields(sub)}
                unknown = set(value) - allowed
                if unknown:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
                value = sub(**value)
            kwargs[key] = value
        return cls(**kwargs).validate()

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


def _check_in(name, value, domain):
    if value not in domain:
        raise ConfigError(f"{name} must be one of {list(domain)}, got {value!r}")


def _grid(axes: dict) -> list[dict]:
    names = sorted(axes)
    return [dict(zip(names, values)) for values in itertools.product(*(axes[n] for n in names))]


def _with_params(config: ExperimentConfig, kind: str, combo: dict) -> ExperimentConfig:
    if kind == "RL":
        params = dataclasses.replace(config.rl, **combo)
        params.validate()
        return dataclasses.replace(config, rl=params, kinds=["RL"], fuse=False, sweep={})
    params = dataclasses.replace(config.fv, **combo)
    params.validate()
    return dataclasses.replace(config, fv=params, kinds=["FV"], fuse=False, sweep={})


# -- output helpers --------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: NaN and infinities become None, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if isinstance(v, float) and not math.isfinite(v) else v for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def run_name(config: ExperimentConfig, corpus: Corpus, **extra) -> str:
    """Output file stem derived from the parameters and the dataset, not from paths."""
    params = {k: v for k, v in config.to_dict().items() if k not in ("out", "manifest")}
    return config_digest(params | {"dataset": corpus.digest} | extra).hex()[:16]


def snapshot_config(config: ExperimentConfig) -> Path:
    path = Path(config.out) / "config.resolved.json"
    write_json(path, config.to_dict())
    return path


# -- corpus ----------------------------------------------------------------------------------

def decode_image(path) -> GrayImage:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1", "I;16", "I", "F"):
                arr = np.asarray(im.convert("F"), dtype=np.float64)
                scale = 65535.0 if im.mode in ("I;16", "I") else 1.0 if im.mode == "F" else 255.0
                arr = arr / scale
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InvalidImage(f"cannot decode {path}: {exc}") from exc
    return to_luminance(np.clip(arr, 0.0, 1.0))


class Corpus:
    """Manifest plus lazily decoded images (decode failures are remembered, not raised)."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._images: dict[int, GrayImage] = {}
        self.failures: dict[str, str] = {}
        self._digest = None

    @classmethod
    def load(cls, path) -> "Corpus":
        return cls(load_manifest(path))

    def image(self, i: int) -> GrayImage | None:
        item = self.manifest.items[i]
        if item.id in self.failures:
            return None
        if i not in self._images:
            try:
                self._images[i] = decode_image(self.manifest.resolve(item))
            except InvalidImage as exc:
                logger.warning("skipping %s: %s", item.id, exc)
                self.failures[item.id] = str(exc)
                return None
        return self._images[i]

    @property
    def digest(self) -> str:
        """Identity of the dataset: ids, labels, groups and image bytes (not paths)."""
        if self._digest is None:
            h = hashlib.sha256()
            for it in self.manifest.items:
                try:
                    content = hashlib.sha256(self.manifest.resolve(it).read_bytes()).hexdigest()
                except OSError:
                    content = "missing"
                h.update(json.dumps([it.id, it.label, it.group, content]).encode("utf-8"))
            self._digest = h.hexdigest()
        return self._digest


def make_splits(config: ExperimentConfig, manifest: DatasetManifest) -> list[Split]:
    if config.splits.use_manifest:
        fixed = splits_from_manifest(manifest)
        if fixed is None:
            raise ConfigError("use_manifest requires a train/test tag on every labeled item")
        return [fixed]
    return split_dataset(manifest, config.splits.ratio, config.splits.n_splits, config.seed)


# -- vocabulary and extraction ---------------------------------------------------------------

def _vocab_config(config: ExperimentConfig, corpus: Corpus) -> dict:
    fv = config.fv
    return {"what": "vocabulary", "dataset": corpus.digest, "S": fv.S, "W": fv.W, "F": fv.F, "G": fv.G,
            "M": fv.M, "stride": fv.stride, "samples": fv.vocab_samples, "em_iters": fv.em_iters,
            "seed": config.seed, "ratio": config.splits.ratio, "use_manifest": config.splits.use_manifest}


def _guard_fv_size(config: ExperimentConfig, gray: GrayImage, item_id: str):
    fv = config.fv
    if fv.allow_large_images or fv.S not in (0, 5) or fv.W > 64:
        return
    if gray.width * gray.height > LARGE_IMAGE_PIXELS:
        raise ConfigError(f"FV with S{fv.S} and W{fv.W} on image {item_id!r} of "
                          f"{gray.width}x{gray.height} pixels: windows would be nearly empty; "
                          "pick a smaller S or set allow_large_images")


def _fv_input(config: ExperimentConfig, gray: GrayImage) -> GrayImage:
    target = SIZE_TARGETS[config.fv.S]
    return gray if target is None else resize_max_pixels(gray, target)


def train_vocab(config: ExperimentConfig, corpus: Corpus) -> tuple[Path, object]:
    """PCA + GMM on descriptors of the first split's training images (cached by digest)."""
    vconf = _vocab_config(config, corpus)
    digest = config_digest(vconf).hex()
    path = Path(config.out) / "models" / f"vocab_{digest[:16]}.dimc"
    if path.exists():
        try:
            return path, load_model(path, "VOCABULARY")
        except StoreError as exc:
            logger.warning("retraining vocabulary, cached container unreadable: %s", exc)
    fv = config.fv
    train_idx = make_splits(config, corpus.manifest)[0].train
    grid = PatchGridSpec(fv.W, fv.stride, fv.M)
    chunks = []
    for i in train_idx:
        gray = corpus.image(int(i))
        if gray is None:
            continue
        _guard_fv_size(config, gray, corpus.manifest.items[i].id)
        ds = multi_scale_descriptors(_fv_input(config, gray), grid)
        chunks.append(ds.descriptors)
    if not chunks or sum(len(c) for c in chunks) == 0:
        raise ConfigError("no descriptors available to train the vocabulary")
    vocab = train_vocabulary(np.concatenate(chunks), fv.F, fv.G, seed=config.seed,
                             max_samples=fv.vocab_samples, max_iters=fv.em_iters)
    save_model(path, vocab)
    write_json(path.with_suffix(".json"), vconf)
    return path, vocab


def feature_config(config: ExperimentConfig, corpus: Corpus, kind: str, vocab_digest: str | None = None) -> dict:
    if kind == "RL":
        rl = config.rl
        return {"kind": "RL", "dataset": corpus.digest, "S": rl.S, "L": rl.L, "Q": rl.Q, "threshold": rl.threshold}
    fv = config.fv
    return {"kind": "FV", "dataset": corpus.digest, "S": fv.S, "W": fv.W, "F": fv.F, "G": fv.G, "M": fv.M,
            "L": fv.L, "stride": fv.stride, "alpha": fv.alpha, "vocab": vocab_digest}


@dataclass
class ExtractResult:
    path: Path
    kind: str
    digest: str
    computed: bool
    failures: dict


def _store_location(config: ExperimentConfig, corpus: Corpus, kind: str, vocab_path: Path | None):
    vocab_digest = hashlib.sha256(vocab_path.read_bytes()).hexdigest() if vocab_path else None
    fconf = feature_config(config, corpus, kind, vocab_digest)
    digest = config_digest(fconf)
    return Path(config.out) / "features" / f"{kind}_{digest.hex()[:16]}.difs", digest, fconf


def _cached(path: Path, kind: str, digest: bytes) -> ExtractResult | None:
    errors_path = path.with_suffix(".errors.json")
    try:
        if path.exists() and read_feature_header(path)[3] == digest:
            failures = json.loads(errors_path.read_text()) if errors_path.exists() else {}
            return ExtractResult(path, kind, digest.hex(), False, failures)
    except (StoreError, OSError, json.JSONDecodeError):
        pass
    return None


def find_store(config: ExperimentConfig, corpus: Corpus, kind: str) -> ExtractResult:
    """Existing store for the configuration; ConfigError when it has not been extracted."""
    vocab_path = None
    if kind == "FV":
        vocab_path = Path(config.out) / "models" / f"vocab_{config_digest(_vocab_config(config, corpus)).hex()[:16]}.dimc"
        if not vocab_path.exists():
            raise ConfigError(f"no FV vocabulary at {vocab_path}; run train-vocab or extract first")
    path, digest, _ = _store_location(config, corpus, kind, vocab_path)
    found = _cached(path, kind, digest)
    if found is None:
        raise ConfigError(f"no {kind} feature store at {path}; run extract first")
    return found


def run_extract(config: ExperimentConfig, kind: str, corpus: Corpus | None = None) -> ExtractResult:
    """One DIFS store per (dataset, kind, parameters); reused when its digest matches."""
    corpus = corpus or Corpus.load(config.manifest)
    vocab = vocab_path = None
    if kind == "FV":
        vocab_path, vocab = train_vocab(config, corpus)
    path, digest, fconf = _store_location(config, corpus, kind, vocab_path)
    errors_path = path.with_suffix(".errors.json")
    cached = _cached(path, kind, digest)
    if cached is not None:
        return cached

    ids, rows = [], []
    for i, item in enumerate(corpus.manifest.items):
        gray = corpus.image(i)
        if gray is None:
            continue
        if kind == "RL":
            vec = extract_rl(gray, config.rl.S, config.rl.L, config.rl.Q, config.rl.threshold)
        else:
            _guard_fv_size(config, gray, item.id)
            fv = config.fv
            vec = extract_fv(gray, vocab, fv.S, fv.W, fv.M, fv.L, fv.stride, fv.alpha)
        ids.append(item.id)
        rows.append(vec.values)
    if not rows:
        raise ConfigError("no image of the manifest could be decoded")
    failures = {k: corpus.failures[k] for k in sorted(corpus.failures)}
    write_json(errors_path, failures)
    write_features(path, ids, np.stack(rows), kind, digest=digest)
    write_json(path.with_suffix(".json"), fconf)
    if failures:
        logger.warning("%d images could not be decoded: %s", len(failures), ", ".join(failures))
    return ExtractResult(path, kind, digest.hex(), True, failures)


# -- evaluation ------------------------------------------------------------------------------

def _aligned(manifest: DatasetManifest, table) -> np.ndarray:
    """Row index into the store per manifest item, -1 when the item has no features."""
    pos = {i: r for r, i in enumerate(table.ids)}
    return np.array([pos.get(it.id, -1) for it in manifest.items], dtype=np.int64)


def evaluate_split(X: np.ndarray, y: np.ndarray, train: np.ndarray, test: np.ndarray, n_classes: int,
                   kind: str, clf: ClfParams, seed: int, parts: list | None = None) -> dict:
    """All seven metrics for one split; retrieval ranks the training set for each test query.

    ``parts`` lists (matrix, kind) pairs whose concatenation is ``X``; when given,
    the SVM score is the mean of per-part SVM decision scores (late fusion).
    """
    xtr, ytr, xte, yte = X[train], y[train], X[test], y[test]
    sim = similarity_matrix(xte, xtr)
    rep = evaluate_ranking(sim, yte, ytr, ks=(1, 5))
    out = {"MAP": rep.map, "P@1": rep.p_at[1], "P@5": rep.p_at[5]}
    k = min(clf.knn_k, len(train))
    out["KNN"] = float(np.mean(knn_predict_scores(sim, ytr, k, n_classes) == yte))
    trainset = LabeledFeatureSet(xtr, ytr, n_classes)
    means = ncm_fit(trainset)
    out["NCM"] = float(np.mean(ncm_predict_batch(means, xte) == yte))
    ml_dim = min(clf.ml_dim, X.shape[1], len(train) - 1)
    proj = ncm_ml_fit(trainset, ml_dim, clf.ml_lr, clf.ml_batches, seed=seed, means=means)
    out["NCM-ML"] = float(np.mean(ncm_predict_batch(means, xte, proj) == yte))
    scores = []
    for xk, k in parts or [(X, kind)]:
        lr = clf.svm_lambda if clf.svm_lambda is not None else SVM_LEARNING_RATES[k]
        model = svm_fit_ovr(LabeledFeatureSet(xk[train], ytr, n_classes), lr, clf.svm_rho, clf.svm_passes, seed=seed)
        scores.append(svm_scores(model, xk[test]))
    out["SVM"] = float(np.mean(np.argmax(fuse_class_scores(scores), axis=1) == yte))
    return out


def summarize(per_split: list[dict]) -> dict:
    """Mean and spread (sample standard deviation; 0 for a single split) per metric."""
    out = {}
    for m in METRICS:
        vals = np.array([s[m] for s in per_split], dtype=np.float64)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[m] = {"mean": float(np.mean(vals)), "std": std}
    return out


def _load_matrix(config: ExperimentConfig, corpus: Corpus, kind: str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Features for every manifest item (zero rows where missing) and an availability mask."""
    if kind == "fused":
        mats = [_load_matrix(config, corpus, k) for k in ("RL", "FV")]
        # concatenation: dot products are the sums of per-kind dot products
        return np.hstack([m[0] for m in mats]), mats[0][1] & mats[1][1], {**mats[0][2], **mats[1][2]}
    res = run_extract(config, kind, corpus) if config.extract_missing else find_store(config, corpus, kind)
    table = read_features(res.path, expected_digest=bytes.fromhex(res.digest))
    rows = _aligned(corpus.manifest, table)
    X = np.zeros((len(rows), table.dim))
    ok = rows >= 0
    X[ok] = table.values[rows[ok]].astype(np.float64)
    return X, ok, {kind: res.path.name}


def _rl_dim(config: ExperimentConfig) -> int:
    return rl_dimension(config.rl.L, config.rl.Q)


def evaluate_config(config: ExperimentConfig, corpus: Corpus, kind: str, splits: list[Split]) -> dict:
    X, ok, stores = _load_matrix(config, corpus, kind)
    parts = None
    if kind == "fused":
        split_at = _rl_dim(config)
        parts = [(X[:, :split_at], "RL"), (X[:, split_at:], "FV")]
    y = corpus.manifest.labels()
    usable = ok & (y >= 0)
    per_split = []
    for s in splits:
        train = s.train[usable[s.train]]
        test = s.test[usable[s.test]]
        if len(train) == 0 or len(test) == 0:
            raise ConfigError(f"split {s.index} has no usable train or test items")
        per_split.append(evaluate_split(X, y, train, test, len(corpus.manifest.classes), kind,
                                        config.clf, config.seed + s.index, parts))
    return {"kind": kind, "stores": stores, "splits": per_split, "summary": summarize(per_split)}


def _eval_rows(config_id: str, result: dict) -> list[list]:
    rows = []
    for si, metrics in enumerate(result["splits"]):
        for m in METRICS:
            rows.append([config_id, result["kind"], si, m, metrics[m]])
    return rows


def run_eval(config: ExperimentConfig, corpus: Corpus | None = None) -> dict:
    """Evaluate every configured kind (plus RL+FV fusion) over all splits; writes JSON and CSV."""
    corpus = corpus or Corpus.load(config.manifest)
    splits = make_splits(config, corpus.manifest)
    kinds = list(config.kinds) + (["fused"] if config.fuse else [])
    results = {k: evaluate_config(config, corpus, k, splits) for k in kinds}
    report = {"dataset": corpus.digest, "n_splits": len(splits), "results": results,
              "decode_failures": dict(sorted(corpus.failures.items()))}
    name = run_name(config, corpus)
    out = Path(config.out) / "reports"
    write_json(out / f"eval_{name}.json", report)
    rows = [r for k in kinds for r in _eval_rows(k, results[k])]
    write_csv(out / f"eval_{name}.csv", ["config", "kind", "split", "metric", "value"], rows)
    snapshot_config(config)
    report["path"] = out / f"eval_{name}.json"
    return report


# -- sweeps ----------------------------------------------------------------------------------

@dataclass
class SweepSummary:
    axes: dict  # axis -> list of values
    table: list  # [{"params": {...}, "metrics": {metric: mean}}]
    winners: dict  # axis -> {value: percentage of comparisons won}
    variances: dict  # axis -> mean variance of the metric when only this axis varies

    @classmethod
    def compute(cls, axes: dict, table: list, metrics=METRICS) -> "SweepSummary":
        """Winner frequencies and variances per axis.

        For each axis, every assignment of the other axes and every metric is one
        comparison: the value with the best mean wins (ties share the credit),
        and the population variance of the metric across the axis values is
        averaged over comparisons.
        """
        lookup = {json.dumps(row["params"], sort_keys=True): row["metrics"] for row in table}
        winners, variances = {}, {}
        for axis, values in axes.items():
            others = {a: v for a, v in axes.items() if a != axis}
            credit = {str(v): 0.0 for v in values}
            var_sum, n_cmp = 0.0, 0
            for rest in _grid(others) if others else [{}]:
                for m in metrics:
                    scores = [lookup[json.dumps({**rest, axis: v}, sort_keys=True)][m] for v in values]
                    best = max(scores)
                    tied = [v for v, s in zip(values, scores) if s == best]
                    for v in tied:
                        credit[str(v)] += 1.0 / len(tied)
                    var_sum += float(np.var(scores))
                    n_cmp += 1
            winners[axis] = {v: 100.0 * c / n_cmp for v, c in credit.items()}
            variances[axis] = var_sum / n_cmp
        return cls(axes, table, winners, variances)

    def as_dict(self) -> dict:
        return {"axes": self.axes, "table": self.table, "winners": self.winners, "variances": self.variances}


def run_sweep(config: ExperimentConfig, corpus: Corpus | None = None) -> SweepSummary:
    if not config.sweep:
        raise ConfigError("no sweep section in the configuration")
    corpus = corpus or Corpus.load(config.manifest)
    kind = config.sweep["kind"]
    axes = {a: list(v) for a, v in sorted(config.sweep["axes"].items())}
    splits = make_splits(config, corpus.manifest)
    table, rows = [], []
    for combo in _grid(axes):
        sub = _with_params(config, kind, combo)
        result = evaluate_config(sub, corpus, kind, splits)
        cid = ",".join(f"{a}={combo[a]}" for a in sorted(combo))
        table.append({"params": combo, "metrics": {m: result["summary"][m]["mean"] for m in METRICS},
                      "spread": {m: result["summary"][m]["std"] for m in METRICS}})
        rows += _eval_rows(cid, result)
        logger.info("sweep %s: %s", cid, {m: round(v, 4) for m, v in table[-1]["metrics"].items()})
    summary = SweepSummary.compute(axes, table)
    name = run_name(config, corpus)
    out = Path(config.out) / "reports"
    write_json(out / f"sweep_{name}.json", summary.as_dict())
    write_csv(out / f"sweep_{name}.csv", ["config", "kind", "split", "metric", "value"], rows)
    snapshot_config(config)
    return summary


# -- classifier training ---------------------------------------------------------------------

def run_train_clf(config: ExperimentConfig, corpus: Corpus | None = None, kind: str | None = None) -> Path:
    """Linear SVM on all labeled items (or the manifest's train tags); saved as a model container."""
    corpus = corpus or Corpus.load(config.manifest)
    kind = kind or config.kinds[0]
    X, ok, _ = _load_matrix(config, corpus, kind)
    y = corpus.manifest.labels()
    use = ok & (y >= 0)
    if config.splits.use_manifest:
        use &= np.array([it.split == "train" for it in corpus.manifest.items])
    if not use.any():
        raise ConfigError("no labeled items with features to train on")
    lr = config.clf.svm_lambda if config.clf.svm_lambda is not None else SVM_LEARNING_RATES[kind]
    model = svm_fit_ovr(LabeledFeatureSet(X[use], y[use], len(corpus.manifest.classes)),
                        lr, config.clf.svm_rho, config.clf.svm_passes, seed=config.seed)
    model.hyperparams["classes"] = list(corpus.manifest.classes)
    model.hyperparams["kind"] = kind
    name = run_name(config, corpus, what="svm", kind=kind)
    path = Path(config.out) / "models" / f"clf_{kind}_{name}.dimc"
    save_model(path, model)
    snapshot_config(config)
    return path


# -- patents ---------------------------------------------------------------------------------

def build_patents(manifest: DatasetManifest, X: np.ndarray, ok: np.ndarray) -> dict[str, PatentDoc]:
    groups: dict[str, list[int]] = {}
    for i, it in enumerate(manifest.items):
        if it.group is not None and ok[i]:
            groups.setdefault(it.group, []).append(i)
    labels = manifest.labels()
    return {g: PatentDoc(g, X[idx], true_types=labels[idx]) for g, idx in sorted(groups.items())}


def run_patent(config: ExperimentConfig, corpus: Corpus | None = None) -> dict:
    """Rank the non-query patents for every query patent under each requested strategy cell."""
    pc = config.patent
    unknown = [s for s in pc.strategies if s not in ("I1", "I2", "I3", "I4", "I5", "I6")]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}")
    needs_types = [s for s in pc.strategies if s not in ("I1", "I2")]
    if needs_types and pc.classifier is None:
        raise ConfigError(f"strategies {needs_types} need an image-type classifier (patent.classifier)")
    if pc.qrels is None:
        raise ConfigError("patent.qrels must name a JSON file mapping query groups to relevant groups")
    try:
        qrels = json.loads(Path(pc.qrels).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read qrels {pc.qrels}: {exc}") from exc

    corpus = corpus or Corpus.load(config.manifest)
    X, ok, stores = _load_matrix(config, corpus, pc.kind)
    patents = build_patents(corpus.manifest, X, ok)
    missing = [q for q in qrels if q not in patents]
    if missing:
        raise ConfigError(f"query groups without images: {missing}")

    drawing = 0
    if pc.classifier is not None:
        try:
            model = load_model(pc.classifier, "LINEAR")
        except StoreError as exc:
            raise ConfigError(f"cannot load type classifier: {exc}") from exc
        if model.dim != X.shape[1]:
            raise ConfigError(f"classifier dimension {model.dim} does not match {pc.kind} features ({X.shape[1]})")
        patents = {g: classify_image_types(model, p) for g, p in patents.items()}
        classes = model.hyperparams.get("classes", [])
        if pc.drawing_type is not None:
            if pc.drawing_type not in classes:
                raise ConfigError(f"drawing_type {pc.drawing_type!r} not among classifier classes {classes}")
            drawing = classes.index(pc.drawing_type)

    queries = sorted(qrels)
    collection = [p for g, p in patents.items() if g not in qrels]
    if not collection:
        raise ConfigError("patent collection is empty")
    grid = table_strategies(drawing)
    out = Path(config.out) / "patent"
    cells = {}
    for cell in pc.strategies:
        rankings, aps, precs = {}, [], []
        for q in queries:
            ranked = rank_patents(patents[q], collection, grid[cell])
            rankings[q] = [[pid, None if s == SENTINEL else s] for pid, s in ranked]
            rel = [pid in set(qrels[q]) for pid, _ in ranked]
            ap = average_precision(rel)
            if not math.isnan(ap):
                aps.append(ap)
            precs.append(precision_at(rel, pc.top_k))
        cells[cell] = {"MAP": math.fsum(aps) / len(aps) if aps else float("nan"),
                       f"P@{pc.top_k}": math.fsum(precs) / len(precs),
                       "excluded_queries": len(queries) - len(aps)}
        write_json(out / f"ranking_{cell}.json", rankings)
    report = {"stores": stores, "cells": cells, "queries": queries, "collection_size": len(collection)}
    write_json(out / "summary.json", report)
    write_csv(out / "summary.csv", ["cell", "metric", "value"],
              [[c, m, v] for c in pc.strategies for m, v in sorted(cells[c].items())])
    snapshot_config(config)
    return report

