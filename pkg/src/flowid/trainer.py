"""Joint training and checkpointing.

One training step: (1) draw the two augmented views of the snapshot's
hypergraph, (2) run the extractor and encode the original plus both views
with shared parameters, (3) cross-entropy on the original graph's
predictions over labeled rows, (4) dual contrast on the projected view
embeddings, (5) one Adam update on

    total = l_pred + omega_n * l_n + omega_g * l_g.

All randomness (augmentation draws, dropout masks) derives from the rng
passed in, so a step is replayable: calling the loss with the same rng twice
gives identical values, which is what the finite-difference checks rely on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor_core as tc
from .augment import make_views
from .config import TrainConfig
from .contrast import group_group_loss, node_node_loss
from .encoder import encode, init_encoder_params, predict, project
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .extractors import EXTRACTOR_PREFIXES, ViewBatch, build_view_batch, extract, \
    init_extractor_params
from .hypergraph import FlowHypergraph, build_flow_hypergraph
from .ingest.records import FlowRecord
from .metrics import macro_f1_score
from .rng import Rng
from .tensor_core import Adam, ParameterStore, Tensor

EPS_LOG = 1e-12


@dataclass
class LabelSet:
    """Class indices plus the labeled-subset mask (one-hot rows feed the CE)."""

    y: np.ndarray     # (N,) int64; entries at unmasked positions are ignored
    mask: np.ndarray  # (N,) bool

    @classmethod
    def from_flows(cls, flows: list[FlowRecord]) -> "LabelSet":
        y = np.array([-1 if f.label is None else f.label for f in flows], dtype=np.int64)
        return cls(y=y, mask=y >= 0)

    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def n_classes(self) -> int:
        if not self.mask.any():
            raise ConfigError("label set has no labeled rows")
        return int(self.y[self.mask].max()) + 1

    def subsample(self, fraction: float, rng: Rng) -> "LabelSet":
        """Keep a stratified fraction of the labeled rows (label-scarcity runs):
        per class, ceil(fraction * count) labels survive, so no class vanishes."""
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"label fraction must be in (0, 1], got {fraction}")
        keep = np.zeros_like(self.mask)
        for cls in np.unique(self.y[self.mask]):
            rows = np.flatnonzero(self.mask & (self.y == cls))
            take = max(1, int(np.ceil(fraction * rows.size)))
            order = rng.child("labels", int(cls)).permutation(rows.size)
            keep[rows[order[:take]]] = True
        return LabelSet(self.y.copy(), keep)


def cross_entropy_loss(pred: Tensor, labels: LabelSet) -> Tensor:
    """Mean over labeled rows of -log(p_true + 1e-12)."""
    idx = labels.labeled_indices()
    if idx.size == 0:
        raise ConfigError("cross entropy needs at least one labeled row")
    rows = tc.gather_rows(pred, idx)
    p_true = tc.take_per_row(rows, labels.y[idx])
    return -tc.tmean(tc.log(p_true + EPS_LOG))


def total_loss(l_pred, l_n, l_g, omega_n: float, omega_g: float):
    """Weighted sum; works on floats and on graph tensors alike."""
    return l_pred + omega_n * l_n + omega_g * l_g


@dataclass
class Snapshot:
    """Everything the trainer needs about one hypergraph snapshot."""

    flow_ids: list[str]
    views: ViewBatch
    graph: FlowHypergraph
    labels: LabelSet


def build_parameter_store(cfg: TrainConfig, n_classes: int,
                          rng: Optional[Rng] = None) -> ParameterStore:
    rng = rng or Rng(cfg.seed).child("init")
    store = ParameterStore()
    init_extractor_params(store, cfg, rng)
    init_encoder_params(store, cfg, n_classes, rng)
    return store


def prepare_snapshot(flows: list[FlowRecord], store: ParameterStore,
                     cfg: TrainConfig) -> Snapshot:
    """Derive views, run the extractor once (inference mode, no gradients),
    and build the KNN hypergraph from those features. The incidence structure
    is fixed for the snapshot's lifetime; node features are recomputed from
    live parameters on every forward pass."""
    views = build_view_batch(flows, cfg.n, cfg.m)
    with tc.no_grad():
        emb = extract(store, views, cfg, mode="infer")
    labels = LabelSet.from_flows(flows)
    graph = build_flow_hypergraph(emb.z_mv.data, cfg.k,
                                  labels=np.where(labels.mask, labels.y, -1),
                                  include_self=cfg.include_self)
    return Snapshot([f.id for f in flows], views, graph, labels)


@dataclass
class StepLosses:
    total: Tensor
    l_pred: Tensor
    l_n: Tensor
    l_g: Tensor

    def stats(self) -> dict[str, float]:
        def val(t):
            return float(t.data) if isinstance(t, Tensor) else float(t)

        return {"l_pred": val(self.l_pred), "l_n": val(self.l_n),
                "l_g": val(self.l_g), "total": val(self.total)}


def step_losses(snapshot: Snapshot, store: ParameterStore, cfg: TrainConfig,
                rng: Rng, mode: str = "train") -> StepLosses:
    """Forward pass producing the full loss breakdown. Deterministic in
    (parameters, snapshot, rng), including dropout and augmentation draws."""
    emb = extract(store, snapshot.views, cfg, mode=mode, rng=rng.child("extract"))
    view1, view2 = make_views(snapshot.graph, cfg.aug1, cfg.aug2, rng.child("augment"))

    enc0 = encode(snapshot.graph, store, cfg, mode=mode, rng=rng.child("enc", 0),
                  features=emb.z_mv)
    probs = predict(enc0.node_final, store)
    l_pred = cross_entropy_loss(probs, snapshot.labels)

    enc1 = encode(view1, store, cfg, mode=mode, rng=rng.child("enc", 1), features=emb.z_mv)
    enc2 = encode(view2, store, cfg, mode=mode, rng=rng.child("enc", 2), features=emb.z_mv)
    v1, e1 = project(enc1, store)
    v2, e2 = project(enc2, store)
    l_n = node_node_loss(v1, v2, cfg.contrast.tau_n, eps=cfg.cosine_eps)
    if e1 is None or e2 is None:
        l_g = tc.constant(0.0)
    else:
        l_g = group_group_loss(e1, e2, cfg.contrast.tau_g, eps=cfg.cosine_eps)
    total = total_loss(l_pred, l_n, l_g, cfg.omega_n, cfg.omega_g)
    return StepLosses(total=total, l_pred=l_pred, l_n=l_n, l_g=l_g)


def _diverged_message(store: ParameterStore, stats: dict[str, float]) -> str:
    norms = sorted(store.value_norms().items(), key=lambda kv: -kv[1])[:8]
    dump = ", ".join(f"{name}={norm:.3e}" for name, norm in norms)
    return f"non-finite loss {stats}; largest parameter norms: {dump}"


def train_step(snapshot: Snapshot, store: ParameterStore, optimizer: Adam,
               cfg: TrainConfig, rng: Rng) -> dict[str, float]:
    losses = step_losses(snapshot, store, cfg, rng, mode="train")
    stats = losses.stats()
    if not all(np.isfinite(v) for v in stats.values()):
        raise TrainingDivergedError(_diverged_message(store, stats))
    store.zero_grad()
    tc.backward(losses.total)
    optimizer.step(store)
    return stats


def evaluate_probs(snapshot: Snapshot, store: ParameterStore,
                   cfg: TrainConfig) -> np.ndarray:
    """Inference-mode class distributions for every flow in the snapshot."""
    with tc.no_grad():
        emb = extract(store, snapshot.views, cfg, mode="infer")
        enc = encode(snapshot.graph, store, cfg, mode="infer", features=emb.z_mv)
        return predict(enc.node_final, store).data.copy()


def evaluate_macro_f1(snapshot: Snapshot, store: ParameterStore, cfg: TrainConfig,
                      n_classes: int) -> float:
    probs = evaluate_probs(snapshot, store, cfg)
    idx = snapshot.labels.labeled_indices()
    if idx.size == 0:
        raise ConfigError("evaluation snapshot has no labeled flows")
    return macro_f1_score(probs[idx].argmax(axis=1), snapshot.labels.y[idx], n_classes)


@dataclass
class FitResult:
    store: ParameterStore
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_macro_f1: float = float("nan")


def fit(train_snapshot: Snapshot, val_snapshot: Snapshot, cfg: TrainConfig,
        store: Optional[ParameterStore] = None) -> FitResult:
    """Full-snapshot training with per-epoch validation; returns the
    parameters from the best-validation-macro-F1 epoch."""
    cfg.validate()
    n_classes = max(train_snapshot.labels.n_classes(), val_snapshot.labels.n_classes())
    if store is None:
        store = build_parameter_store(cfg, n_classes)
    if cfg.freeze_extractor:
        for prefix in EXTRACTOR_PREFIXES:
            store.freeze(prefix)
    optimizer = Adam(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    rng = Rng(cfg.seed)

    result = FitResult(store=store.copy())
    result.best_val_macro_f1 = -1.0
    stale = 0
    for epoch in range(cfg.epochs):
        stats = train_step(train_snapshot, store, optimizer, cfg, rng.child("epoch", epoch))
        val_f1 = evaluate_macro_f1(val_snapshot, store, cfg, n_classes)
        entry = {"epoch": epoch, **stats, "val_macro_f1": val_f1}
        result.history.append(entry)
        if val_f1 > result.best_val_macro_f1:
            result.best_val_macro_f1 = val_f1
            result.best_epoch = epoch
            result.store = store.copy()
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    return result


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FLOWID01"
_CRC64_POLY = 0xC96C5795D7870F42  # CRC-64/XZ, reflected
_CRC64_TABLE: list[int] = []
for _i in range(256):
    _crc = _i
    for _ in range(8):
        _crc = (_crc >> 1) ^ _CRC64_POLY if _crc & 1 else _crc >> 1
    _CRC64_TABLE.append(_crc)


def crc64(data: bytes) -> int:
    """CRC-64/XZ (reflected, init and xorout all-ones)."""
    crc = 0xFFFFFFFFFFFFFFFF
    table = _CRC64_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def save_checkpoint(store: ParameterStore, path) -> None:
    """Write magic, manifest, float32 payloads, and a trailing CRC-64.

    Saving canonicalizes the live store to float32 precision so that
    predictions made before saving and after reloading agree exactly;
    repeated save/load cycles are byte-identical.
    """
    names = sorted(store.names())
    payloads = []
    manifest = []
    offset = 0
    for name in names:
        t = store.get(name)
        as_f32 = t.data.astype(np.float32)
        t.data[...] = as_f32.astype(np.float64)
        raw = as_f32.astype("<f4").tobytes()
        manifest.append({"name": name, "shape": list(t.data.shape),
                         "dtype": "f32", "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    manifest_bytes = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    body = (CHECKPOINT_MAGIC + struct.pack("<I", len(manifest_bytes))
            + manifest_bytes + b"".join(payloads))
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<Q", crc64(body)))


def load_checkpoint(path, into: Optional[ParameterStore] = None) -> ParameterStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 + 8:
        raise CheckpointError("checkpoint shorter than its fixed framing")
    if blob[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {blob[:8]!r}")
    body, trailer = blob[:-8], blob[-8:]
    if crc64(body) != struct.unpack("<Q", trailer)[0]:
        raise CheckpointError("checksum mismatch")
    (manifest_len,) = struct.unpack_from("<I", body, 8)
    manifest_start = 12
    payload_start = manifest_start + manifest_len
    if payload_start > len(body):
        raise CheckpointError("manifest length exceeds file size")
    try:
        manifest = json.loads(body[manifest_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc

    values: dict[str, np.ndarray] = {}
    payload = body[payload_start:]
    for entry in manifest:
        try:
            name, shape, dtype, offset = (entry["name"], tuple(entry["shape"]),
                                          entry["dtype"], entry["offset"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed manifest entry {entry!r}") from exc
        if dtype != "f32":
            raise CheckpointError(f"tensor {name}: unsupported dtype {dtype!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * count
        if offset < 0 or end > len(payload):
            raise CheckpointError(f"tensor {name}: payload range [{offset}, {end}) "
                                  f"outside data section of {len(payload)} bytes")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        values[name] = arr.reshape(shape).astype(np.float64)

    if into is None:
        into = ParameterStore()
        for name, arr in values.items():
            into.add(name, arr)
        return into
    for name in into.names():
        if name not in values:
            raise CheckpointError(f"tensor {name}: missing from checkpoint")
    try:
        into.load_values(values)
    except Exception as exc:
        raise CheckpointError(str(exc)) from exc
    return into
