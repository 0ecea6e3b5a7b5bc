"""Labeled synthetic flow generation for desk-scale runs and tests."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError
from ..rng import Rng
from .records import FiveTuple, FlowRecord, PacketView


@dataclass
class SyntheticClassSpec:
    """One traffic class: packet count / length / payload-byte distributions
    (uniform integer ranges, inclusive) and a cyclic direction pattern."""

    count: int
    packets: tuple[int, int] = (4, 12)
    length: tuple[int, int] = (60, 1500)
    payload_byte: tuple[int, int] = (0, 255)
    payload_len: tuple[int, int] = (0, 16)
    direction_pattern: tuple[int, ...] = (-1, 1)
    protocol: str = "tcp"


def generate_synthetic_flows(classes: list[SyntheticClassSpec], seed: int | Rng,
                             start_span: float = 600.0) -> list[FlowRecord]:
    """Deterministic labeled flows; class c gets label c."""
    if len(classes) < 2:
        raise ConfigError(f"need at least 2 classes, got {len(classes)}")
    for c, spec in enumerate(classes):
        if spec.count < 1:
            raise ConfigError(f"class {c}: count must be >= 1, got {spec.count}")
        if not spec.direction_pattern or any(d not in (-1, 1) for d in spec.direction_pattern):
            raise ConfigError(f"class {c}: direction pattern must be drawn from -1/+1")
    root = seed if isinstance(seed, Rng) else Rng(seed)

    flows: list[FlowRecord] = []
    for label, spec in enumerate(classes):
        for i in range(spec.count):
            rng = root.child("synth", label, i)
            n_pkts = int(rng.integers(*spec.packets))
            start = float(rng.uniform(0.0, start_span))
            key = FiveTuple(
                src_addr=f"10.{label}.{(i // 250) % 250}.{i % 250 + 1}",
                dst_addr=f"10.200.0.{label + 1}",
                src_port=int(1024 + (i % 60000)),
                dst_port=443,
                protocol=spec.protocol,
            )
            packets = []
            ts = start
            for p in range(n_pkts):
                direction = spec.direction_pattern[p % len(spec.direction_pattern)]
                length = int(rng.integers(*spec.length))
                plen = int(rng.integers(*spec.payload_len))
                payload = bytes(rng.integers(*spec.payload_byte, plen).astype("uint8")) \
                    if plen else b""
                packets.append(PacketView(ts, direction, length, payload))
                ts += float(rng.uniform(0.001, 0.2))
            flows.append(FlowRecord(f"syn-{label}-{i:05d}", key, packets, label))
    return flows


def two_class_spec(per_class: int) -> list[SyntheticClassSpec]:
    """Two well-separated classes (lengths, payload bytes, and shape all differ)."""
    return [
        SyntheticClassSpec(count=per_class, packets=(6, 14), length=(60, 180),
                           payload_byte=(10, 70), payload_len=(4, 12),
                           direction_pattern=(-1, 1)),
        SyntheticClassSpec(count=per_class, packets=(8, 18), length=(900, 1500),
                           payload_byte=(170, 250), payload_len=(8, 16),
                           direction_pattern=(-1, -1, 1)),
    ]


def three_class_spec(per_class: int) -> list[SyntheticClassSpec]:
    """Three classes with moderate separation (used by ablation-style runs)."""
    return [
        SyntheticClassSpec(count=per_class, packets=(5, 12), length=(60, 220),
                           payload_byte=(10, 90), payload_len=(2, 10),
                           direction_pattern=(-1, 1)),
        SyntheticClassSpec(count=per_class, packets=(6, 14), length=(250, 700),
                           payload_byte=(80, 170), payload_len=(4, 12),
                           direction_pattern=(-1, -1, 1)),
        SyntheticClassSpec(count=per_class, packets=(7, 16), length=(800, 1500),
                           payload_byte=(160, 250), payload_len=(6, 16),
                           direction_pattern=(-1, 1, 1, -1)),
    ]


def default_spec(n_classes: int, per_class: int) -> list[SyntheticClassSpec]:
    if n_classes == 2:
        return two_class_spec(per_class)
    if n_classes == 3:
        return three_class_spec(per_class)
    raise ConfigError(f"no built-in preset for {n_classes} classes (2 or 3 supported)")


def split_flows(flows: list[FlowRecord], fractions: tuple[float, float, float],
                seed: int | Rng) -> tuple[list[FlowRecord], list[FlowRecord], list[FlowRecord]]:
    """Deterministic stratified train/val/test split by label."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f <= 0 for f in fractions):
        raise ConfigError(f"split fractions must be positive and sum to 1, got {fractions}")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    by_label: dict[int | None, list[FlowRecord]] = {}
    for flow in flows:
        by_label.setdefault(flow.label, []).append(flow)
    train: list[FlowRecord] = []
    val: list[FlowRecord] = []
    test: list[FlowRecord] = []
    for label in sorted(by_label, key=lambda x: (x is None, x)):
        group = by_label[label]
        perm = rng.child("split", -1 if label is None else label).permutation(len(group))
        n_train = int(round(fractions[0] * len(group)))
        n_val = int(round(fractions[1] * len(group)))
        for rank, idx in enumerate(perm):
            if rank < n_train:
                train.append(group[idx])
            elif rank < n_train + n_val:
                val.append(group[idx])
            else:
                test.append(group[idx])
    return train, val, test
