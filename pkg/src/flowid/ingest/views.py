"""Per-flow view derivation: signed length sequences, payload matrices, TIGs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .records import FlowRecord


@dataclass
class LengthSequence:
    """Signed packet lengths (direction * length), zero-padded to length n."""

    values: np.ndarray  # (n,) int64


@dataclass
class PayloadMatrix:
    """First m payload bytes of the first n packets as integers, zero-padded."""

    values: np.ndarray  # (n, m) int64 in 0..255


@dataclass
class Tig:
    """Traffic interaction graph: packets as nodes, features (signed length,
    direction), layers = maximal runs of equal direction. Edges chain packets
    within a layer, and connect the last packet of each layer to the first
    packet of the next."""

    node_count: int
    adjacency: np.ndarray        # (nc, nc) binary symmetric, no self-loops
    features: np.ndarray         # (nc, 2) columns: signed length, direction
    layers: list[range]


def flow_to_length_sequence(flow: FlowRecord, n: int) -> LengthSequence:
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    values = np.zeros(n, dtype=np.int64)
    for i, pkt in enumerate(flow.packets[:n]):
        values[i] = pkt.direction * pkt.length
    return LengthSequence(values)


def flow_to_payload_matrix(flow: FlowRecord, n: int, m: int) -> PayloadMatrix:
    if n < 1 or m < 1:
        raise ConfigError(f"n and m must be >= 1, got n={n}, m={m}")
    values = np.zeros((n, m), dtype=np.int64)
    for i, pkt in enumerate(flow.packets[:n]):
        prefix = pkt.payload_prefix[:m]
        if prefix:
            values[i, : len(prefix)] = np.frombuffer(prefix, dtype=np.uint8)
    return PayloadMatrix(values)


def flow_to_tig(flow: FlowRecord, n: int) -> Tig:
    if not flow.packets:
        raise ConfigError("flow_to_tig requires at least one packet")
    packets = flow.packets[: max(n, 1)]
    count = len(packets)
    features = np.zeros((count, 2), dtype=np.float64)
    for i, pkt in enumerate(packets):
        features[i, 0] = pkt.direction * pkt.length
        features[i, 1] = pkt.direction

    layers: list[range] = []
    start = 0
    for i in range(1, count + 1):
        if i == count or packets[i].direction != packets[start].direction:
            layers.append(range(start, i))
            start = i

    adjacency = np.zeros((count, count), dtype=np.float64)
    for layer in layers:
        for i in range(layer.start, layer.stop - 1):
            adjacency[i, i + 1] = adjacency[i + 1, i] = 1.0
    for prev, nxt in zip(layers, layers[1:]):
        i, j = prev.stop - 1, nxt.start
        adjacency[i, j] = adjacency[j, i] = 1.0
    return Tig(count, adjacency, features, layers)
