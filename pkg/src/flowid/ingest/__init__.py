"""Capture parsing, flow records, per-flow views, and synthetic data."""

from .pcap import ParseResult, parse_capture
from .records import (
    FiveTuple,
    FlowRecord,
    PacketView,
    flow_from_json,
    flow_to_json,
    read_flows_jsonl,
    write_flows_jsonl,
)
from .synth import (
    SyntheticClassSpec,
    default_spec,
    generate_synthetic_flows,
    split_flows,
    three_class_spec,
    two_class_spec,
)
from .views import LengthSequence, PayloadMatrix, Tig, flow_to_length_sequence, \
    flow_to_payload_matrix, flow_to_tig
