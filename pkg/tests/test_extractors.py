"""View encoders: purity, zero propagation, hand oracles, fusion, gradients."""

import numpy as np
import pytest

import flowid.tensor_core as tc
from flowid.config import TrainConfig
from flowid.errors import ShapeError
from flowid.extractors import (
    LENGTH_SCALE,
    ViewBatch,
    build_view_batch,
    extract,
    fuse,
    init_extractor_params,
    interaction_encode,
    payload_encode,
    temporal_encode,
)
from flowid.ingest import FiveTuple, FlowRecord, PacketView, Tig, flow_to_tig
from flowid.rng import Rng
from flowid.tensor_core import ParameterStore, grad_check


def tiny_cfg(**overrides) -> TrainConfig:
    base = dict(n=6, m=4, extractor_dim=6, hidden=5, projection_dim=4,
                lstm_hidden=3, cnn_channels=(2, 3), conv_kernel=3, conv_padding=1,
                gcn_hidden=3, fuse_hidden=4, predict_hidden=4, k=2, depth=2)
    base.update(overrides)
    return TrainConfig(**base).validate()


def make_store(cfg, seed=0) -> ParameterStore:
    store = ParameterStore()
    init_extractor_params(store, cfg, Rng(seed))
    return store


def make_flow(dirs_lengths, payloads=None, fid="f"):
    packets = []
    for i, (d, ln) in enumerate(dirs_lengths):
        payload = payloads[i] if payloads else b"\x10\x20"
        packets.append(PacketView(float(i), d, ln, payload))
    return FlowRecord(fid, FiveTuple("10.0.0.1", "10.0.0.2", 1, 2, "tcp"), packets)


def random_views(cfg, n_flows, seed=0) -> ViewBatch:
    rng = np.random.default_rng(seed)
    flows = []
    for i in range(n_flows):
        count = int(rng.integers(2, cfg.n + 3))
        dirs_lengths = [(int(rng.choice([-1, 1])), int(rng.integers(40, 1500)))
                        for _ in range(count)]
        payloads = [bytes(rng.integers(0, 256, int(rng.integers(0, cfg.m + 2))).astype("uint8"))
                    for _ in range(count)]
        flows.append(make_flow(dirs_lengths, payloads, fid=f"f{i}"))
    return build_view_batch(flows, cfg.n, cfg.m)


# ---------------------------------------------------------------------------
# temporal view
# ---------------------------------------------------------------------------

def test_temporal_identical_rows_give_identical_embeddings():
    cfg = tiny_cfg()
    store = make_store(cfg)
    row = np.array([-60.0, 1500.0, -40.0, 0.0, 0.0, 0.0])
    out = temporal_encode(store, np.stack([row, row]), cfg)
    np.testing.assert_array_equal(out.data[0], out.data[1])


def test_temporal_zero_params_zero_row():
    cfg = tiny_cfg()
    store = make_store(cfg)
    for name in store.names():
        if name.startswith("temporal."):
            store.get(name).data[...] = 0.0
    out = temporal_encode(store, np.zeros((2, cfg.n)), cfg)
    np.testing.assert_array_equal(out.data, np.zeros((2, cfg.extractor_dim)))


def test_temporal_gradient_check_2x4_batch():
    cfg = tiny_cfg(n=4)
    store = make_store(cfg, seed=3)
    lengths = np.random.default_rng(5).integers(-1500, 1500, size=(2, 4)).astype(float)
    names = [n for n in store.names() if n.startswith("temporal.")]

    def loss(s):
        return tc.tsum(temporal_encode(s, lengths, cfg) ** 2)

    report = grad_check(loss, store, h=1e-5, tol=1e-4, param_names=names)
    assert report.passed, report.worst()


def test_temporal_shape_mismatch():
    cfg = tiny_cfg()
    with pytest.raises(ShapeError):
        temporal_encode(make_store(cfg), np.zeros((2, cfg.n + 1)), cfg)


# ---------------------------------------------------------------------------
# payload view
# ---------------------------------------------------------------------------

def test_payload_purity_and_zero_propagation():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=1)
    payloads = np.random.default_rng(0).integers(0, 256, size=(1, cfg.n, cfg.m)).astype(float)
    both = np.concatenate([payloads, payloads], axis=0)
    out = payload_encode(store, both, cfg)
    np.testing.assert_array_equal(out.data[0], out.data[1])
    # all-zero payload: conv biases are zero-initialized, so the row is zero
    zero = payload_encode(store, np.zeros((1, cfg.n, cfg.m)), cfg)
    np.testing.assert_allclose(zero.data, np.zeros((1, cfg.extractor_dim)), atol=1e-15)


def test_payload_default_output_dim_512():
    cfg = TrainConfig(n=40, m=16).validate()
    store = ParameterStore()
    init_extractor_params(store, cfg, Rng(0))
    payloads = np.random.default_rng(1).integers(0, 256, size=(3, 40, 16)).astype(float)
    out = payload_encode(store, payloads, cfg)
    assert out.shape == (3, 512)


def test_payload_gradients():
    cfg = tiny_cfg(n=4, m=3)
    store = make_store(cfg, seed=2)
    payloads = np.random.default_rng(3).integers(0, 256, size=(2, 4, 3)).astype(float)
    names = [n for n in store.names() if n.startswith("payload.")]

    def loss(s):
        return tc.tsum(payload_encode(s, payloads, cfg) ** 2)

    report = grad_check(loss, store, h=1e-5, tol=1e-4, param_names=names)
    assert report.passed, report.worst()


# ---------------------------------------------------------------------------
# interaction view
# ---------------------------------------------------------------------------

def test_interaction_single_node_closed_form():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=4)
    store.get("interaction.out.b").data[...] = 0.0
    flow = make_flow([(-1, 600)])
    tig = flow_to_tig(flow, cfg.n)
    out = interaction_encode(store, [tig], cfg).data[0]

    x = np.array([-600.0 / LENGTH_SCALE, -1.0])  # normalized adjacency is [[1]]
    h = np.maximum(x @ store.get("interaction.gcn1.w").data, 0.0)
    h = np.maximum(h @ store.get("interaction.gcn2.w").data, 0.0)
    expected = h @ store.get("interaction.out.w").data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_interaction_isomorphic_tigs_equal_rows():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=5)
    flow = make_flow([(-1, 100), (1, 900), (-1, 60)])
    tig_a = flow_to_tig(flow, cfg.n)
    tig_b = flow_to_tig(flow, cfg.n)
    out = interaction_encode(store, [tig_a, tig_b], cfg)
    np.testing.assert_array_equal(out.data[0], out.data[1])


def test_interaction_path_tig_dense_oracle():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=6)
    flow = make_flow([(-1, 60), (1, 1500), (1, 40)])
    tig = flow_to_tig(flow, cfg.n)
    out = interaction_encode(store, [tig], cfg).data[0]

    a_tilde = tig.adjacency + np.eye(3)
    d = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))
    a_norm = d @ a_tilde @ d
    x = tig.features / np.array([LENGTH_SCALE, 1.0])
    w1 = store.get("interaction.gcn1.w").data
    w2 = store.get("interaction.gcn2.w").data
    h = np.maximum(a_norm @ np.maximum(a_norm @ x @ w1, 0.0) @ w2, 0.0)
    pooled = h.mean(axis=0)
    expected = pooled @ store.get("interaction.out.w").data + store.get("interaction.out.b").data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_interaction_gradients():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=7)
    flows = [make_flow([(-1, 100), (1, 400)]), make_flow([(1, 900), (1, 50), (-1, 200)])]
    tigs = [flow_to_tig(f, cfg.n) for f in flows]
    names = [n for n in store.names() if n.startswith("interaction.")]

    def loss(s):
        return tc.tsum(interaction_encode(s, tigs, cfg) ** 2)

    assert grad_check(loss, store, h=1e-5, tol=1e-4, param_names=names).passed


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

def test_fuse_alpha_endpoints_exact():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=8)
    rng = np.random.default_rng(9)
    z_lstm = tc.constant(rng.normal(size=(3, cfg.extractor_dim)))
    z_cnn = tc.constant(rng.normal(size=(3, cfg.extractor_dim)))
    z_gcn = tc.constant(rng.normal(size=(3, cfg.extractor_dim)))

    store.get("fuse.alpha").data[...] = 1.0
    _, z_mv = fuse(store, z_lstm, z_cnn, z_gcn, cfg)
    np.testing.assert_array_equal(z_mv.data, z_gcn.data)

    store.get("fuse.alpha").data[...] = 0.0
    z_seq, z_mv = fuse(store, z_lstm, z_cnn, z_gcn, cfg)
    np.testing.assert_array_equal(z_mv.data, z_seq.data)


def test_fuse_midpoint_cancellation():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=10)
    store.get("fuse.alpha").data[...] = 0.5
    rng = np.random.default_rng(11)
    z_lstm = tc.constant(rng.normal(size=(2, cfg.extractor_dim)))
    z_cnn = tc.constant(rng.normal(size=(2, cfg.extractor_dim)))
    z_seq, _ = fuse(store, z_lstm, z_cnn, tc.constant(np.zeros((2, cfg.extractor_dim))), cfg)
    _, z_mv = fuse(store, z_lstm, z_cnn, tc.constant(-z_seq.data), cfg)
    np.testing.assert_allclose(z_mv.data, np.zeros_like(z_mv.data), atol=1e-12)


def test_fuse_alpha_clamped_outside_unit_interval():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=12)
    rng = np.random.default_rng(13)
    z = [tc.constant(rng.normal(size=(2, cfg.extractor_dim))) for _ in range(3)]
    store.get("fuse.alpha").data[...] = 7.0
    _, z_mv = fuse(store, *z, cfg)
    np.testing.assert_array_equal(z_mv.data, z[2].data)  # clamps to alpha = 1


# ---------------------------------------------------------------------------
# full extractor
# ---------------------------------------------------------------------------

def test_extract_full_path_gradient_check():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=14)
    # zero-initialized biases + zero-padded payload rows put conv outputs
    # exactly on the relu kink, where finite differences are undefined;
    # nudge every parameter to a generic point first
    nudge = np.random.default_rng(140)
    for name in store.names():
        t = store.get(name)
        t.data += nudge.uniform(-0.05, 0.05, t.data.shape)
    views = random_views(cfg, 3, seed=15)

    def loss(s):
        return tc.tsum(extract(s, views, cfg, mode="infer").z_mv)

    report = grad_check(loss, store, h=1e-5, tol=1e-4)
    assert report.passed, report.worst()


def test_extract_inference_deterministic():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=16)
    views = random_views(cfg, 4, seed=17)
    a = extract(store, views, cfg, mode="infer").z_mv.data
    b = extract(store, views, cfg, mode="infer").z_mv.data
    np.testing.assert_array_equal(a, b)


def test_extract_row_permutation_equivariance():
    cfg = tiny_cfg()
    store = make_store(cfg, seed=18)
    views = random_views(cfg, 5, seed=19)
    perm = np.array([3, 0, 4, 1, 2])
    permuted = ViewBatch(views.lengths[perm], views.payloads[perm],
                         [views.tigs[i] for i in perm])
    base = extract(store, views, cfg, mode="infer")
    moved = extract(store, permuted, cfg, mode="infer")
    for attr in ("z_lstm", "z_cnn", "z_gcn", "z_seq", "z_mv"):
        np.testing.assert_allclose(getattr(moved, attr).data,
                                   getattr(base, attr).data[perm], atol=1e-12)


def test_extract_train_mode_dropout_draws_differ():
    cfg = tiny_cfg(dropout=0.5)
    store = make_store(cfg, seed=20)
    views = random_views(cfg, 4, seed=21)
    a = extract(store, views, cfg, mode="train", rng=Rng(1)).z_seq.data
    b = extract(store, views, cfg, mode="train", rng=Rng(2)).z_seq.data
    assert not np.array_equal(a, b)
    c = extract(store, views, cfg, mode="train", rng=Rng(1)).z_seq.data
    np.testing.assert_array_equal(a, c)
