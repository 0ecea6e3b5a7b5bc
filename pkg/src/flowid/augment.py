"""Stochastic hypergraph transformations and contrastive view assembly.

Three operators, each an independent Bernoulli draw per element with the
stated perturbation probability:
  NF p_n: zero out whole node-feature rows,
  EW p_w: replace selected hyperedge weights with clamped Gaussian noise,
  ED p_m: drop individual node-hyperedge memberships.
Degrees are recomputed wherever (H, M) changed. Operators never mutate their
input graph. A pipeline is an ordered list of steps; an empty pipeline is the
identity view.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError
from .hypergraph import FlowHypergraph
from .rng import Rng

DEFAULT_NOISE_MEAN = 1.0  # centered on the unit initialization of M
DEFAULT_NOISE_STD = 0.5


def _check_prob(p: float, what: str) -> None:
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"{what} must be in [0, 1), got {p}")


def node_feature_mask(graph: FlowHypergraph, p_n: float, rng: Rng) -> FlowHypergraph:
    """Zero each node's feature row independently with probability p_n."""
    _check_prob(p_n, "node mask probability p_n")
    out = graph.copy()
    if p_n == 0.0:
        return out
    dropped = rng.bernoulli(p_n, graph.num_nodes)
    out.node_features[dropped] = 0.0
    keep = (~dropped).astype(np.float64)
    out.feature_mask = keep if out.feature_mask is None else out.feature_mask * keep
    return out


def hyperedge_weight_perturb(graph: FlowHypergraph, p_w: float,
                             noise_mean: float = DEFAULT_NOISE_MEAN,
                             noise_std: float = DEFAULT_NOISE_STD,
                             rng: Rng = None) -> FlowHypergraph:
    """Replace each hyperedge weight, independently with probability p_w, by
    max(0, Normal(noise_mean, noise_std^2)); node degrees follow M."""
    _check_prob(p_w, "weight perturbation probability p_w")
    if noise_std <= 0:
        raise ConfigError(f"noise_std must be positive, got {noise_std}")
    out = graph.copy()
    if p_w == 0.0:
        return out
    selected = rng.bernoulli(p_w, graph.num_edges)
    noise = np.maximum(rng.normal(noise_mean, noise_std, graph.num_edges), 0.0)
    out.edge_weights = np.where(selected, noise, out.edge_weights)
    out.node_degrees = out.incidence @ out.edge_weights
    return out


def membership_mask(graph: FlowHypergraph, p_m: float, rng: Rng) -> FlowHypergraph:
    """Drop each 1-entry of the incidence matrix independently with
    probability p_m; zero degrees are allowed (the encoder handles them)."""
    _check_prob(p_m, "membership mask probability p_m")
    out = graph.copy()
    if p_m == 0.0:
        return out
    dropped = rng.bernoulli(p_m, graph.incidence.shape)
    out.incidence = np.where(dropped, 0.0, out.incidence)
    out.recompute_degrees()
    return out


@dataclass(frozen=True)
class NodeFeatureMaskStep:
    p: float

    def apply(self, graph: FlowHypergraph, rng: Rng) -> FlowHypergraph:
        return node_feature_mask(graph, self.p, rng)


@dataclass(frozen=True)
class EdgeWeightPerturbStep:
    p: float
    noise_mean: float = DEFAULT_NOISE_MEAN
    noise_std: float = DEFAULT_NOISE_STD

    def apply(self, graph: FlowHypergraph, rng: Rng) -> FlowHypergraph:
        return hyperedge_weight_perturb(graph, self.p, self.noise_mean,
                                        self.noise_std, rng)


@dataclass(frozen=True)
class MembershipMaskStep:
    p: float

    def apply(self, graph: FlowHypergraph, rng: Rng) -> FlowHypergraph:
        return membership_mask(graph, self.p, rng)


Step = Union[NodeFeatureMaskStep, EdgeWeightPerturbStep, MembershipMaskStep]

_STEP_NAMES = {
    NodeFeatureMaskStep: "nf",
    EdgeWeightPerturbStep: "ew",
    MembershipMaskStep: "ed",
}


@dataclass(frozen=True)
class AugmentationPipeline:
    """Ordered augmentation steps; empty tuple = identity ("iden") view."""

    steps: tuple[Step, ...] = ()

    def apply(self, graph: FlowHypergraph, rng: Rng) -> FlowHypergraph:
        out = graph.copy()
        for i, step in enumerate(self.steps):
            out = step.apply(out, rng.child("step", i))
        return out

    def spec_string(self) -> str:
        if not self.steps:
            return "iden"
        return ",".join(f"{_STEP_NAMES[type(s)]}:{s.p:g}" for s in self.steps)


def parse_pipeline(spec: str, noise_mean: float = DEFAULT_NOISE_MEAN,
                   noise_std: float = DEFAULT_NOISE_STD) -> AugmentationPipeline:
    """Parse CLI specs like "nf:0.4,ed:0.4"; "" or "iden" is the identity."""
    spec = (spec or "").strip().lower()
    if spec in ("", "iden", "none"):
        return AugmentationPipeline()
    steps: list[Step] = []
    for part in spec.split(","):
        part = part.strip()
        try:
            op, val = part.split(":")
            p = float(val)
        except ValueError:
            raise ConfigError(f"bad augmentation step {part!r}; expected op:prob") from None
        _check_prob(p, f"probability in {part!r}")
        if op == "nf":
            steps.append(NodeFeatureMaskStep(p))
        elif op == "ew":
            steps.append(EdgeWeightPerturbStep(p, noise_mean, noise_std))
        elif op == "ed":
            steps.append(MembershipMaskStep(p))
        else:
            raise ConfigError(f"unknown augmentation op {op!r} (use nf/ew/ed)")
    return AugmentationPipeline(tuple(steps))


def make_views(graph: FlowHypergraph, t1: AugmentationPipeline,
               t2: AugmentationPipeline, rng: Rng) -> tuple[FlowHypergraph, FlowHypergraph]:
    """Apply t1/t2 to independent copies with independent substreams."""
    return t1.apply(graph, rng.child("view", 1)), t2.apply(graph, rng.child("view", 2))
