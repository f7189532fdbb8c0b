"""Message-passing backbone with relation-aware joint aggregation.

Per layer, every arc (u -> v, r) carries the message
relu(W_msg @ h_u + W_rel @ e_r + b), which is the affine map of the
concatenation (h_u || e_r) with the weight stored as two column blocks; e_r is
a learnable embedding of relation r with the width of the layer input. Arcs of
all relations are summed jointly into their destination. The combine step is
either GIN style, MLP((1 + eps) * proj(h_v) + sum), with a width-matching
affine proj for the self term, or SAGE style,
relu(W_self @ h_v + W_nbr @ mean(messages)).

Disabling relation awareness drops the W_rel block and the embeddings, leaving
a plain joint-aggregation backbone (the ablation baseline). Both views of a
graph run through the identical parameter set.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Var
from .augment import RefactoredView
from .errors import NumericError
from .graph import MultiRelationGraph


class CrocModel:
    """Stacked relation-aware layers plus a 2-layer MLP classifier head."""

    def __init__(self, num_relations: int, in_dim: int, hidden_dim: int = 64,
                 num_layers: int = 2, backbone: str = "gin",
                 relation_aware: bool = True, seed: int = 0):
        if backbone not in ("gin", "sage"):
            raise ValueError(f"unknown backbone {backbone!r}")
        if num_layers < 1:
            raise ValueError("need at least one layer")
        self.num_relations = num_relations
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.backbone = backbone
        self.relation_aware = relation_aware
        self._params: list[Parameter] = []
        self.layers = []
        rng = np.random.default_rng(seed)
        f = hidden_dim
        for l in range(num_layers):
            p = in_dim if l == 0 else f
            layer = {}
            concat_width = 2 * p if relation_aware else p
            layer["msg_weight"] = self._new(rng, f"layer{l}.msg_weight", (f, p), concat_width)
            if relation_aware:
                layer["rel_weight"] = self._new(rng, f"layer{l}.rel_weight", (f, p), concat_width)
                layer["rel_emb"] = self._new(rng, f"layer{l}.rel_emb", (num_relations, p), p)
            layer["msg_bias"] = self._zeros(f"layer{l}.msg_bias", (f,))
            if backbone == "gin":
                layer["self_weight"] = self._new(rng, f"layer{l}.self_weight", (f, p), p)
                layer["self_bias"] = self._zeros(f"layer{l}.self_bias", (f,))
                layer["eps"] = self._zeros(f"layer{l}.eps", ())
                layer["combine1_weight"] = self._new(rng, f"layer{l}.combine1_weight", (f, f), f)
                layer["combine1_bias"] = self._zeros(f"layer{l}.combine1_bias", (f,))
                layer["combine2_weight"] = self._new(rng, f"layer{l}.combine2_weight", (f, f), f)
                layer["combine2_bias"] = self._zeros(f"layer{l}.combine2_bias", (f,))
            else:
                layer["self_weight"] = self._new(rng, f"layer{l}.self_weight", (f, p), p)
                layer["nbr_weight"] = self._new(rng, f"layer{l}.nbr_weight", (f, f), f)
            self.layers.append(layer)
        self.classifier = {
            "hidden_weight": self._new(rng, "classifier.hidden_weight", (f, f), f),
            "hidden_bias": self._zeros("classifier.hidden_bias", (f,)),
            "out_weight": self._new(rng, "classifier.out_weight", (2, f), f),
            "out_bias": self._zeros("classifier.out_bias", (2,)),
        }

    def _new(self, rng, name, shape, fan_in) -> Parameter:
        bound = 1.0 / np.sqrt(fan_in)
        p = Parameter(name, rng.uniform(-bound, bound, size=shape))
        self._params.append(p)
        return p

    def _zeros(self, name, shape) -> Parameter:
        p = Parameter(name, np.zeros(shape))
        self._params.append(p)
        return p

    def params(self) -> list[Parameter]:
        return list(self._params)

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self._params]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, saved in zip(self._params, snapshot):
            p.value[...] = saved

    def rja_message(self, neighbor_embedding: np.ndarray, relation_id: int,
                    layer_id: int) -> np.ndarray:
        """Single-vector message transform, kept for auditing the arc kernel."""
        if not 0 <= layer_id < self.num_layers:
            raise ValueError(f"layer id {layer_id} out of range")
        if not 0 <= relation_id < self.num_relations:
            raise ValueError(f"relation id {relation_id} out of range")
        layer = self.layers[layer_id]
        pre = layer["msg_weight"].value @ neighbor_embedding + layer["msg_bias"].value
        if self.relation_aware:
            pre = pre + layer["rel_weight"].value @ layer["rel_emb"].value[relation_id]
        return np.maximum(pre, 0.0)

    def embed(self, tape: Tape, graph: MultiRelationGraph,
              features: np.ndarray | None = None) -> Var:
        """Run the message-passing stack; returns the N x hidden_dim embeddings.

        ``features`` defaults to the graph's own matrix; a refactored view
        passes its mixed features over the same adjacency.
        """
        x = graph.features if features is None else features
        if x.shape[0] != graph.num_nodes:
            raise ValueError("feature row count must equal the node count")
        if self.backbone == "sage":
            deg = graph.in_degrees().astype(np.float64)
            inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)

        h = ad.constant(x)
        n = graph.num_nodes
        for layer in self.layers:
            transformed = ad.affine(tape, h, layer["msg_weight"], layer["msg_bias"])
            if self.relation_aware:
                rel_part = ad.affine(tape, layer["rel_emb"], layer["rel_weight"])
            # Joint aggregation: arcs of every relation sum into one per-node
            # total, relation by relation in index order.
            agg = None
            for r, rel in enumerate(graph.adjacency):
                rel_row = ad.gather_rows(tape, rel_part, np.array([r])) \
                    if self.relation_aware else None
                part = ad.relation_aggregate(tape, transformed, rel_row,
                                             rel.src, rel.dst, n)
                agg = part if agg is None else ad.add(tape, agg, part)
            if agg is None:
                agg = ad.constant(np.zeros((n, self.hidden_dim)))
            if self.backbone == "gin":
                self_term = ad.affine(tape, h, layer["self_weight"], layer["self_bias"])
                z = ad.add(tape, ad.scale_one_plus(tape, self_term, layer["eps"]), agg)
                hidden = ad.relu(tape, ad.affine(tape, z, layer["combine1_weight"],
                                                 layer["combine1_bias"]))
                h = ad.affine(tape, hidden, layer["combine2_weight"], layer["combine2_bias"])
            else:
                mean = ad.scale_rows(tape, agg, inv_deg)
                z = ad.add(tape, ad.affine(tape, h, layer["self_weight"]),
                           ad.affine(tape, mean, layer["nbr_weight"]))
                h = ad.relu(tape, z)
        if not np.isfinite(h.value).all():
            raise NumericError("non-finite node embeddings")
        return h

    def classify(self, tape: Tape, embeddings: Var) -> Var:
        """2-layer MLP head followed by a row softmax; rows sum to 1."""
        if embeddings.value.shape[1] != self.hidden_dim:
            raise ValueError("embedding width must equal hidden_dim")
        c = self.classifier
        hidden = ad.relu(tape, ad.affine(tape, embeddings, c["hidden_weight"], c["hidden_bias"]))
        logits = ad.affine(tape, hidden, c["out_weight"], c["out_bias"])
        return ad.softmax_rows(tape, logits)

    def forward_two_views(self, tape: Tape, graph: MultiRelationGraph,
                          view: RefactoredView):
        """Shared-parameter forward on the original and the refactored features.

        Returns (h, h_prime, probs, probs_prime); adjacency is identical for
        both passes.
        """
        h = self.embed(tape, graph)
        h_prime = self.embed(tape, graph, view.mixed_features)
        probs = self.classify(tape, h)
        probs_prime = self.classify(tape, h_prime)
        return h, h_prime, probs, probs_prime

    def anomaly_scores(self, graph: MultiRelationGraph) -> np.ndarray:
        """Inference-only class-1 probabilities on the original graph."""
        tape = Tape(enabled=False)
        probs = self.classify(tape, self.embed(tape, graph))
        return probs.value[:, 1].copy()
