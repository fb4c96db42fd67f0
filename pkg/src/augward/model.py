"""GIN encoder, softmax classifier and the augmentation-aware regression head."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph

CHECKPOINT_MAGIC = b"AUGWCKP1"


@dataclass
class GraphBatch:
    """Disjoint union of graphs, ready for message passing."""

    features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray
    num_graphs: int
    agg_matrix: object
    readout_matrix: object

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> "GraphBatch":
        feats, src, dst, owner = [], [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            feats.append(g.features)
            if g.num_edges:
                e = g.edges + offset
                src.extend([e[:, 0], e[:, 1]])
                dst.extend([e[:, 1], e[:, 0]])
            owner.append(np.full(g.num_nodes, gi, dtype=np.int64))
            offset += g.num_nodes
        src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
        dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
        # sort messages by destination so segment sums accumulate in canonical order
        order = np.lexsort((src, dst))
        src, dst = src[order], dst[order]
        node_graph = np.concatenate(owner)
        return cls(
            np.vstack(feats), src, dst, node_graph, len(graphs),
            ad.segment_matrix(dst, offset), ad.segment_matrix(node_graph, len(graphs)),
        )

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))


def zeros(*shape) -> Tensor:
    return ad.parameter(np.zeros(shape))


class Linear:
    def __init__(self, weight: Tensor, bias: Tensor):
        self.weight = weight
        self.bias = bias

    @classmethod
    def init(cls, rng, fan_in: int, fan_out: int) -> "Linear":
        return cls(glorot(rng, fan_in, fan_out), zeros(1, fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.weight) + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class GinEncoder:
    """Sum-aggregation GIN with epsilon = 0 and a two-layer MLP per layer.

    The graph embedding concatenates the node-sum of every layer's
    embeddings, input layer included, so its width is ``d + L * H``.
    """

    def __init__(self, layers: list[tuple[Linear, Linear]], input_dim: int):
        self.layers = layers
        self.input_dim = input_dim

    @classmethod
    def init(cls, rng, input_dim: int, hidden: int = 64, num_layers: int = 4) -> "GinEncoder":
        layers = []
        width = input_dim
        for _ in range(num_layers):
            layers.append((Linear.init(rng, width, hidden), Linear.init(rng, hidden, hidden)))
            width = hidden
        return cls(layers, input_dim)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def hidden(self) -> int:
        return self.layers[0][0].weight.shape[1] if self.layers else 0

    @property
    def embedding_dim(self) -> int:
        return self.input_dim + self.num_layers * self.hidden

    def parameters(self) -> list[Tensor]:
        return [p for lin1, lin2 in self.layers for p in lin1.parameters() + lin2.parameters()]

    def __call__(self, batch: GraphBatch) -> Tensor:
        if batch.features.shape[1] != self.input_dim:
            raise ValueError(f"feature dim {batch.features.shape[1]} does not match encoder input {self.input_dim}")
        h = Tensor(batch.features)
        n = batch.num_nodes
        pooled = [ad.segment_sum(h, batch.node_graph, batch.num_graphs, batch.readout_matrix)]
        for lin1, lin2 in self.layers:
            msgs = ad.segment_sum(ad.gather_rows(h, batch.src), batch.dst, n, batch.agg_matrix)
            h = lin2(ad.relu(lin1(h + msgs)))
            pooled.append(ad.segment_sum(h, batch.node_graph, batch.num_graphs, batch.readout_matrix))
        return ad.concat_cols(pooled)


class Classifier:
    def __init__(self, linear: Linear):
        self.linear = linear

    def __call__(self, z: Tensor) -> Tensor:
        return ad.softmax_row(self.linear(z))

    def logits(self, z: Tensor) -> Tensor:
        return self.linear(z)

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()


class AwareHead:
    """Linear regression on ``[z_G, z_G+]``; order-sensitive by design."""

    def __init__(self, linear: Linear):
        self.linear = linear

    def __call__(self, z_g: Tensor, z_aug: Tensor) -> Tensor:
        if z_g.shape != z_aug.shape:
            raise ad.ShapeError(f"embedding shapes differ: {z_g.shape} vs {z_aug.shape}")
        return self.linear(ad.concat_cols([z_g, z_aug]))

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()


class AugWardModel:
    def __init__(self, encoder: GinEncoder, classifier: Classifier, head: AwareHead):
        self.encoder = encoder
        self.classifier = classifier
        self.head = head

    @classmethod
    def init(cls, input_dim: int, num_classes: int, hidden: int = 64, num_layers: int = 4,
             seed: int = 0) -> "AugWardModel":
        rng = np.random.default_rng(seed)
        enc = GinEncoder.init(rng, input_dim, hidden, num_layers)
        clf = Classifier(Linear.init(rng, enc.embedding_dim, num_classes))
        head = AwareHead(Linear.init(rng, 2 * enc.embedding_dim, 1))
        return cls(enc, clf, head)

    @property
    def num_classes(self) -> int:
        return self.classifier.linear.weight.shape[1]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (lin1, lin2) in enumerate(self.encoder.layers):
            out += [(f"encoder.{i}.mlp0.weight", lin1.weight), (f"encoder.{i}.mlp0.bias", lin1.bias),
                    (f"encoder.{i}.mlp1.weight", lin2.weight), (f"encoder.{i}.mlp1.bias", lin2.bias)]
        out += [("classifier.weight", self.classifier.linear.weight),
                ("classifier.bias", self.classifier.linear.bias),
                ("head.weight", self.head.linear.weight), ("head.bias", self.head.linear.bias)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def embed(self, graphs: Sequence[Graph]) -> np.ndarray:
        """Graph embeddings as a plain array (no tape kept)."""
        with ad.no_grad():
            return self.encoder(GraphBatch.from_graphs(graphs)).data

    def predict_proba(self, graphs: Sequence[Graph]) -> np.ndarray:
        with ad.no_grad():
            return self.classifier(self.encoder(GraphBatch.from_graphs(graphs))).data


def encode(enc: GinEncoder, g: Graph) -> Tensor:
    """Embedding of a single graph, shape ``(d + L * H,)``."""
    return ad.reshape(enc(GraphBatch.from_graphs([g])), (enc.embedding_dim,))


def classify(clf: Classifier, z: Tensor) -> Tensor:
    if z.data.ndim == 1:
        return ad.reshape(clf(ad.reshape(z, (1, -1))), (-1,))
    return clf(z)


def predict_difference(head: AwareHead, z_g: Tensor, z_aug: Tensor) -> Tensor:
    if z_g.data.ndim == 1:
        out = head(ad.reshape(z_g, (1, -1)), ad.reshape(z_aug, (1, -1)))
        return ad.reshape(out, ())
    return head(z_g, z_aug)


# checkpoints --------------------------------------------------------------------
#
# layout (little-endian):
#   8 bytes  magic "AUGWCKP1"
#   u32      tensor count
#   per tensor: u16 name length, utf-8 name, u32 ndim, u64 dims[ndim]
#   then every tensor's float64 buffer in row-major order, in table order

def save_checkpoint(model: AugWardModel, path) -> None:
    named = model.named_parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(named)))
        for name, t in named:
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> AugWardModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = 8
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    table = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + ln].decode()
        pos += ln
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        table.append((name, shape))
    arrays = {}
    for name, shape in table:
        size = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size

    layers = []
    i = 0
    while f"encoder.{i}.mlp0.weight" in arrays:
        lin1 = Linear(ad.parameter(arrays[f"encoder.{i}.mlp0.weight"]), ad.parameter(arrays[f"encoder.{i}.mlp0.bias"]))
        lin2 = Linear(ad.parameter(arrays[f"encoder.{i}.mlp1.weight"]), ad.parameter(arrays[f"encoder.{i}.mlp1.bias"]))
        layers.append((lin1, lin2))
        i += 1
    input_dim = layers[0][0].weight.shape[0]
    enc = GinEncoder(layers, input_dim)
    clf = Classifier(Linear(ad.parameter(arrays["classifier.weight"]), ad.parameter(arrays["classifier.bias"])))
    head = AwareHead(Linear(ad.parameter(arrays["head.weight"]), ad.parameter(arrays["head.bias"])))
    return AugWardModel(enc, clf, head)
