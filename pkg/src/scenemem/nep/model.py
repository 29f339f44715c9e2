"""Node Edge Predictor: node/edge embedders, masked transformer encoder over candidates, sigmoid head."""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .._rng import child_seed
from ..sgm import (EDGE_FEATURES, EDGE_PRIOR, EDGE_SEMANTIC, EDGE_TEMPORAL, NODE_FEATURES, NODE_SEMANTIC,
                   NODE_TEMPORAL, SceneGraphMemory, _id_sort_key, featurize_edge, featurize_node)
from . import tensor as T
from .tensor import Tensor

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    embed_layers: int = 2
    encoder_layers: int = 2
    heads: int = 2
    ffn: int = 64
    head_hidden: int = 64
    use_transformer: bool = True
    gcn_layers: int = 0
    cross_query_attention: bool = False
    no_priors: bool = False
    no_temporal: bool = False
    no_semantic: bool = False

    @property
    def width(self) -> int:
        return 2 * self.hidden


@dataclass
class Sample:
    """One query's candidates, featurised and ready for batching."""

    node_x: np.ndarray          # (n_nodes, 105) features of every node the sample refers to
    parent_idx: np.ndarray      # (c,) row in node_x of each candidate's parent
    child_idx: int              # row in node_x of the query node
    edge_x: np.ndarray          # (c, 13)
    labels: np.ndarray | None   # (c,) bool
    keys: list = field(default_factory=list)
    group: int = 0              # samples sharing a group attend jointly when cross-query attention is on
    adjacency: tuple | None = None  # (rows, cols, weights) row-mean aggregation incl. self, for GCN


def _ablate(cfg: ModelConfig, node_x: np.ndarray, edge_x: np.ndarray):
    node_x, edge_x = node_x.copy(), edge_x.copy()
    if cfg.no_temporal:
        node_x[:, NODE_TEMPORAL] = 0.0
        edge_x[:, EDGE_TEMPORAL] = 0.0
    if cfg.no_semantic:
        node_x[:, NODE_SEMANTIC] = 0.0
        edge_x[:, EDGE_SEMANTIC] = 0.0
    if cfg.no_priors:
        edge_x[:, EDGE_PRIOR] = 0.0
    return node_x, edge_x


def samples_from_memory(m: SceneGraphMemory, cfg: ModelConfig, queries=None, t: int | None = None,
                        with_labels: bool = False, group: int = 0) -> list[Sample]:
    t = m.t if t is None else t
    queries = sorted(m.query_ids if queries is None else queries)
    out = []
    gcn = cfg.gcn_layers > 0
    all_ids = sorted(m.nodes, key=_id_sort_key) if gcn else None
    adjacency = _mean_adjacency(m, all_ids) if gcn else None
    for q in queries:
        keys = m.candidate_edges(q)
        if not keys:
            continue
        if gcn:
            ids = all_ids
        else:
            ids = sorted({k[0] for k in keys}) + [q]
        row = {n: i for i, n in enumerate(ids)}
        node_x = np.stack([featurize_node(m.nodes[n], t) for n in ids])
        edge_x = np.stack([featurize_edge(m.edges[k], m, t) for k in keys])
        node_x, edge_x = _ablate(cfg, node_x, edge_x)
        labels = None
        if with_labels:
            missing = [k for k in keys if k not in m.labels]
            if missing:
                raise ValueError(f"record lacks labels for {len(missing)} candidate edges of {q!r}")
            labels = np.array([bool(m.labels[k]) for k in keys])
        out.append(Sample(node_x, np.array([row[k[0]] for k in keys]), row[q], edge_x, labels,
                          list(keys), group, adjacency))
    return out


def _mean_adjacency(m: SceneGraphMemory, ids) -> tuple:
    row = {n: i for i, n in enumerate(ids)}
    nbrs = {i: {i} for i in range(len(ids))}
    for (p, c, _) in m.edges:
        nbrs[row[p]].add(row[c])
        nbrs[row[c]].add(row[p])
    rows, cols, vals = [], [], []
    for i in range(len(ids)):
        for j in sorted(nbrs[i]):
            rows.append(i)
            cols.append(j)
            vals.append(1.0 / len(nbrs[i]))
    return np.array(rows), np.array(cols), np.array(vals)


# --- parameters -------------------------------------------------------------------

def _linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> dict:
    bound = 1.0 / math.sqrt(fan_in)
    return {"W": rng.uniform(-bound, bound, (fan_in, fan_out)), "b": rng.uniform(-bound, bound, fan_out)}


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(child_seed(seed, "nep-init"))
    params: dict[str, np.ndarray] = {}

    def put(prefix, layer):
        for k, v in layer.items():
            params[f"{prefix}.{k}"] = v

    h = cfg.hidden
    for name, fan_in in (("node", NODE_FEATURES), ("edge", EDGE_FEATURES)):
        widths = [fan_in] + [h] * cfg.embed_layers
        for i in range(cfg.embed_layers):
            put(f"{name}_mlp.{i}", _linear(rng, widths[i], widths[i + 1]))
    for g in range(cfg.gcn_layers):
        params[f"gcn.{g}.W"] = rng.uniform(-1 / math.sqrt(h), 1 / math.sqrt(h), (h, h))
    d = cfg.width
    if cfg.use_transformer:
        for li in range(cfg.encoder_layers):
            p = f"enc.{li}"
            for proj in ("q", "k", "v", "o"):
                put(f"{p}.{proj}", _linear(rng, d, d))
            put(f"{p}.ff1", _linear(rng, d, cfg.ffn))
            put(f"{p}.ff2", _linear(rng, cfg.ffn, d))
            for ln in ("ln1", "ln2"):
                params[f"{p}.{ln}.g"] = np.ones(d)
                params[f"{p}.{ln}.b"] = np.zeros(d)
    put("head.0", _linear(rng, d, cfg.head_hidden))
    put("head.1", _linear(rng, cfg.head_hidden, cfg.head_hidden))
    put("head.2", _linear(rng, cfg.head_hidden, 1))
    return params


# --- forward ----------------------------------------------------------------------

@dataclass
class Batch:
    node_x: np.ndarray
    parent_rows: np.ndarray     # (N,) into node_x
    child_rows: np.ndarray      # (N,) into node_x
    edge_x: np.ndarray          # (N, 13)
    seq_of: np.ndarray          # (N,) sequence index of each candidate
    pos_of: np.ndarray          # (N,) position within its sequence
    n_seq: int
    max_len: int
    sample_slices: list         # slice of the flat candidate axis per sample
    adjacency: tuple | None
    labels: np.ndarray | None


def make_batch(samples: list[Sample], cfg: ModelConfig) -> Batch:
    if not samples:
        raise ValueError("empty batch")
    node_blocks, parents, children, edges, slices = [], [], [], [], []
    seq_key_of: dict = {}
    seq_of, pos_of, seq_len = [], [], []
    adj_blocks = []
    offset = start = 0
    for i, s in enumerate(samples):
        c = len(s.parent_idx)
        if c == 0:
            raise ValueError("sample without candidates")
        node_blocks.append(s.node_x)
        parents.append(s.parent_idx + offset)
        children.append(np.full(c, s.child_idx + offset))
        edges.append(s.edge_x)
        key = s.group if cfg.cross_query_attention else i
        if key not in seq_key_of:
            seq_key_of[key] = len(seq_len)
            seq_len.append(0)
        q = seq_key_of[key]
        seq_of.extend([q] * c)
        pos_of.extend(range(seq_len[q], seq_len[q] + c))
        seq_len[q] += c
        slices.append(slice(start, start + c))
        start += c
        if cfg.gcn_layers:
            adj_blocks.append(s.adjacency)
        offset += len(s.node_x)
    adjacency = None
    if cfg.gcn_layers:
        shifts = np.cumsum([0] + [len(s.node_x) for s in samples[:-1]])
        adjacency = tuple(np.concatenate(parts) for parts in zip(
            *[(r + o, c + o, v) for (r, c, v), o in zip(adj_blocks, shifts)]))
    labels = None
    if all(s.labels is not None for s in samples):
        labels = np.concatenate([s.labels for s in samples])
    return Batch(np.concatenate(node_blocks), np.concatenate(parents), np.concatenate(children),
                 np.concatenate(edges), np.array(seq_of), np.array(pos_of), len(seq_len), max(seq_len),
                 slices, adjacency, labels)


def _dense(x: Tensor, P: dict, name: str) -> Tensor:
    return T.add(T.matmul(x, P[f"{name}.W"]), P[f"{name}.b"])


def _mlp(x: Tensor, P: dict, name: str, layers: int) -> Tensor:
    for i in range(layers):
        x = T.relu(_dense(x, P, f"{name}.{i}"))
    return x


def _attention(x: Tensor, P: dict, name: str, mask: np.ndarray, heads: int) -> Tensor:
    S, L, D = x.shape
    dh = D // heads

    def split(t):
        return T.transpose(T.reshape(t, (S, L, heads, dh)), (0, 2, 1, 3))

    q = split(_dense(x, P, f"{name}.q"))
    k = split(_dense(x, P, f"{name}.k"))
    v = split(_dense(x, P, f"{name}.v"))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    att = T.masked_softmax(scores, mask[:, None, :, :])
    ctx = T.reshape(T.transpose(T.matmul(att, v), (0, 2, 1, 3)), (S, L, D))
    return _dense(ctx, P, f"{name}.o")


def _encoder_layer(x: Tensor, P: dict, name: str, mask: np.ndarray, cfg: ModelConfig) -> Tensor:
    # post-norm: sublayer, residual add, then layer norm
    x = T.layer_norm(T.add(x, _attention(x, P, f"{name}", mask, cfg.heads)), P[f"{name}.ln1.g"], P[f"{name}.ln1.b"])
    ff = _dense(T.relu(_dense(x, P, f"{name}.ff1")), P, f"{name}.ff2")
    return T.layer_norm(T.add(x, ff), P[f"{name}.ln2.g"], P[f"{name}.ln2.b"])


def gcn_layer(h: Tensor, adjacency: tuple, W: Tensor) -> Tensor:
    """ReLU(A h W) with A the row-normalised adjacency including self loops."""
    rows, cols, vals = adjacency
    return T.relu(T.matmul(T.sparse_matmul(rows, cols, vals, h, h.shape[0]), W))


def forward_logits(P: dict[str, Tensor], batch: Batch, cfg: ModelConfig) -> Tensor:
    """Logits for every candidate in the batch, flat in sample order."""
    h_nodes = _mlp(Tensor(batch.node_x), P, "node_mlp", cfg.embed_layers)
    for g in range(cfg.gcn_layers):
        h_nodes = gcn_layer(h_nodes, batch.adjacency, P[f"gcn.{g}.W"])
    h_edges = _mlp(Tensor(batch.edge_x), P, "edge_mlp", cfg.embed_layers)
    pair = T.mul(T.add(T.take_rows(h_nodes, batch.parent_rows), T.take_rows(h_nodes, batch.child_rows)), 0.5)
    fused = T.concat([pair, h_edges], axis=-1)
    if cfg.use_transformer:
        flat_pos = batch.seq_of * batch.max_len + batch.pos_of
        x = T.reshape(T.scatter_rows(fused, flat_pos, batch.n_seq * batch.max_len),
                      (batch.n_seq, batch.max_len, cfg.width))
        valid = np.zeros(batch.n_seq * batch.max_len, dtype=bool)
        valid[flat_pos] = True
        valid = valid.reshape(batch.n_seq, batch.max_len)
        mask = valid[:, :, None] & valid[:, None, :]
        for li in range(cfg.encoder_layers):
            x = _encoder_layer(x, P, f"enc.{li}", mask, cfg)
        fused = T.take_rows(T.reshape(x, (batch.n_seq * batch.max_len, cfg.width)), flat_pos)
    h = T.relu(_dense(fused, P, "head.0"))
    h = T.relu(_dense(h, P, "head.1"))
    return T.reshape(_dense(h, P, "head.2"), (-1,))


def as_tensors(params: dict[str, np.ndarray], requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def forward(params: dict[str, np.ndarray], samples: list[Sample], cfg: ModelConfig) -> list[np.ndarray]:
    """Per-sample candidate probabilities in (0, 1)."""
    batch = make_batch(samples, cfg)
    z = forward_logits(as_tensors(params), batch, cfg).data
    p = T._sigmoid(z)
    return [p[s] for s in batch.sample_slices]


def predict_memory(params, m: SceneGraphMemory, cfg: ModelConfig, queries, t: int | None = None) -> dict:
    """Query id → list of (edge key, probability)."""
    samples = samples_from_memory(m, cfg, queries, t)
    if len(samples) != len(list(queries)):
        raise ValueError("every query needs at least one candidate edge")
    return {s.keys[0][1]: list(zip(s.keys, probs)) for s, probs in zip(samples, forward(params, samples, cfg))}


# --- checkpoints ------------------------------------------------------------------

def save_checkpoint(path, params: dict[str, np.ndarray], cfg: ModelConfig) -> None:
    meta = np.array([CHECKPOINT_FORMAT])
    arrays = {f"param/{k}": v for k, v in params.items()}
    cfg_items = {f"config/{k}": np.array(v) for k, v in asdict(cfg).items()}
    buf = io.BytesIO()
    np.savez(buf, checkpoint_format=meta, **arrays, **cfg_items)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    with np.load(path) as z:
        if int(z["checkpoint_format"][0]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format")
        params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
        kw = {k[len("config/"):]: z[k].item() for k in z.files if k.startswith("config/")}
    return params, ModelConfig(**kw)
