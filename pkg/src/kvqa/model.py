"""The reasoning model.

One forward pass runs a fixed number of reasoning steps. Each step re-reads
the question under a step-specific context, addresses the knowledge memory
with the focused question vector, fuses the read into a knowledge-aware
reasoning vector, and propagates that vector through the spatial graph to
update every object node. The final reasoning vector and the max-pooled node
features feed a two-layer classifier over the answer vocabulary.

Weight banks named ``step{t}.*`` are separate per step; everything else is
shared across steps. Linear maps carry no bias; only the LSTM gates, the
layer normalization, and the classifier head have additive terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore, Tensor, default_dtype, ops
from .graph import EDGE_FEATURE_DIM
from .memory import MemoryReadout, read_memory

VARIANTS = ("proposed", "average", "kv")
EDGE_SOFTMAX_MODES = ("global", "per_node")


def constant(data) -> Tensor:
    """A non-learnable tensor in the active precision mode."""
    return Tensor(np.asarray(data, dtype=default_dtype()))


@dataclass
class ModelConfig:
    """Widths and switches for the reasoning model.

    Defaults are the full-scale settings; :func:`small_config` shrinks them
    for laptop-sized experiments and tests.
    """

    num_classes: int
    embed_dim: int = 300
    node_input_dim: int = 300
    hidden: int = 512  # per direction, per layer
    lstm_layers: int = 2
    attn_width: int = 0  # question-attention inner width; 0 means 2*hidden
    mem_dim: int = 300
    graph_dim: int = 1024
    graph_attn_width: int = 0  # 0 means graph_dim
    heads: int = 4
    steps: int = 2
    dropout: float = 0.1
    memory_variant: str = "proposed"
    edge_softmax: str = "global"

    def __post_init__(self) -> None:
        if self.attn_width == 0:
            self.attn_width = 2 * self.hidden
        if self.graph_attn_width == 0:
            self.graph_attn_width = self.graph_dim
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 answer classes, got {self.num_classes}")
        if self.graph_dim % self.heads != 0:
            raise ValueError(
                f"graph width {self.graph_dim} must divide evenly into {self.heads} heads"
            )
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.memory_variant not in VARIANTS:
            raise ValueError(f"unknown memory variant {self.memory_variant!r}")
        if self.edge_softmax not in EDGE_SOFTMAX_MODES:
            raise ValueError(f"unknown edge softmax mode {self.edge_softmax!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("embed_dim", "node_input_dim", "hidden", "lstm_layers",
                     "attn_width", "mem_dim", "graph_dim", "graph_attn_width", "heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def sent_dim(self) -> int:
        """Width of one encoded question position (both directions)."""
        return 2 * self.hidden

    @property
    def head_dim(self) -> int:
        return self.graph_dim // self.heads

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "embed_dim": self.embed_dim,
            "node_input_dim": self.node_input_dim,
            "hidden": self.hidden,
            "lstm_layers": self.lstm_layers,
            "attn_width": self.attn_width,
            "mem_dim": self.mem_dim,
            "graph_dim": self.graph_dim,
            "graph_attn_width": self.graph_attn_width,
            "heads": self.heads,
            "steps": self.steps,
            "dropout": self.dropout,
            "memory_variant": self.memory_variant,
            "edge_softmax": self.edge_softmax,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def small_config(num_classes: int, embed_dim: int = 16, steps: int = 2, **overrides) -> ModelConfig:
    """A desk-scale configuration: every width shrunk, same structure."""
    base = dict(
        num_classes=num_classes,
        embed_dim=embed_dim,
        node_input_dim=embed_dim,
        hidden=16,
        lstm_layers=2,
        mem_dim=16,
        graph_dim=32,
        graph_attn_width=16,
        heads=4,
        steps=steps,
        dropout=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def _xavier(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def init_params(config: ModelConfig, seed: int = 0) -> ParamStore:
    """Create all weights: uniform Xavier matrices, zero biases, unit layer
    norm gains. The LSTM forget-gate bias starts at 1 so early training does
    not wash out the cell state. Per-step banks get one entry per step; the
    step-0 context bank exists for bank uniformity but is never applied
    (step 0 always uses the encoder context)."""
    rng = np.random.default_rng(seed)
    params = ParamStore()

    def mat(name: str, out_dim: int, in_dim: int) -> None:
        params.add(name, _xavier(rng, out_dim, in_dim))

    def vec(name: str, dim: int) -> None:
        params.add(name, _xavier(rng, 1, dim)[0])

    h = config.hidden
    sent = config.sent_dim
    for layer in range(config.lstm_layers):
        in_dim = config.embed_dim if layer == 0 else sent
        for direction in ("fw", "bw"):
            prefix = f"encoder.l{layer}.{direction}"
            mat(f"{prefix}.w_in", 4 * h, in_dim)
            mat(f"{prefix}.w_rec", 4 * h, h)
            bias = np.zeros(4 * h)
            bias[h:2 * h] = 1.0  # forget gate
            params.add(f"{prefix}.bias", bias)

    mat("qattn.ctx", config.attn_width, sent)
    vec("qattn.score", sent)
    for t in range(config.steps):
        mat(f"step{t}.qattn.gate", sent, config.attn_width)

    mat("ctx.fuse", sent, 2 * config.graph_dim)
    for t in range(config.steps):
        mat(f"step{t}.ctx.out", sent, sent)

    mat("mem.query.l1", config.mem_dim, sent)
    mat("mem.query.l2", config.mem_dim, config.mem_dim)
    mat("mem.key.l1", config.mem_dim, config.embed_dim)
    mat("mem.key.l2", config.mem_dim, config.mem_dim)
    mat("mem.value.l1", config.mem_dim, config.embed_dim)
    mat("mem.value.l2", config.mem_dim, config.mem_dim)

    mat("fuse.mix", config.graph_dim, sent + config.mem_dim)
    for t in range(config.steps):
        mat(f"step{t}.fuse.out", config.graph_dim, config.graph_dim)

    mat("graph.node_proj", config.graph_dim, config.node_input_dim)
    mat("graph.edge_proj", config.graph_dim, EDGE_FEATURE_DIM)
    ga = config.graph_attn_width
    mat("gattn.node.feat", ga, config.graph_dim)
    mat("gattn.node.query", ga, config.graph_dim)
    vec("gattn.node.score", ga)
    mat("gattn.edge.feat", ga, config.graph_dim)
    mat("gattn.edge.query", ga, config.graph_dim)
    vec("gattn.edge.score", ga)

    hd = config.head_dim
    for k in range(config.heads):
        mat(f"gnn.head{k}.nbr", hd, config.graph_dim)
        mat(f"gnn.head{k}.edge", hd, config.graph_dim)
        mat(f"gnn.head{k}.mix", hd, 2 * hd + config.graph_dim)
    mat("gnn.self", config.graph_dim, config.graph_dim)
    mat("gnn.merge", config.graph_dim, config.graph_dim)
    params.add("gnn.norm.gain", np.ones(config.graph_dim))
    params.add("gnn.norm.bias", np.zeros(config.graph_dim))

    mat("head.hidden.w", config.graph_dim, 2 * config.graph_dim)
    params.add("head.hidden.b", np.zeros(config.graph_dim))
    mat("head.out.w", config.num_classes, config.graph_dim)
    params.add("head.out.b", np.zeros(config.num_classes))
    return params


def _rows_linear(x: Tensor, weight: Tensor) -> Tensor:
    """Apply an (out, in) weight to each row of an (n, in) matrix."""
    return ops.matmul(x, ops.transpose(weight))


@dataclass
class StepTrace:
    """Everything one reasoning step attended to, for inspection and dumps."""

    question_attn: Tensor  # (S,)
    focused_question: Tensor  # (sent_dim,)
    memory: MemoryReadout | None  # None when knowledge guidance is ablated
    reasoning: Tensor  # (graph_dim,)
    node_attn: Tensor  # (M,)
    edge_attn: Tensor | None  # (M, K); None when the graph has no edges
    pooled: Tensor  # (graph_dim,)


@dataclass
class ModelOutput:
    logits: Tensor  # (num_classes,)
    steps: list[StepTrace] = field(default_factory=list)

    def predicted(self) -> int:
        return int(np.argmax(self.logits.numpy()))

    def top_k(self, k: int) -> list[int]:
        """Best k answer indices, score ties broken toward the lower index."""
        logits = self.logits.numpy()
        order = sorted(range(logits.shape[0]), key=lambda i: (-logits[i], i))
        return order[:k]


def encode_question(
    params: ParamStore,
    config: ModelConfig,
    question_vecs: np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the stacked bidirectional recurrent encoder.

    Returns the per-position encodings as an (S, 2*hidden) matrix and the
    initial context vector (forward final state joined with backward final
    state of the top layer). ``rng`` enables dropout between the stacked
    layers; evaluation passes None.
    """
    s_len = question_vecs.shape[0]
    if s_len == 0:
        raise ValueError("cannot encode an empty question")
    h = config.hidden
    inputs: list[Tensor] = [constant(question_vecs[s]) for s in range(s_len)]
    fw_states: list[Tensor] = []
    bw_states: list[Tensor] = []
    for layer in range(config.lstm_layers):
        if layer > 0:
            inputs = [ops.dropout(x, config.dropout, rng) for x in inputs]
        fw_states, bw_states = [], []
        for direction, order in (("fw", range(s_len)), ("bw", range(s_len - 1, -1, -1))):
            prefix = f"encoder.l{layer}.{direction}"
            w_in = params[f"{prefix}.w_in"]
            w_rec = params[f"{prefix}.w_rec"]
            bias = params[f"{prefix}.bias"]
            state = constant(np.zeros(h))
            cell = constant(np.zeros(h))
            collected = fw_states if direction == "fw" else bw_states
            for s in order:
                state, cell = ops.lstm_cell(inputs[s], state, cell, w_in, w_rec, bias)
                collected.append(state)
            if direction == "bw":
                collected.reverse()
        inputs = [ops.concat([fw_states[s], bw_states[s]]) for s in range(s_len)]
    encoded = ops.concat([ops.reshape(row, (1, config.sent_dim)) for row in inputs], axis=0)
    context = ops.concat([fw_states[-1], bw_states[0]])
    return encoded, context


def step_question_attention(params: ParamStore, config: ModelConfig, encoded: Tensor,
                            context: Tensor, step: int) -> tuple[Tensor, Tensor]:
    """Re-read the question under the current context.

    A context-derived gate modulates each position before a learned score
    vector turns it into attention; the result is the attention-weighted sum
    of position encodings.
    """
    if not 0 <= step < config.steps:
        raise ValueError(f"step {step} outside 0..{config.steps - 1}")
    gate = ops.matmul(params[f"step{step}.qattn.gate"],
                      ops.relu(ops.matmul(params["qattn.ctx"], context)))
    scores = ops.matmul(ops.mul(encoded, gate), params["qattn.score"])
    attn = ops.softmax(scores, axis=-1)
    focused = ops.matmul(attn, encoded)
    return attn, focused


def update_context(params: ParamStore, config: ModelConfig, reasoning: Tensor,
                   pooled: Tensor, step: int) -> Tensor:
    """Context for ``step`` computed from the previous step's outputs.

    Step 0 always uses the encoder context, so calling this with step 0 is an
    error.
    """
    if step < 1:
        raise ValueError("context updates start at step 1; step 0 uses the encoder context")
    if step >= config.steps:
        raise ValueError(f"step {step} outside 1..{config.steps - 1}")
    mixed = ops.relu(ops.matmul(params["ctx.fuse"], ops.concat([reasoning, pooled])))
    return ops.matmul(params[f"step{step}.ctx.out"], mixed)


def transform_memory(params: ParamStore, keys: np.ndarray,
                     values: np.ndarray) -> tuple[Tensor, Tensor]:
    """Project raw memory slots through the shared two-layer ReLU maps."""
    n, j, d = values.shape
    key_hats = ops.relu(_rows_linear(
        ops.relu(_rows_linear(constant(keys), params["mem.key.l1"])), params["mem.key.l2"]))
    flat = constant(values.reshape(n * j, d))
    value_flat = ops.relu(_rows_linear(
        ops.relu(_rows_linear(flat, params["mem.value.l1"])), params["mem.value.l2"]))
    value_hats = ops.reshape(value_flat, (n, j, value_flat.shape[1]))
    return key_hats, value_hats


def transform_query(params: ParamStore, focused: Tensor) -> Tensor:
    return ops.relu(ops.matmul(params["mem.query.l2"],
                               ops.relu(ops.matmul(params["mem.query.l1"], focused))))


def fuse_knowledge(params: ParamStore, focused: Tensor, knowledge: Tensor,
                   step: int) -> Tensor:
    """Blend the focused question with the memory read into the reasoning
    vector that conditions this step's graph update."""
    mixed = ops.elu(ops.matmul(params["fuse.mix"], ops.concat([focused, knowledge])))
    return ops.matmul(params[f"step{step}.fuse.out"], mixed)


def node_attention(params: ParamStore, nodes: Tensor, reasoning: Tensor) -> Tensor:
    """Per-node relevance to the reasoning vector; softmax over all nodes."""
    scores = ops.matmul(
        ops.tanh(ops.add(_rows_linear(nodes, params["gattn.node.feat"]),
                         ops.matmul(params["gattn.node.query"], reasoning))),
        params["gattn.node.score"])
    return ops.softmax(scores, axis=-1)


def edge_attention(params: ParamStore, config: ModelConfig, edges_proj: Tensor | None,
                   reasoning: Tensor, num_nodes: int) -> Tensor | None:
    """Per-edge relevance to the reasoning vector.

    Normalized over all edges by default, or within each node's neighbour
    list in per-node mode. Returns an (M, K) tensor aligned with the edge
    slot layout, or None for an edgeless graph.
    """
    if edges_proj is None:
        return None
    num_neighbours = edges_proj.shape[0] // num_nodes
    scores = ops.matmul(
        ops.tanh(ops.add(_rows_linear(edges_proj, params["gattn.edge.feat"]),
                         ops.matmul(params["gattn.edge.query"], reasoning))),
        params["gattn.edge.score"])
    if config.edge_softmax == "global":
        return ops.reshape(ops.softmax(scores, axis=-1), (num_nodes, num_neighbours))
    return ops.softmax(ops.reshape(scores, (num_nodes, num_neighbours)), axis=1)


def graph_update(
    params: ParamStore,
    config: ModelConfig,
    nodes: Tensor,
    edges_proj: Tensor | None,
    adjacency: Tensor,
    node_attn: Tensor,
    edge_attn: Tensor | None,
) -> Tensor:
    """Multi-head attention update of every node.

    Per head, a node gathers its neighbours' attention-weighted features and
    its incoming edges' attention-weighted features, mixes them with its own
    projection, and gates the result by its own attention weight. Heads are
    concatenated, remixed, and layer-normalized in place of the old features.
    """
    m = nodes.shape[0]
    attn_col = ops.reshape(node_attn, (m, 1))
    self_part = _rows_linear(nodes, params["gnn.self"])
    head_outputs = []
    for k in range(config.heads):
        weighted_nodes = ops.mul(attn_col, _rows_linear(nodes, params[f"gnn.head{k}.nbr"]))
        nbr_part = ops.matmul(adjacency, weighted_nodes)
        if edges_proj is not None:
            num_neighbours = edge_attn.shape[1]
            eproj = _rows_linear(edges_proj, params[f"gnn.head{k}.edge"])
            eweighted = ops.mul(ops.reshape(edge_attn, (m * num_neighbours, 1)), eproj)
            edge_part = ops.tsum(
                ops.reshape(eweighted, (m, num_neighbours, config.head_dim)), axis=1)
        else:
            edge_part = constant(np.zeros((m, config.head_dim)))
        mixed = _rows_linear(ops.concat([nbr_part, edge_part, self_part], axis=1),
                             params[f"gnn.head{k}.mix"])
        head_outputs.append(ops.mul(attn_col, ops.relu(mixed)))
    merged = ops.concat(head_outputs, axis=1)
    return ops.layer_norm(ops.elu(_rows_linear(merged, params["gnn.merge"])),
                          params["gnn.norm.gain"], params["gnn.norm.bias"])


def pool_visual(nodes: Tensor) -> Tensor:
    """Elementwise max over all nodes."""
    return ops.max_pool(nodes, axis=0)


def answer_logits(params: ParamStore, config: ModelConfig, reasoning: Tensor,
                  pooled: Tensor, rng: np.random.Generator | None) -> Tensor:
    feats = ops.concat([reasoning, pooled])
    hidden = ops.relu(ops.add(ops.matmul(params["head.hidden.w"], feats),
                              params["head.hidden.b"]))
    hidden = ops.dropout(hidden, config.dropout, rng)
    return ops.add(ops.matmul(params["head.out.w"], hidden), params["head.out.b"])


def run_model(
    params: ParamStore,
    config: ModelConfig,
    question_vecs: np.ndarray,
    memory_keys: np.ndarray,
    memory_values: np.ndarray,
    node_feats: np.ndarray,
    neighbours: list[list[int]],
    edge_feats: np.ndarray,
    rng: np.random.Generator | None = None,
    ablate_knowledge: bool = False,
) -> ModelOutput:
    """Full forward pass for one sample.

    ``rng`` enables dropout (training mode); None disables it. With
    ``ablate_knowledge`` the memory read is skipped and a zero vector stands
    in, so the output cannot depend on the knowledge base; the reasoning
    vector degrades to a function of the question alone.
    """
    m = node_feats.shape[0]
    num_nbrs = len(neighbours[0]) if m > 1 else 0
    adjacency = np.zeros((m, m))
    for i, nbrs in enumerate(neighbours):
        for jdx in nbrs:
            adjacency[i, jdx] = 1.0
    adjacency_t = constant(adjacency)
    edges_proj = None
    if num_nbrs > 0:
        edge_flat = constant(edge_feats.reshape(m * num_nbrs, edge_feats.shape[2]))
        edges_proj = _rows_linear(edge_flat, params["graph.edge_proj"])

    encoded, context = encode_question(params, config, question_vecs, rng)
    nodes = _rows_linear(constant(node_feats), params["graph.node_proj"])
    if ablate_knowledge:
        key_hats = value_hats = None
    else:
        key_hats, value_hats = transform_memory(params, memory_keys, memory_values)

    traces: list[StepTrace] = []
    reasoning = pooled = None
    for t in range(config.steps):
        q_attn, focused = step_question_attention(params, config, encoded, context, t)
        if ablate_knowledge:
            readout = None
            knowledge = constant(np.zeros(config.mem_dim))
        else:
            q_hat = transform_query(params, focused)
            readout = read_memory(q_hat, key_hats, value_hats, config.memory_variant)
            knowledge = readout.read
        reasoning = fuse_knowledge(params, focused, knowledge, t)
        n_attn = node_attention(params, nodes, reasoning)
        e_attn = edge_attention(params, config, edges_proj, reasoning, m)
        nodes = graph_update(params, config, nodes, edges_proj, adjacency_t, n_attn, e_attn)
        pooled = pool_visual(nodes)
        traces.append(StepTrace(
            question_attn=q_attn,
            focused_question=focused,
            memory=readout,
            reasoning=reasoning,
            node_attn=n_attn,
            edge_attn=e_attn,
            pooled=pooled,
        ))
        if t < config.steps - 1:
            context = update_context(params, config, reasoning, pooled, t + 1)
    logits = answer_logits(params, config, reasoning, pooled, rng)
    return ModelOutput(logits=logits, steps=traces)


def sample_loss(output: ModelOutput, answer_index: int) -> Tensor:
    return ops.cross_entropy(output.logits, answer_index)


def batch_loss(losses: list[Tensor]) -> Tensor:
    """Mean of per-sample losses."""
    if not losses:
        raise ValueError("batch_loss needs at least one sample loss")
    if len(losses) == 1:
        return losses[0]
    return ops.mean(ops.stack(losses))
