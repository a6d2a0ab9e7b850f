"""Downstream models trained over frozen embedding tables.

Two models, both built on the package's reverse-mode autodiff:

* a pair classifier (one hidden layer of 100 rectifier units, sigmoid
  output, BCE loss) for the Two Parts task;
* a permutation-invariant set encoder (induced set-attention blocks plus
  a single-seed attention pooling block) regressing a target embedding
  with MSE loss for the ranking tasks.

Parameters are float32; losses and metrics accumulate in float64.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from cadtext import autodiff as ad
from cadtext.autodiff import Adam, Tensor
from cadtext.embeddings import EmbeddingTable, embed_string

MLP_HIDDEN = 100


# ---------------------------------------------------------------------------
# Pair classifier

@dataclass
class MLPParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @staticmethod
    def init(dim: int, seed: int, dtype=np.float32) -> "MLPParams":
        rng = np.random.default_rng(seed)
        in_dim = 2 * dim
        return MLPParams(
            w1=Tensor(ad.uniform_init(rng, (in_dim, MLP_HIDDEN), in_dim, dtype), True),
            b1=Tensor(np.zeros((MLP_HIDDEN,), dtype=dtype), True),
            w2=Tensor(ad.uniform_init(rng, (MLP_HIDDEN, 1), MLP_HIDDEN, dtype), True),
            b2=Tensor(np.zeros((1,), dtype=dtype), True),
        )

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def astype(self, dtype) -> "MLPParams":
        return MLPParams(*[Tensor(t.data.astype(dtype), True) for t in self.tensors()])

    def clone(self) -> "MLPParams":
        return MLPParams(*[Tensor(t.data.copy(), True) for t in self.tensors()])


def mlp_logits(params: MLPParams, x) -> Tensor:
    hidden = ad.relu(ad.as_tensor(x) @ params.w1 + params.b1)
    return ad.reshape(hidden @ params.w2 + params.b2, (-1,))


def mlp_probability(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Positive-class probabilities, clipped into the open interval (0, 1)."""
    z = np.clip(mlp_logits(params, x).data, -30.0, 30.0)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class MLPTrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 20


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def pair_design_matrix(
    pairs, table: EmbeddingTable, cache: dict[str, np.ndarray] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated pair embeddings plus 0/1 labels."""
    cache = cache if cache is not None else {}

    def vec(s: str) -> np.ndarray:
        if s not in cache:
            cache[s] = embed_string(s, table)
        return cache[s]

    if not pairs:
        raise ValueError("empty pair set; the split is too small for the pair protocol")
    x = np.stack([np.concatenate([vec(p.part_a), vec(p.part_b)]) for p in pairs])
    y = np.array([1.0 if p.label == "positive" else 0.0 for p in pairs])
    return x.astype(np.float32), y


def mlp_train(
    train_pairs,
    val_pairs,
    table: EmbeddingTable,
    seed: int,
    cfg: MLPTrainConfig | None = None,
) -> tuple[MLPParams, TrainHistory]:
    """Train the pair classifier; returns the best-validation checkpoint."""
    cfg = cfg or MLPTrainConfig()
    cache: dict[str, np.ndarray] = {}
    x_train, y_train = pair_design_matrix(train_pairs, table, cache)
    x_val, y_val = pair_design_matrix(val_pairs, table, cache)

    rng = np.random.default_rng(seed)
    params = MLPParams.init(table.dim, seed)
    opt = Adam(params.tensors(), lr=cfg.learning_rate)
    history = TrainHistory()
    best = params.clone()
    best_val = np.inf
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            opt.zero_grad()
            loss = ad.bce_with_logits(mlp_logits(params, x_train[idx]), y_train[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch} (batch start {lo})"
                )
            loss.backward()
            opt.step()
            epoch_loss += value * len(idx)
        history.train_loss.append(epoch_loss / len(x_train))

        val_loss = float(ad.bce_with_logits(mlp_logits(params, x_val), y_val).data)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best = params.clone()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break
    return best, history


def mlp_accuracy(params: MLPParams, pairs, table: EmbeddingTable) -> float:
    x, y = pair_design_matrix(pairs, table)
    pred = mlp_probability(params, x) > 0.5
    return float(np.mean(pred == (y > 0.5)))


# ---------------------------------------------------------------------------
# Set encoder

@dataclass
class SetEncoderConfig:
    dim: int = 768               # embedding dimension in and out
    hidden: int = 512            # search grid {512, 768}
    inducing_points: int = 32    # search grid {32, 64, 128}
    heads: int = 4               # search grid {4, 8}
    blocks: int = 2
    layer_norm: bool = False     # training was more stable without it
    max_epochs: int = 200
    patience: int = 40
    learning_rate: float = 0.001
    batch_size: int = 64

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")


@dataclass
class MABParams:
    """One multihead attention block: q/k/v/output projections, a
    feed-forward sublayer, and optional layer-norm gains/biases."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    wf: Tensor
    bf: Tensor
    ln1_g: Tensor | None = None
    ln1_b: Tensor | None = None
    ln2_g: Tensor | None = None
    ln2_b: Tensor | None = None

    @staticmethod
    def init(hidden: int, layer_norm: bool, rng: np.random.Generator, dtype=np.float32) -> "MABParams":
        def lin(n_in, n_out):
            return (Tensor(ad.uniform_init(rng, (n_in, n_out), n_in, dtype), True),
                    Tensor(np.zeros((n_out,), dtype=dtype), True))

        wq, bq = lin(hidden, hidden)
        wk, bk = lin(hidden, hidden)
        wv, bv = lin(hidden, hidden)
        wo, bo = lin(hidden, hidden)
        wf, bf = lin(hidden, hidden)
        p = MABParams(wq, bq, wk, bk, wv, bv, wo, bo, wf, bf)
        if layer_norm:
            p.ln1_g = Tensor(np.ones((hidden,), dtype=dtype), True)
            p.ln1_b = Tensor(np.zeros((hidden,), dtype=dtype), True)
            p.ln2_g = Tensor(np.ones((hidden,), dtype=dtype), True)
            p.ln2_b = Tensor(np.zeros((hidden,), dtype=dtype), True)
        return p

    def tensors(self) -> list[Tensor]:
        out = [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv,
               self.wo, self.bo, self.wf, self.bf]
        for t in (self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b):
            if t is not None:
                out.append(t)
        return out


@dataclass
class ISABParams:
    inducing: Tensor  # (m, hidden) learned inducing-point array
    mab1: MABParams
    mab2: MABParams

    def tensors(self) -> list[Tensor]:
        return [self.inducing] + self.mab1.tensors() + self.mab2.tensors()


@dataclass
class SetEncoderParams:
    config: SetEncoderConfig
    w_in: Tensor
    b_in: Tensor
    blocks: list[ISABParams]
    pma_seed: Tensor  # (1, hidden) learned pooling seed vector
    pma: MABParams
    w_out: Tensor
    b_out: Tensor

    @staticmethod
    def init(cfg: SetEncoderConfig, seed: int, dtype=np.float32) -> "SetEncoderParams":
        rng = np.random.default_rng(seed)
        h = cfg.hidden
        blocks = []
        for _ in range(cfg.blocks):
            blocks.append(ISABParams(
                inducing=Tensor(ad.uniform_init(rng, (cfg.inducing_points, h), h, dtype), True),
                mab1=MABParams.init(h, cfg.layer_norm, rng, dtype),
                mab2=MABParams.init(h, cfg.layer_norm, rng, dtype),
            ))
        return SetEncoderParams(
            config=cfg,
            w_in=Tensor(ad.uniform_init(rng, (cfg.dim, h), cfg.dim, dtype), True),
            b_in=Tensor(np.zeros((h,), dtype=dtype), True),
            blocks=blocks,
            pma_seed=Tensor(ad.uniform_init(rng, (1, h), h, dtype), True),
            pma=MABParams.init(h, cfg.layer_norm, rng, dtype),
            w_out=Tensor(ad.uniform_init(rng, (h, cfg.dim), h, dtype), True),
            b_out=Tensor(np.zeros((cfg.dim,), dtype=dtype), True),
        )

    def tensors(self) -> list[Tensor]:
        out = [self.w_in, self.b_in]
        for block in self.blocks:
            out.extend(block.tensors())
        out.extend([self.pma_seed] + self.pma.tensors() + [self.w_out, self.b_out])
        return out

    def astype(self, dtype) -> "SetEncoderParams":
        clone = copy.deepcopy(self)
        for t in clone.tensors():
            t.data = t.data.astype(dtype)
            t.grad = None
        return clone

    def clone(self) -> "SetEncoderParams":
        return self.astype(self.tensors()[0].data.dtype)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, h = x.shape
    return ad.transpose(ad.reshape(x, (b, n, heads, h // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, heads, n, dh = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (b, n, heads * dh))


def _mab(q: Tensor, k: Tensor, p: MABParams, heads: int,
         key_mask: np.ndarray | None = None) -> Tensor:
    """Multihead attention block: residual attention plus a residual
    rectifier feed-forward sublayer (layer norm only when configured)."""
    qp = _split_heads(q @ p.wq + p.bq, heads)
    kp = _split_heads(k @ p.wk + p.bk, heads)
    vp = _split_heads(k @ p.wv + p.bv, heads)
    dh = qp.shape[-1]
    logits = qp @ ad.transpose(kp, (0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    if key_mask is not None:
        bias = np.where(key_mask[:, None, None, :] > 0, 0.0, -1e9)
        logits = logits + bias
    attended = _merge_heads(ad.softmax(logits, axis=-1) @ vp) @ p.wo + p.bo
    h = q + attended
    if p.ln1_g is not None:
        h = ad.layer_norm(h, p.ln1_g, p.ln1_b)
    out = h + ad.relu(h @ p.wf + p.bf)
    if p.ln2_g is not None:
        out = ad.layer_norm(out, p.ln2_g, p.ln2_b)
    return out


def set_encoder_batch_forward(
    params: SetEncoderParams, x: np.ndarray, mask: np.ndarray | None = None
) -> Tensor:
    """Encode padded input sets (batch, set, dim) into (batch, dim)."""
    cfg = params.config
    b = x.shape[0]
    z = ad.as_tensor(x) @ params.w_in + params.b_in
    expand = np.zeros((b, 1, 1), dtype=x.dtype)
    for block in params.blocks:
        inducing = block.inducing + expand  # broadcast (m, h) across the batch
        h = _mab(inducing, z, block.mab1, cfg.heads, key_mask=mask)
        z = _mab(z, h, block.mab2, cfg.heads, key_mask=None)
    seed = params.pma_seed + expand
    pooled = ad.reshape(_mab(seed, z, params.pma, cfg.heads, key_mask=mask), (b, cfg.hidden))
    return pooled @ params.w_out + params.b_out


def set_encoder_forward(params: SetEncoderParams, vectors: np.ndarray) -> np.ndarray:
    """Encode one unordered set of vectors; exactly permutation invariant
    up to floating summation order. Runs in float64."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("expected a non-empty (set_size, dim) array")
    if vectors.shape[1] != params.config.dim:
        raise ValueError(
            f"input dim {vectors.shape[1]} does not match config dim {params.config.dim}"
        )
    p64 = params.astype(np.float64)
    out = set_encoder_batch_forward(p64, vectors[None, :, :])
    return out.data[0]


# ---------------------------------------------------------------------------
# Set encoder training

@dataclass
class SetTrainData:
    """Padded minibatch arrays for (input set -> target embedding)."""

    x: np.ndarray      # (batch, max_set, dim)
    mask: np.ndarray   # (batch, max_set)
    target: np.ndarray # (batch, dim)


def pad_instances(
    instances: list[tuple[list[str], str]],
    vec: dict[str, np.ndarray],
    dim: int,
) -> SetTrainData:
    sizes = [len(inputs) for inputs, _ in instances]
    max_set = max(sizes)
    x = np.zeros((len(instances), max_set, dim), dtype=np.float32)
    mask = np.zeros((len(instances), max_set), dtype=np.float32)
    target = np.zeros((len(instances), dim), dtype=np.float32)
    for i, (inputs, tgt) in enumerate(instances):
        for j, s in enumerate(inputs):
            x[i, j] = vec[s]
        mask[i, : len(inputs)] = 1.0
        target[i] = vec[tgt]
    return SetTrainData(x=x, mask=mask, target=target)


def embedding_cache(strings, table: EmbeddingTable) -> dict[str, np.ndarray]:
    cache: dict[str, np.ndarray] = {}
    for s in strings:
        if s not in cache:
            cache[s] = embed_string(s, table).astype(np.float32)
    return cache


def set_encoder_train(
    train_sampler,
    val_instances: list[tuple[list[str], str]],
    table: EmbeddingTable,
    cfg: SetEncoderConfig,
    seed: int,
) -> tuple[SetEncoderParams, TrainHistory]:
    """Train the set encoder to regress target embeddings with MSE.

    ``train_sampler(rng)`` returns the epoch's (inputs, target) instances,
    so the removed-part choice can be resampled each epoch; validation
    instances stay frozen. Early stopping on validation loss, best
    checkpoint returned.
    """
    rng = np.random.default_rng(seed)
    params = SetEncoderParams.init(cfg, seed)
    opt = Adam(params.tensors(), lr=cfg.learning_rate)
    history = TrainHistory()

    strings: set[str] = set()
    for inputs, tgt in val_instances:
        strings.update(inputs)
        strings.add(tgt)
    probe = train_sampler(np.random.default_rng(seed))
    for inputs, tgt in probe:
        strings.update(inputs)
        strings.add(tgt)
    vec = embedding_cache(strings, table)

    val_data = pad_instances(val_instances, vec, cfg.dim)
    best = params.clone()
    best_val = np.inf
    since_best = 0

    for epoch in range(cfg.max_epochs):
        instances = train_sampler(rng)
        for inputs, tgt in instances:
            for s in inputs:
                if s not in vec:
                    vec[s] = embed_string(s, table).astype(np.float32)
            if tgt not in vec:
                vec[tgt] = embed_string(tgt, table).astype(np.float32)
        order = rng.permutation(len(instances))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            chunk = [instances[int(i)] for i in order[lo : lo + cfg.batch_size]]
            data = pad_instances(chunk, vec, cfg.dim)
            opt.zero_grad()
            pred = set_encoder_batch_forward(params, data.x, data.mask)
            loss = ad.mse_loss(pred, data.target)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(f"training diverged at epoch {epoch}: non-finite loss")
            loss.backward()
            opt.step()
            epoch_loss += value * len(chunk)
        history.train_loss.append(epoch_loss / len(instances))

        val_pred = set_encoder_batch_forward(params, val_data.x, val_data.mask)
        val_loss = float(ad.mse_loss(val_pred, val_data.target).data)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"training diverged at epoch {epoch}: non-finite validation loss")
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best = params.clone()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break
    return best, history


# ---------------------------------------------------------------------------
# Cosine ranking

def cosine_rank(predicted: np.ndarray, candidates: np.ndarray) -> int:
    """Index of the candidate with the highest cosine similarity.

    Zero-norm vectors get similarity -inf; ties break to the lowest index
    (argmax keeps the first maximum). Invariant under positive scaling.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.ndim != 2 or candidates.shape[0] < 1:
        raise ValueError("need at least one candidate")
    if candidates.shape[1] != predicted.shape[0]:
        raise ValueError(
            f"dim mismatch: predicted {predicted.shape[0]}, candidates {candidates.shape[1]}"
        )
    return int(cosine_rank_batch(predicted[None, :], candidates)[0])


def cosine_rank_batch(predicted: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Vectorized cosine_rank for a matrix of predicted vectors."""
    predicted = np.asarray(predicted, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    if predicted.shape[1] != candidates.shape[1]:
        raise ValueError(
            f"dim mismatch: predicted {predicted.shape[1]}, candidates {candidates.shape[1]}"
        )
    p_norm = np.linalg.norm(predicted, axis=1, keepdims=True)
    c_norm = np.linalg.norm(candidates, axis=1, keepdims=True)
    sims = (predicted @ candidates.T) / np.where(p_norm > 0, p_norm, 1.0)
    sims = sims / np.where(c_norm.T > 0, c_norm.T, 1.0)
    dead = (p_norm[:, 0] == 0)[:, None] | (c_norm[:, 0] == 0)[None, :]
    sims = np.where(dead, -np.inf, sims)
    return np.argmax(sims, axis=1)


# ---------------------------------------------------------------------------
# Gradient checking

def gradient_check(model_kind: str, params, probe_batch, seed: int = 0,
                   max_probes: int = 32, step: float = 1e-4) -> float:
    """Max relative error of analytic vs central finite-difference
    gradients, on a float64 copy of the parameters."""
    rng = np.random.default_rng(seed)
    p64 = params.astype(np.float64)
    if model_kind == "mlp":
        x, y = probe_batch
        x = np.asarray(x, dtype=np.float64)

        def loss_fn():
            return ad.bce_with_logits(mlp_logits(p64, x), y)

    elif model_kind == "set_encoder":
        x, mask, target = probe_batch
        x = np.asarray(x, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)

        def loss_fn():
            return ad.mse_loss(set_encoder_batch_forward(p64, x, mask), target)

    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    return ad.finite_difference_check(loss_fn, p64.tensors(), rng,
                                      max_probes=max_probes, step=step)


# ---------------------------------------------------------------------------
# Checkpoints: npz container with a JSON config header plus named tensors.

def _named_tensors(params) -> dict[str, np.ndarray]:
    if isinstance(params, MLPParams):
        return {"w1": params.w1.data, "b1": params.b1.data,
                "w2": params.w2.data, "b2": params.b2.data}
    out = {"w_in": params.w_in.data, "b_in": params.b_in.data,
           "pma_seed": params.pma_seed.data,
           "w_out": params.w_out.data, "b_out": params.b_out.data}
    def put(prefix: str, mab: MABParams):
        for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "wf", "bf",
                     "ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            t = getattr(mab, name)
            if t is not None:
                out[f"{prefix}.{name}"] = t.data
    for i, block in enumerate(params.blocks):
        out[f"block{i}.inducing"] = block.inducing.data
        put(f"block{i}.mab1", block.mab1)
        put(f"block{i}.mab2", block.mab2)
    put("pma", params.pma)
    return out


def save_checkpoint(params, path: str | Path) -> None:
    if isinstance(params, MLPParams):
        header = {"kind": "mlp"}
    else:
        header = {"kind": "set_encoder", "config": asdict(params.config)}
    arrays = _named_tensors(params)
    np.savez(path, __config__=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path: str | Path):
    with np.load(path, allow_pickle=False) as blob:
        header = json.loads(str(blob["__config__"]))
        arrays = {k: blob[k] for k in blob.files if k != "__config__"}
    if header["kind"] == "mlp":
        return MLPParams(*[Tensor(arrays[k].copy(), True) for k in ("w1", "b1", "w2", "b2")])
    cfg = SetEncoderConfig(**header["config"])
    params = SetEncoderParams.init(cfg, seed=0)
    named = _named_tensors(params)
    for name, tensor_data in named.items():
        np.copyto(tensor_data, arrays[name])
    return params
