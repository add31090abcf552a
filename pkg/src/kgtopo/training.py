"""Log-sigmoid self-adversarial training of embedding models.

Per positive triple i with score s_i and negative scores s'_ij,

    L_i = -log sigma(margin + s_i) - sum_j w_ij log sigma(-margin - s'_ij)
    w_ij = softmax_j(temperature * s'_ij)        (treated as constants)

and the batch loss is the mean over i. Negatives corrupt tails only and
are drawn uniformly with no rejection, so false negatives stay in. Shared
mode draws one pool per step and reuses it for every positive in the
batch; independent mode draws a fresh row per positive.

Gradients are computed analytically per scorer and returned sparsely, as
(row id, gradient row) pairs for exactly the embedding rows the batch
touched. The optimizer is adaptive-moment with bias correction, applied
densely per touched row with a global step counter.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .graph import IndexedGraph
from .models import (
    DEFAULT_MARGIN,
    EmbeddingModel,
    _rotate_parts,
    _triplere_parts,
    score_embeddings,
)


@dataclass
class TrainConfig:
    margin: float = DEFAULT_MARGIN
    batch_size: int = 128
    negatives_per_positive: int = 16
    adversarial_temperature: float = 1.0
    learning_rate: float = 3e-3
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    negative_mode: str = "shared"  # {"shared", "independent"}
    patience: int = 5  # early stop on validation-MRR plateau; 0 disables
    val_sample: int = 2048  # validation triples ranked per epoch
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 1 or self.negatives_per_positive < 1:
            raise ValueError("batch_size and negatives_per_positive must be >= 1")
        if self.adversarial_temperature < 0:
            raise ValueError("adversarial_temperature must be >= 0")
        if self.negative_mode not in ("shared", "independent"):
            raise ValueError(f"unknown negative_mode {self.negative_mode!r}")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)  # per-epoch mean loss
    val_mrr: list[float] | None = None
    seconds: float = 0.0
    stopped_early: bool = False


@dataclass
class RowGradients:
    """Gradients for exactly the embedding rows a batch touched."""

    entity_ids: np.ndarray
    entity_grads: np.ndarray
    relation_ids: np.ndarray
    relation_grads: np.ndarray


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, model: EmbeddingModel, report: TrainReport):
        super().__init__(message)
        self.last_good_model = model
        self.report = report


def sample_negatives(
    batch: np.ndarray,
    num_entities: int,
    mode: str,
    rng: np.random.Generator,
    n_negatives: int,
) -> np.ndarray:
    """Uniform corrupted-tail ids: (n_negatives,) shared or (B, n_negatives)."""
    if num_entities <= 1:
        raise ValueError("negative sampling needs at least 2 entities")
    if mode == "shared":
        return rng.integers(0, num_entities, size=n_negatives, dtype=np.int64)
    if mode == "independent":
        return rng.integers(0, num_entities, size=(len(batch), n_negatives), dtype=np.int64)
    raise ValueError(f"unknown mode {mode!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def adversarial_loss(
    model: EmbeddingModel,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float,
    temperature: float,
) -> tuple[float, RowGradients]:
    """Batch loss and sparse row gradients.

    ``positives`` is (B, 3); ``negatives`` holds corrupted-tail ids, either
    a shared pool (N,) or per-positive rows (B, N).

    Raises:
        FloatingPointError: the loss is not finite (with diagnostics).
    """
    scorer = model.config.scorer
    p = model.config.norm
    pos = np.asarray(positives)
    neg = np.asarray(negatives)
    shared = neg.ndim == 1
    b = pos.shape[0]

    h_e = model.entity_table[pos[:, 0]].astype(np.float64)
    r_e = model.relation_table[pos[:, 1]].astype(np.float64)
    t_e = model.entity_table[pos[:, 2]].astype(np.float64)
    tneg_e = model.entity_table[neg].astype(np.float64)

    s_pos = score_embeddings(scorer, h_e, r_e, t_e, p)
    if shared:
        s_neg = score_embeddings(scorer, h_e[:, None, :], r_e[:, None, :], tneg_e[None, :, :], p)
    else:
        s_neg = score_embeddings(scorer, h_e[:, None, :], r_e[:, None, :], tneg_e, p)

    # Detached softmax weights over negatives.
    logits = temperature * s_neg
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)

    loss_terms = _softplus(-(margin + s_pos)) + (w * _softplus(margin + s_neg)).sum(axis=1)
    loss = float(loss_terms.mean())
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss (batch of {b}, scorer={scorer}, "
            f"max |entity|={np.abs(model.entity_table).max():.3g}, "
            f"max |relation|={np.abs(model.relation_table).max():.3g})"
        )

    # dL/ds for the positive and negative scores; weights carry no gradient.
    g_pos = -_sigmoid(-(margin + s_pos)) / b
    g_neg = w * _sigmoid(margin + s_neg) / b

    gh_p, gr_p, gt_p = _score_grads(scorer, h_e, r_e, t_e, g_pos, p)
    if shared:
        gh_n, gr_n, gt_n = _score_grads(
            scorer, h_e[:, None, :], r_e[:, None, :], tneg_e[None, :, :], g_neg, p
        )
        gh_n = gh_n.sum(axis=1)
        gr_n = gr_n.sum(axis=1)
        gt_n = gt_n.sum(axis=0)
        neg_ids = neg
    else:
        gh_n, gr_n, gt_n = _score_grads(scorer, h_e[:, None, :], r_e[:, None, :], tneg_e, g_neg, p)
        gh_n = gh_n.sum(axis=1)
        gr_n = gr_n.sum(axis=1)
        gt_n = gt_n.reshape(-1, gt_n.shape[-1])
        neg_ids = neg.reshape(-1)

    ent_ids = np.concatenate([pos[:, 0], pos[:, 2], neg_ids])
    ent_grads = np.concatenate([gh_p + gh_n, gt_p, gt_n])
    uniq_e, inv_e = np.unique(ent_ids, return_inverse=True)
    acc_e = np.zeros((len(uniq_e), model.dim), dtype=np.float64)
    np.add.at(acc_e, inv_e, ent_grads)

    uniq_r, inv_r = np.unique(pos[:, 1], return_inverse=True)
    acc_r = np.zeros((len(uniq_r), model.config.relation_width), dtype=np.float64)
    np.add.at(acc_r, inv_r, gr_p + gr_n)

    return loss, RowGradients(uniq_e, acc_e, uniq_r, acc_r)


def _score_grads(scorer: str, h, r, t, g, p):
    """(d score / d h, d r, d t) scaled by g, broadcast to full batch shape."""
    if scorer == "transe":
        du = _norm_grad((h + r) - t, p)
        gh = g[..., None] * du
        return gh, gh, -gh
    if scorer == "distmult":
        gl = g[..., None]
        return gl * (r * t), gl * (h * t), gl * (r * h)
    if scorer == "rotate":
        return _rotate_grads(h, r, t, g, p)
    if scorer == "triplere":
        rh, rm, rt = _triplere_parts(r)
        du = g[..., None] * _norm_grad((h * rh + rm) - t * rt, p)
        return du * rh, np.concatenate([du * h, du, -du * t], axis=-1), -du * rt
    raise ValueError(f"unknown scorer {scorer!r}")


def _norm_grad(u: np.ndarray, p: int) -> np.ndarray:
    """Gradient of s = -||u||_p with respect to u."""
    if p == 1:
        return -np.sign(u)
    n = np.sqrt((u * u).sum(axis=-1, keepdims=True))
    return -u / np.where(n == 0.0, 1.0, n)


def _rotate_grads(h, phases, t, g, p):
    d2 = phases.shape[-1]
    vr, vi = _rotate_parts(h, phases)
    ur = vr - t[..., :d2]
    ui = vi - t[..., d2:]
    mod = np.sqrt(ur * ur + ui * ui)
    if p == 1:
        safe = np.where(mod == 0.0, 1.0, mod)
        gur = -ur / safe
        gui = -ui / safe
    else:
        n = np.sqrt((mod * mod).sum(axis=-1, keepdims=True))
        n = np.where(n == 0.0, 1.0, n)
        gur = -ur / n
        gui = -ui / n
    gl = g[..., None]
    gur = gl * gur
    gui = gl * gui
    c, s = np.cos(phases), np.sin(phases)
    gh = np.concatenate([gur * c + gui * s, -gur * s + gui * c], axis=-1)
    gt = np.concatenate([-gur, -gui], axis=-1)
    gphase = gur * (-vi) + gui * vr
    return gh, gphase, gt


class Adam:
    """Adaptive-moment optimizer over the two embedding tables.

    Moments are dense arrays but each step touches only the rows carrying
    gradient; bias correction uses the global step counter.
    """

    def __init__(self, model: EmbeddingModel, config: TrainConfig):
        self.lr = config.learning_rate
        self.b1, self.b2, self.eps = config.beta1, config.beta2, config.epsilon
        self.m_ent = np.zeros_like(model.entity_table)
        self.v_ent = np.zeros_like(model.entity_table)
        self.m_rel = np.zeros_like(model.relation_table)
        self.v_rel = np.zeros_like(model.relation_table)
        self.t = 0

    def step(self, model: EmbeddingModel, grads: RowGradients) -> None:
        self.t += 1
        self._apply(model.entity_table, self.m_ent, self.v_ent, grads.entity_ids, grads.entity_grads)
        self._apply(
            model.relation_table, self.m_rel, self.v_rel, grads.relation_ids, grads.relation_grads
        )

    def _apply(self, table, m, v, ids, g) -> None:
        g = g.astype(np.float32)
        m[ids] = self.b1 * m[ids] + (1.0 - self.b1) * g
        v[ids] = self.b2 * v[ids] + (1.0 - self.b2) * g * g
        m_hat = m[ids] / (1.0 - self.b1**self.t)
        v_hat = v[ids] / (1.0 - self.b2**self.t)
        table[ids] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    g_train: IndexedGraph | np.ndarray,
    config: TrainConfig,
    model: EmbeddingModel,
    valid_triples: np.ndarray | None = None,
    log=None,
) -> tuple[EmbeddingModel, TrainReport]:
    """Train in place for config.epochs (or until the validation plateau).

    ``g_train`` may be the training-split IndexedGraph or a bare (n, 3) id
    array. Validation MRR, when requested, filters against the training
    triples only. ``log`` is an optional callable receiving a dict per
    epoch. On divergence the model is rolled back to the last epoch
    boundary and :class:`TrainingDiverged` is raised.
    """
    from .evaluation import EvalConfig, evaluate

    triples = g_train.store.triples if isinstance(g_train, IndexedGraph) else np.asarray(g_train)
    if triples.shape[0] == 0:
        raise ValueError("training split is empty")
    filter_graph = g_train if isinstance(g_train, IndexedGraph) else None

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model, config)
    report = TrainReport(val_mrr=[] if valid_triples is not None else None)
    n = triples.shape[0]
    best_val = -np.inf
    stale = 0
    started = time.perf_counter()
    snapshot = model.copy()

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        try:
            for lo in range(0, n, config.batch_size):
                batch = triples[perm[lo : lo + config.batch_size]]
                negatives = sample_negatives(
                    batch,
                    model.num_entities,
                    config.negative_mode,
                    rng,
                    config.negatives_per_positive,
                )
                loss, grads = adversarial_loss(
                    model, batch, negatives, config.margin, config.adversarial_temperature
                )
                optimizer.step(model, grads)
                loss_sum += loss * batch.shape[0]
        except FloatingPointError as err:
            report.seconds = time.perf_counter() - started
            raise TrainingDiverged(
                f"diverged in epoch {epoch + 1}: {err}", snapshot, report
            ) from err

        report.losses.append(loss_sum / n)
        snapshot = model.copy()

        entry = {"epoch": epoch + 1, "loss": report.losses[-1]}
        stop = False
        if valid_triples is not None and len(valid_triples):
            if filter_graph is None:
                raise ValueError("validation MRR requires an IndexedGraph for filtering")
            sample = valid_triples
            if config.val_sample and len(sample) > config.val_sample:
                idx = np.random.default_rng(config.seed + 1).choice(
                    len(sample), size=config.val_sample, replace=False
                )
                sample = sample[np.sort(idx)]
            frame = evaluate(model, filter_graph, sample, EvalConfig())
            val = float(frame["reciprocal_rank"].mean())
            report.val_mrr.append(val)
            entry["val_mrr"] = val
            if config.patience:
                if val > best_val:
                    best_val = val
                    stale = 0
                else:
                    stale += 1
                    stop = stale >= config.patience
        entry["seconds"] = time.perf_counter() - started
        if log:
            log(entry)
        if stop:
            report.stopped_early = True
            break

    report.seconds = time.perf_counter() - started
    model.check_finite()
    return model, report
