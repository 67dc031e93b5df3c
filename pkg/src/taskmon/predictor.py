"""Sequence-to-sequence next-goal predictor.

Token embeddings (size 20) feed a bidirectional gated encoder; a second
unidirectional layer folds the encoder outputs into a size-10 summary that
initializes the decoder. At every decoder step an additive two-layer network
scores each input atom segment, scores pass through a softmax, and the
context is the weight-averaged segment vector. A no-attention ablation
replaces the context with the mean of the encoder states. All gradients run
through the reverse-mode tape in autodiff; inference runs the same ops under
no_grad.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .language import (
    MalformedSequence,
    State,
    TaskSentence,
    TokenSeq,
    Vocabulary,
    decode_goal,
    encode_goal,
    encode_state,
    filter_by_types,
)

CHECKPOINT_VERSION = 1


class IndexOutOfVocab(Exception):
    pass


class NoValidProposal(Exception):
    pass


class EmptyDataset(Exception):
    pass


class NonFiniteLoss(Exception):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class CheckpointMismatch(Exception):
    pass


# --- parameters ---------------------------------------------------------------------


@dataclass
class GoalNetParams:
    """Every trainable array, plus the vocabulary binding. Group order is the
    canonical parameter order for the optimizer, checkpoints, and checks."""

    vocab_hash: str
    seps: tuple[int, int, int]  # (eos, ets, eoa) token ids
    use_attention: bool
    emb: ad.Tensor
    ef_Wx: ad.Tensor
    ef_Wh: ad.Tensor
    ef_b: ad.Tensor
    eb_Wx: ad.Tensor
    eb_Wh: ad.Tensor
    eb_b: ad.Tensor
    sum_Wx: ad.Tensor
    sum_Wh: ad.Tensor
    sum_b: ad.Tensor
    h0_W: ad.Tensor
    h0_b: ad.Tensor
    c0_W: ad.Tensor
    c0_b: ad.Tensor
    att_W1: ad.Tensor
    att_W2: ad.Tensor
    att_W: ad.Tensor
    dec_Wx: ad.Tensor
    dec_Wh: ad.Tensor
    dec_b: ad.Tensor
    out_W: ad.Tensor
    out_b: ad.Tensor

    @property
    def vocab_size(self) -> int:
        return self.emb.data.shape[0]

    @property
    def emb_dim(self) -> int:
        return self.emb.data.shape[1]

    @property
    def enc_hidden(self) -> int:
        return self.ef_Wh.data.shape[0]

    @property
    def summary_size(self) -> int:
        return self.sum_Wh.data.shape[0]

    @property
    def dec_hidden(self) -> int:
        return self.dec_Wh.data.shape[0]

    def groups(self) -> dict[str, ad.Tensor]:
        names = (
            "emb",
            "ef_Wx", "ef_Wh", "ef_b",
            "eb_Wx", "eb_Wh", "eb_b",
            "sum_Wx", "sum_Wh", "sum_b",
            "h0_W", "h0_b", "c0_W", "c0_b",
            "att_W1", "att_W2", "att_W",
            "dec_Wx", "dec_Wh", "dec_b",
            "out_W", "out_b",
        )
        return {n: getattr(self, n) for n in names}

    def validate(self):
        for name, t in self.groups().items():
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"parameter group {name} holds non-finite values")
        De, H, S, Hd = self.emb_dim, self.enc_hidden, self.summary_size, self.dec_hidden
        expect = {
            "ef_Wx": (De, 4 * H), "ef_Wh": (H, 4 * H), "ef_b": (4 * H,),
            "eb_Wx": (De, 4 * H), "eb_Wh": (H, 4 * H), "eb_b": (4 * H,),
            "sum_Wx": (2 * H, 4 * S), "sum_Wh": (S, 4 * S), "sum_b": (4 * S,),
            "h0_W": (S, Hd), "h0_b": (Hd,), "c0_W": (S, Hd), "c0_b": (Hd,),
            "att_W1": (2 * H, self.att_W1.data.shape[1]),
            "att_W2": (De + 2 * H + Hd, self.att_W1.data.shape[1]),
            "att_W": (self.att_W1.data.shape[1], 1),
            "dec_Wx": (De + 2 * H, 4 * Hd), "dec_Wh": (Hd, 4 * Hd), "dec_b": (4 * Hd,),
            "out_W": (Hd + 2 * H, self.vocab_size), "out_b": (self.vocab_size,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).data.shape
            if got != shape:
                raise ValueError(f"parameter group {name}: shape {got}, expected {shape}")

    @staticmethod
    def init(
        vocab: Vocabulary,
        seed: int = 0,
        use_attention: bool = True,
        emb_dim: int = 20,
        enc_hidden: int = 16,
        summary: int = 10,
        dec_hidden: int = 32,
        att_hidden: int = 32,
        scale: float = 0.08,
    ) -> "GoalNetParams":
        rng = np.random.default_rng(seed)
        V = vocab.size
        D2 = 2 * enc_hidden

        def p(*shape):
            return ad.param(shape, rng=rng, scale=scale)

        return GoalNetParams(
            vocab_hash=vocab.hash(),
            seps=(vocab.eos_id, vocab.ets_id, vocab.eoa_id),
            use_attention=use_attention,
            emb=p(V, emb_dim),
            ef_Wx=p(emb_dim, 4 * enc_hidden),
            ef_Wh=p(enc_hidden, 4 * enc_hidden),
            ef_b=p(4 * enc_hidden),
            eb_Wx=p(emb_dim, 4 * enc_hidden),
            eb_Wh=p(enc_hidden, 4 * enc_hidden),
            eb_b=p(4 * enc_hidden),
            sum_Wx=p(D2, 4 * summary),
            sum_Wh=p(summary, 4 * summary),
            sum_b=p(4 * summary),
            h0_W=p(summary, dec_hidden),
            h0_b=p(dec_hidden),
            c0_W=p(summary, dec_hidden),
            c0_b=p(dec_hidden),
            att_W1=p(D2, att_hidden),
            att_W2=p(emb_dim + D2 + dec_hidden, att_hidden),
            att_W=p(att_hidden, 1),
            dec_Wx=p(emb_dim + D2, 4 * dec_hidden),
            dec_Wh=p(dec_hidden, 4 * dec_hidden),
            dec_b=p(4 * dec_hidden),
            out_W=p(dec_hidden + D2, V),
            out_b=p(V),
        )


# --- encoded input -------------------------------------------------------------------


@dataclass
class EncodedState:
    """Embedded input tokens plus the atom-segment structure the attention
    attends over. boundaries[0] is the task-word span; each later span covers
    one atom's content tokens (separators excluded)."""

    ids: tuple[int, ...]
    vectors: np.ndarray
    boundaries: tuple[tuple[int, int], ...]


def segment_spans(ids, ets_id: int, eoa_id: int, eos_id: int) -> tuple[tuple[int, int], ...]:
    ids = list(ids)
    if ets_id not in ids:
        raise MalformedSequence(0, "missing <ets>")
    cut = ids.index(ets_id)
    spans = [(0, cut)]
    start = cut + 1
    for pos in range(cut + 1, len(ids)):
        if ids[pos] == eoa_id:
            spans.append((start, pos))
            start = pos + 1
        elif ids[pos] == eos_id:
            break
    return tuple(spans)


def embed(seq: TokenSeq, params: GoalNetParams) -> EncodedState:
    """Rows of the embedding matrix per token, plus segment boundaries."""
    for pos, t in enumerate(seq.ids):
        if not 0 <= t < params.vocab_size:
            raise IndexOutOfVocab(f"token id {t} at position {pos}")
    eos, ets, eoa = params.seps
    return EncodedState(
        ids=tuple(seq.ids),
        vectors=params.emb.data[list(seq.ids)].copy(),
        boundaries=segment_spans(seq.ids, ets, eoa, eos),
    )


def attend(
    segments: np.ndarray,
    prev_segment: np.ndarray,
    dec_hidden: np.ndarray,
    params: GoalNetParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Additive attention over segment vectors (task segment first): score
    per segment is Wᵀ tanh(W¹ τ_i + W² τ_y) with τ_y the concatenation of the
    previously predicted segment, the task segment, and the previous decoder
    hidden state. Returns (softmax weights, context = weighted segment sum)."""
    if segments.ndim != 2 or segments.shape[0] < 1:
        raise ValueError("need at least one segment vector")
    tau_y = np.concatenate([prev_segment, segments[0], dec_hidden])
    pre = np.tanh(segments @ params.att_W1.data + tau_y @ params.att_W2.data)
    scores = (pre @ params.att_W.data).reshape(-1)
    z = scores - scores.max()
    e = np.exp(z)
    weights = e / e.sum()
    return weights, weights @ segments


# --- batched graph construction -------------------------------------------------------


@dataclass
class _EncBatch:
    ids: np.ndarray  # (B, T) int64
    tok_mask: np.ndarray  # (B, T)
    M: np.ndarray  # (B, K, T) segment-mean mixers
    seg_mask: np.ndarray  # (B, K)


def _make_enc_batch(seqs: list[tuple[int, ...]], params: GoalNetParams) -> _EncBatch:
    eos, ets, eoa = params.seps
    B = len(seqs)
    T = max(len(s) for s in seqs)
    ids = np.full((B, T), eos, dtype=np.int64)
    tok_mask = np.zeros((B, T))
    spans_all = [segment_spans(s, ets, eoa, eos) for s in seqs]
    K = max(len(sp) for sp in spans_all)
    M = np.zeros((B, K, T))
    seg_mask = np.zeros((B, K))
    for b, (s, spans) in enumerate(zip(seqs, spans_all)):
        ids[b, : len(s)] = s
        tok_mask[b, : len(s)] = 1.0
        for k, (lo, hi) in enumerate(spans):
            if hi > lo:
                M[b, k, lo:hi] = 1.0 / (hi - lo)
                seg_mask[b, k] = 1.0
    return _EncBatch(ids, tok_mask, M, seg_mask)


def _encode_graph(params: GoalNetParams, eb: _EncBatch) -> dict:
    B, T = eb.ids.shape
    H = params.enc_hidden
    K = eb.M.shape[1]
    xs = [ad.embedding(params.emb, eb.ids[:, t]) for t in range(T)]

    hc = ad.const(np.zeros((B, 2 * H)))
    fwd = []
    for t in range(T):
        hc = ad.lstm_step(xs[t], hc, params.ef_Wx, params.ef_Wh, params.ef_b, eb.tok_mask[:, t : t + 1])
        fwd.append(ad.narrow(hc, 1, 0, H))
    hc = ad.const(np.zeros((B, 2 * H)))
    bwd: list = [None] * T
    for t in reversed(range(T)):
        hc = ad.lstm_step(xs[t], hc, params.eb_Wx, params.eb_Wh, params.eb_b, eb.tok_mask[:, t : t + 1])
        bwd[t] = ad.narrow(hc, 1, 0, H)
    enc = [ad.concat([fwd[t], bwd[t]], axis=1) for t in range(T)]

    S_sz = params.summary_size
    hc2 = ad.const(np.zeros((B, 2 * S_sz)))
    for t in range(T):
        hc2 = ad.lstm_step(enc[t], hc2, params.sum_Wx, params.sum_Wh, params.sum_b, eb.tok_mask[:, t : t + 1])
    summary = ad.narrow(hc2, 1, 0, S_sz)

    E3 = ad.stack_time(enc)  # (B, T, 2H)
    S = ad.seg_mix(eb.M, E3)  # (B, K, 2H)
    task_seg = ad.reshape(ad.narrow(S, 1, 0, 1), (B, 2 * H))
    lengths = eb.tok_mask.sum(axis=1, keepdims=True)
    mean_w = eb.tok_mask / np.maximum(lengths, 1.0)
    ctx_mean = ad.row_mix(mean_w, E3)  # (B, 2H): the no-attention context
    U = None
    if params.use_attention:
        U = ad.matmul(ad.reshape(S, (B * K, 2 * H)), params.att_W1)
    return {
        "B": B,
        "K": K,
        "S": S,
        "U": U,
        "task_seg": task_seg,
        "seg_mask": eb.seg_mask,
        "ctx_mean": ctx_mean,
        "summary": summary,
    }


def _dec_init(params: GoalNetParams, summary: ad.Tensor) -> ad.Tensor:
    h0 = ad.tanh(ad.add(ad.matmul(summary, params.h0_W), params.h0_b))
    c0 = ad.tanh(ad.add(ad.matmul(summary, params.c0_W), params.c0_b))
    return ad.concat([h0, c0], axis=1)


def _dec_step(
    params: GoalNetParams,
    env: dict,
    prev_emb: ad.Tensor,
    prev_seg: ad.Tensor,
    hc: ad.Tensor,
    mask_col: np.ndarray,
) -> tuple[ad.Tensor, ad.Tensor, Optional[ad.Tensor]]:
    """One decoder step; returns (logits, new [h|c], attention weights)."""
    Hd = params.dec_hidden
    h_prev = ad.narrow(hc, 1, 0, Hd)
    if params.use_attention:
        tau_y = ad.concat([prev_seg, env["task_seg"], h_prev], axis=1)
        V = ad.matmul(tau_y, params.att_W2)
        pre = ad.tanh(ad.add(env["U"], ad.repeat_rows(V, env["K"])))
        scores = ad.reshape(ad.matmul(pre, params.att_W), (env["B"], env["K"]))
        p = ad.masked_softmax(scores, env["seg_mask"])
        ctx = ad.weighted_ctx(p, env["S"])
    else:
        p = None
        ctx = env["ctx_mean"]
    x = ad.concat([prev_emb, ctx], axis=1)
    hc_new = ad.lstm_step(x, hc, params.dec_Wx, params.dec_Wh, params.dec_b, mask_col)
    h = ad.narrow(hc_new, 1, 0, Hd)
    logits = ad.add(ad.matmul(ad.concat([h, ctx], axis=1), params.out_W), params.out_b)
    return logits, hc_new, p


def _prev_segment_weights(tgt: np.ndarray, tgt_len: list[int], params: GoalNetParams) -> np.ndarray:
    """P[b, t, :] weights target-token embeddings into the mean of the last
    atom completed strictly before decode step t (zeros before the first)."""
    eos, ets, eoa = params.seps
    B, L = tgt.shape
    P = np.zeros((B, L, L))
    for b in range(B):
        spans = []
        start = 0
        for pos in range(tgt_len[b]):
            if tgt[b, pos] == eoa:
                spans.append((start, pos))
                start = pos + 1
        for t in range(L):
            done = [sp for sp in spans if sp[1] < t and sp[1] > sp[0]]
            if done:
                lo, hi = done[-1]
                P[b, t, lo:hi] = 1.0 / (hi - lo)
    return P


def _teacher_forced_loss(
    params: GoalNetParams, inputs: list[tuple[int, ...]], targets: list[tuple[int, ...]]
) -> tuple[ad.Tensor, int]:
    """Summed cross-entropy over all target tokens in the batch (teacher
    forcing), and the token count for averaging."""
    eos, ets, eoa = params.seps
    eb = _make_enc_batch(inputs, params)
    env = _encode_graph(params, eb)
    B = env["B"]
    L = max(len(t) for t in targets)
    tgt = np.full((B, L), eos, dtype=np.int64)
    tgt_mask = np.zeros((B, L))
    for b, t in enumerate(targets):
        tgt[b, : len(t)] = t
        tgt_mask[b, : len(t)] = 1.0
    dec_in = np.full((B, L), ets, dtype=np.int64)
    dec_in[:, 1:] = tgt[:, :-1]
    P = _prev_segment_weights(tgt, [len(t) for t in targets], params)
    Y3 = ad.embedding(params.emb, tgt)  # (B, L, De) for prev-segment means

    hc = _dec_init(params, env["summary"])
    losses = []
    n_total = 0
    for t in range(L):
        prev_emb = ad.embedding(params.emb, dec_in[:, t])
        prev_seg = ad.row_mix(P[:, t, :], Y3)
        logits, hc, _ = _dec_step(params, env, prev_emb, prev_seg, hc, tgt_mask[:, t : t + 1])
        loss_t, n_t = ad.ce_sum(logits, tgt[:, t], tgt_mask[:, t])
        losses.append(loss_t)
        n_total += n_t
    return ad.sum_tensors(losses), n_total


# --- decoding -------------------------------------------------------------------------


@dataclass
class DecodeResult:
    tokens: TokenSeq
    step_logps: tuple[float, ...]
    truncated: bool

    @property
    def log_prob(self) -> float:
        return float(sum(self.step_logps))


@dataclass
class GoalProposal:
    goal: State
    log_prob: float
    rank: int
    tokens: TokenSeq


@dataclass
class _Beam:
    tokens: list[int] = field(default_factory=list)
    logps: list[float] = field(default_factory=list)
    hc: np.ndarray = None
    prev_seg: np.ndarray = None
    group: list[int] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(self.logps))


def beam_decode(
    enc: EncodedState, params: GoalNetParams, width: int = 3, max_len: int = 24
) -> list[DecodeResult]:
    """Whole-sequence beam search; returns up to `width` results sorted by
    total log-probability, finished (EOS) or flagged truncated at max_len."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    eos, ets, eoa = params.seps
    De = params.emb_dim
    with ad.no_grad():
        env = _encode_graph(params, _make_enc_batch([enc.ids], params))
        hc0 = _dec_init(params, env["summary"]).data
        live = [_Beam(hc=hc0[0].copy(), prev_seg=np.zeros(De))]
        done: list[DecodeResult] = []
        for _ in range(max_len):
            if not live:
                break
            B = len(live)
            benv = {
                "B": B,
                "K": env["K"],
                "S": ad.const(np.repeat(env["S"].data, B, axis=0)),
                "U": ad.const(np.tile(env["U"].data, (B, 1))) if params.use_attention else None,
                "task_seg": ad.const(np.repeat(env["task_seg"].data, B, axis=0)),
                "seg_mask": np.repeat(env["seg_mask"], B, axis=0),
                "ctx_mean": ad.const(np.repeat(env["ctx_mean"].data, B, axis=0)),
            }
            prev_ids = [b.tokens[-1] if b.tokens else ets for b in live]
            prev_emb = ad.const(params.emb.data[prev_ids])
            prev_seg = ad.const(np.stack([b.prev_seg for b in live]))
            hc = ad.const(np.stack([b.hc for b in live]))
            logits, hc_new, _ = _dec_step(params, benv, prev_emb, prev_seg, hc, np.ones((B, 1)))
            logp = ad.log_softmax_np(logits.data)  # (B, V)

            candidates = []
            for i, b in enumerate(live):
                order = np.argsort(-logp[i], kind="stable")[: width + 1]
                for tok in order:
                    candidates.append((b.total + logp[i, int(tok)], i, int(tok)))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

            # top `width` extensions overall; EOS extensions retire to done
            next_live: list[_Beam] = []
            for total, i, tok in candidates[:width]:
                src = live[i]
                nb = _Beam(
                    tokens=src.tokens + [tok],
                    logps=src.logps + [float(logp[i, tok])],
                    hc=hc_new.data[i].copy(),
                    prev_seg=src.prev_seg.copy(),
                    group=list(src.group),
                )
                if tok == eos:
                    done.append(
                        DecodeResult(TokenSeq(tuple(nb.tokens)), tuple(nb.logps), truncated=False)
                    )
                    continue
                if tok == eoa:
                    if nb.group:
                        nb.prev_seg = params.emb.data[nb.group].mean(axis=0)
                        nb.group = []
                elif tok != ets:
                    nb.group.append(tok)
                next_live.append(nb)
            live = next_live
            if len(done) >= width:
                break
        for b in live:
            done.append(DecodeResult(TokenSeq(tuple(b.tokens)), tuple(b.logps), truncated=True))
    done.sort(key=lambda r: (-r.log_prob, r.tokens.ids))
    return done[:width]


def decode(enc: EncodedState, params: GoalNetParams, max_len: int = 24) -> DecodeResult:
    """Greedy decoding (beam of width 1)."""
    return beam_decode(enc, params, width=1, max_len=max_len)[0]


def infer_topk_ids(
    input_ids: tuple[int, ...],
    params: GoalNetParams,
    vocab: Vocabulary,
    k: int = 3,
    max_len: int = 24,
) -> list[GoalProposal]:
    """Top-k distinct well-formed goal states for an already-encoded input."""
    width = max(2 * k, 6)
    results = beam_decode(embed(TokenSeq(tuple(input_ids)), params), params, width, max_len)
    proposals: list[GoalProposal] = []
    seen: set[frozenset] = set()
    for r in results:
        if r.truncated:
            continue
        try:
            goal = decode_goal(r.tokens, vocab)
        except MalformedSequence:
            continue
        if filter_by_types(goal.atoms, vocab) != set(goal.atoms):
            continue
        key = frozenset(a.key() for a in goal.atoms)
        if key in seen:
            continue
        seen.add(key)
        proposals.append(GoalProposal(goal, r.log_prob, rank=len(proposals) + 1, tokens=r.tokens))
        if len(proposals) == k:
            break
    if not proposals:
        raise NoValidProposal("no beam entry decoded to a well-formed goal")
    return proposals


def infer_topk(
    task: TaskSentence,
    s: State,
    params: GoalNetParams,
    vocab: Vocabulary,
    k: int = 3,
    max_len: int = 24,
) -> list[GoalProposal]:
    return infer_topk_ids(encode_state(task, s, vocab).ids, params, vocab, k, max_len)


# --- training -------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    """(task, state) -> next-goal example. The id tuples are the exact token
    forms used for learning; dataset growth may permute atom order there, so
    they are not always the canonical encodings of the symbolic fields."""

    task: TaskSentence
    state: State
    target: State
    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]

    @staticmethod
    def of(task: TaskSentence, state: State, target: State, vocab: Vocabulary) -> "TrainingPair":
        return TrainingPair(
            task,
            state,
            target,
            encode_state(task, state, vocab).ids,
            encode_goal(target, vocab).ids,
        )


DEFAULT_HYPER = {"batch": 5, "epochs": 100, "lr": 0.02}


def train(
    pairs: list[TrainingPair],
    vocab: Vocabulary,
    hyper: Optional[dict] = None,
    seed: int = 0,
    params: Optional[GoalNetParams] = None,
    use_attention: bool = True,
) -> tuple[GoalNetParams, list[float]]:
    """Teacher-forced training with adaptive-moment gradient descent and
    categorical cross-entropy. Returns (params, per-epoch mean token loss)."""
    if not pairs:
        raise EmptyDataset("no training pairs")
    h = dict(DEFAULT_HYPER)
    h.update(hyper or {})
    if params is None:
        params = GoalNetParams.init(vocab, seed=seed, use_attention=use_attention)
    opt = ad.Adam(list(params.groups().values()), lr=h["lr"])
    rng = np.random.default_rng([seed, 0xD0])
    inputs = [p.input_ids for p in pairs]
    targets = [p.target_ids for p in pairs]
    n = len(pairs)
    bs = max(1, int(h["batch"]))
    history: list[float] = []
    for epoch in range(int(h["epochs"])):
        order = rng.permutation(n)
        epoch_sum, epoch_tokens = 0.0, 0
        for bi, lo in enumerate(range(0, n, bs)):
            idx = order[lo : lo + bs]
            loss, n_tok = _teacher_forced_loss(
                params, [inputs[i] for i in idx], [targets[i] for i in idx]
            )
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(epoch, bi)
            opt.zero_grad()
            ad.mul(loss, ad.const(1.0 / max(n_tok, 1))).backward()
            opt.step()
            epoch_sum += float(loss.data)
            epoch_tokens += n_tok
        history.append(epoch_sum / max(epoch_tokens, 1))
    return params, history


def grad_check(
    params: GoalNetParams,
    pair: TrainingPair,
    eps: float = 1e-5,
    min_samples: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Analytic gradients versus central finite differences on sampled weights
    from every parameter group; returns the max relative error per group. The
    denominator is floored at `floor`: loss evaluation roundoff (~1e-11) on a
    near-zero gradient is measurement noise, not disagreement."""
    inputs, targets = [pair.input_ids], [pair.target_ids]

    def loss_mean() -> float:
        with ad.no_grad():
            loss, n = _teacher_forced_loss(params, inputs, targets)
        return float(loss.data) / max(n, 1)

    for t in params.groups().values():
        t.grad = None
    loss, n = _teacher_forced_loss(params, inputs, targets)
    ad.mul(loss, ad.const(1.0 / max(n, 1))).backward()

    rng = np.random.default_rng(seed)
    groups = params.groups()
    per_group = max(3, -(-min_samples // len(groups)))  # ceil division
    errors: dict[str, float] = {}
    for name, t in groups.items():
        size = t.data.size
        picks = rng.choice(size, size=min(per_group, size), replace=False)
        flat = t.data.reshape(-1)
        gflat = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        worst = 0.0
        for i in picks:
            keep = flat[i]
            flat[i] = keep + eps
            hi = loss_mean()
            flat[i] = keep - eps
            lo = loss_mean()
            flat[i] = keep
            num = (hi - lo) / (2.0 * eps)
            ana = gflat[i]
            err = abs(ana - num) / max(abs(ana) + abs(num), floor)
            worst = max(worst, err)
        errors[name] = worst
    return errors


# --- checkpointing --------------------------------------------------------------------


def save_params(params: GoalNetParams, path: str) -> None:
    """Deterministic zip: fixed timestamps, sorted entries, versioned meta."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "vocab_hash": params.vocab_hash,
        "seps": list(params.seps),
        "use_attention": params.use_attention,
        "groups": {n: list(t.data.shape) for n, t in params.groups().items()},
    }
    entries: dict[str, bytes] = {
        "meta.json": json.dumps(meta, sort_keys=True, indent=1).encode()
    }
    for name, t in params.groups().items():
        buf = io.BytesIO()
        np.lib.format.write_array(buf, t.data, version=(1, 0), allow_pickle=False)
        entries[f"{name}.npy"] = buf.getvalue()
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED, compresslevel=6) as z:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o600 << 16
            z.writestr(info, entries[name])


def load_params(path: str, vocab: Vocabulary) -> GoalNetParams:
    """Refuses checkpoints written against a different vocabulary."""
    with zipfile.ZipFile(path) as z:
        meta = json.loads(z.read("meta.json"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"checkpoint version {meta.get('version')}")
        if meta["vocab_hash"] != vocab.hash():
            raise CheckpointMismatch("checkpoint was written against a different vocabulary")
        arrays = {}
        for name, shape in meta["groups"].items():
            arr = np.lib.format.read_array(io.BytesIO(z.read(f"{name}.npy")), allow_pickle=False)
            if list(arr.shape) != shape:
                raise CheckpointMismatch(f"group {name}: stored shape {arr.shape} != {shape}")
            arrays[name] = ad.Tensor(arr, requires_grad=True)
    params = GoalNetParams(
        vocab_hash=meta["vocab_hash"],
        seps=tuple(meta["seps"]),
        use_attention=bool(meta["use_attention"]),
        **arrays,
    )
    params.validate()
    return params
