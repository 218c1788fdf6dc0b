"""Corrupt token chunks into denoising examples and deploy a masking
policy over a whole corpus deterministically.

Every chunk is seeded independently from (global_seed, doc_id,
chunk_index), so output is byte-identical regardless of how chunks are
distributed over worker processes.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    MaskDecisions,
    random_span_mask,
    random_token_mask,
    salient_span_mask_with_fallback,
)
from .corpus import (
    MASK_ID,
    Chunk,
    Span,
    Vocab,
    chunk_document,
    iter_documents,
    tokenize,
)
from .errors import (
    AllMaskedError,
    InvalidRateError,
    MaskPolicyError,
    SpanOutOfBoundsError,
    VocabMismatchError,
)
from .policy import (
    DEFAULT_MAX_INPUT_LEN,
    DEFAULT_MAX_SPAN_LEN,
    MODE_TOP1,
    MODE_TOP5,
    TOP5_POOL,
    PolicyParams,
    score_positions,
    select_span,
    top_k_spans,
)
from .seeding import derive_rng, derive_seed

POLICY_RANDOM15 = "random15"
POLICY_RANDOM_SPAN = "randomspan"
POLICY_SALIENT = "salient"
POLICY_LEARNED = "learned"


@dataclass(frozen=True)
class MaskedExample:
    input_ids: tuple[int, ...]
    masked_positions: tuple[int, ...]
    target_ids: tuple[int, ...]
    doc_id: str
    chunk_index: int
    policy_tag: str
    seed_used: int

    def to_json_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "input_ids": list(self.input_ids),
            "masked_positions": list(self.masked_positions),
            "target_ids": list(self.target_ids),
            "policy": self.policy_tag,
            "seed": self.seed_used,
        }

    def original_ids(self) -> tuple[int, ...]:
        """Reconstruct the uncorrupted chunk."""
        ids = list(self.input_ids)
        for pos, tid in zip(self.masked_positions, self.target_ids):
            ids[pos] = tid
        return tuple(ids)


def masked_example_from_json_obj(obj: dict) -> MaskedExample:
    return MaskedExample(
        input_ids=tuple(obj["input_ids"]),
        masked_positions=tuple(obj["masked_positions"]),
        target_ids=tuple(obj["target_ids"]),
        doc_id=obj["doc_id"],
        chunk_index=obj["chunk_index"],
        policy_tag=obj["policy"],
        seed_used=obj["seed"],
    )


def corrupt(chunk: Chunk, decisions: MaskDecisions | Span,
            policy_tag: str = "", seed_used: int = 0) -> MaskedExample:
    """Replace the selected positions with <mask>, keeping targets."""
    n = len(chunk)
    if isinstance(decisions, Span):
        if decisions.end >= n:
            raise SpanOutOfBoundsError(
                f"span {decisions} out of bounds for chunk of length {n}")
        mask = np.zeros(n, dtype=bool)
        mask[decisions.start:decisions.end + 1] = True
    else:
        if len(decisions.d) != n:
            raise SpanOutOfBoundsError(
                f"decision vector of length {len(decisions.d)} does not "
                f"match chunk of length {n}")
        mask = decisions.d
    if n > 0 and bool(mask.all()):
        raise AllMaskedError(
            f"all {n} positions selected for masking in chunk "
            f"{chunk.doc_id}:{chunk.chunk_index}")
    positions = tuple(int(p) for p in np.flatnonzero(mask))
    ids = list(chunk.tokens.ids)
    targets = tuple(ids[p] for p in positions)
    for p in positions:
        ids[p] = MASK_ID
    return MaskedExample(
        input_ids=tuple(ids),
        masked_positions=positions,
        target_ids=targets,
        doc_id=chunk.doc_id,
        chunk_index=chunk.chunk_index,
        policy_tag=policy_tag,
        seed_used=seed_used,
    )


@dataclass
class PolicySpec:
    """Which masking policy to deploy, plus its knobs."""

    kind: str
    mode: str = MODE_TOP1
    rate: float = 0.15
    max_span_len: int = DEFAULT_MAX_SPAN_LEN
    max_input_len: int = DEFAULT_MAX_INPUT_LEN
    params: PolicyParams | None = None
    vocab_hash: str | None = None

    def validate(self) -> None:
        kinds = (POLICY_RANDOM15, POLICY_RANDOM_SPAN, POLICY_SALIENT, POLICY_LEARNED)
        if self.kind not in kinds:
            raise MaskPolicyError(f"unknown policy kind {self.kind!r}")
        if self.mode not in (MODE_TOP1, MODE_TOP5):
            raise MaskPolicyError(f"unknown selection mode {self.mode!r}")
        if not (0.0 <= self.rate <= 1.0):
            raise InvalidRateError(f"rate must be in [0, 1], got {self.rate}")
        if self.kind == POLICY_LEARNED and self.params is None:
            raise MaskPolicyError("learned policy requires trained parameters")

    @property
    def tag(self) -> str:
        if self.kind == POLICY_LEARNED:
            return f"learned-{self.mode}"
        return self.kind


@dataclass
class MaskSummary:
    chunks: int = 0
    masked_token_rate: float = 0.0
    span_length_hist: dict[int, int] = field(default_factory=dict)
    fallback_spans: int = 0
    skipped_chunks: int = 0

    def to_json_obj(self) -> dict:
        return {
            "chunks": self.chunks,
            "masked_token_rate": self.masked_token_rate,
            "span_length_hist": {str(k): v for k, v in sorted(self.span_length_hist.items())},
            "fallback_spans": self.fallback_spans,
            "skipped_chunks": self.skipped_chunks,
        }


def _mask_chunk(chunk: Chunk, spec: PolicySpec,
                global_seed: int) -> tuple[MaskedExample | None, bool]:
    """Corrupt one chunk. Returns (example or None when skipped, fallback?)."""
    seed = derive_seed(global_seed, chunk.doc_id, chunk.chunk_index)
    rng = derive_rng(global_seed, chunk.doc_id, chunk.chunk_index)
    fallback = False
    if spec.kind == POLICY_RANDOM15:
        decisions: MaskDecisions | Span = random_token_mask(chunk, spec.rate, rng)
    elif spec.kind == POLICY_RANDOM_SPAN:
        decisions = random_span_mask(chunk, rng, spec.max_span_len)
    elif spec.kind == POLICY_SALIENT:
        decisions, fallback = salient_span_mask_with_fallback(
            chunk, rng, spec.max_span_len)
    else:
        start_logits, end_logits = score_positions(
            spec.params, chunk.tokens.ids, max_input_len=spec.max_input_len)
        pool = 1 if spec.mode == MODE_TOP1 else TOP5_POOL
        candidates = top_k_spans(start_logits, end_logits, pool, spec.max_span_len)
        decisions = select_span(candidates, spec.mode, rng)
    try:
        return corrupt(chunk, decisions, policy_tag=spec.tag, seed_used=seed), fallback
    except AllMaskedError:
        # A span policy on a chunk of length 1 always selects everything;
        # such chunks are skipped and counted rather than emitted.
        return None, fallback


def _mask_documents(docs: list[tuple[str, str]], vocab: Vocab, spec: PolicySpec,
                    chunk_len: int, global_seed: int
                    ) -> tuple[list[MaskedExample], int, int]:
    examples: list[MaskedExample] = []
    fallbacks = 0
    skipped = 0
    for doc_id, text in docs:
        tokens = tokenize(text, vocab)
        if len(tokens.ids) == 0:
            continue
        for chunk in chunk_document(tokens, chunk_len, doc_id=doc_id):
            example, fallback = _mask_chunk(chunk, spec, global_seed)
            fallbacks += int(fallback)
            if example is None:
                skipped += 1
            else:
                examples.append(example)
    return examples, fallbacks, skipped


def _worker(args) -> tuple[list[MaskedExample], int, int]:
    return _mask_documents(*args)


def mask_corpus(corpus_paths, vocab: Vocab, spec: PolicySpec,
                chunk_len: int = DEFAULT_MAX_INPUT_LEN, global_seed: int = 0,
                workers: int = 1) -> tuple[list[MaskedExample], MaskSummary]:
    """Deploy a policy over a corpus; deterministic in `workers`."""
    spec.validate()
    if workers < 1:
        raise MaskPolicyError(f"workers must be >= 1, got {workers}")
    if spec.kind == POLICY_LEARNED and spec.vocab_hash is not None:
        if spec.vocab_hash != vocab.content_hash():
            raise VocabMismatchError(
                "checkpoint was trained against a different vocabulary")
    docs = iter_documents(corpus_paths)
    if workers == 1 or len(docs) < 2:
        examples, fallbacks, skipped = _mask_documents(
            docs, vocab, spec, chunk_len, global_seed)
    else:
        n_batches = min(workers, len(docs))
        batches = [docs[i::n_batches] for i in range(n_batches)]
        jobs = [(batch, vocab, spec, chunk_len, global_seed) for batch in batches]
        with multiprocessing.Pool(processes=workers) as pool:
            parts = pool.map(_worker, jobs)
        examples = [ex for part, _, _ in parts for ex in part]
        fallbacks = sum(f for _, f, _ in parts)
        skipped = sum(s for _, _, s in parts)
    examples.sort(key=lambda ex: (ex.doc_id, ex.chunk_index))

    total_tokens = sum(len(ex.input_ids) for ex in examples)
    total_masked = sum(len(ex.masked_positions) for ex in examples)
    hist: dict[int, int] = {}
    for ex in examples:
        for run in _mask_runs(ex.masked_positions):
            hist[run] = hist.get(run, 0) + 1
    summary = MaskSummary(
        chunks=len(examples),
        masked_token_rate=(total_masked / total_tokens) if total_tokens else 0.0,
        span_length_hist=hist,
        fallback_spans=fallbacks,
        skipped_chunks=skipped,
    )
    return examples, summary


def _mask_runs(positions: tuple[int, ...]) -> list[int]:
    """Lengths of maximal contiguous runs of masked positions."""
    runs = []
    current = 0
    prev = None
    for p in positions:
        if prev is not None and p == prev + 1:
            current += 1
        else:
            if current:
                runs.append(current)
            current = 1
        prev = p
    if current:
        runs.append(current)
    return runs


def write_masked_jsonl(path, examples: list[MaskedExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json_obj(), sort_keys=True) + "\n")


def read_masked_jsonl(path) -> list[MaskedExample]:
    examples = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            examples.append(masked_example_from_json_obj(json.loads(line)))
    return examples


def write_summary(path, summary: MaskSummary) -> None:
    Path(path).write_text(
        json.dumps(summary.to_json_obj(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
