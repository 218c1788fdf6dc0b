"""Text ingestion: vocabulary, tokenization with offsets, chunking, and
alignment of answer strings to token spans.

Tokenization is word-level: a token is a maximal run of word characters
or a single non-space punctuation character. Offsets always point back
into the source string, so any token span can be detokenized exactly.

Corpus text files hold one document per non-empty line; doc ids are
"<file name>:<zero-padded line number>" so lexicographic order equals
file order.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    AnswerNotFoundError,
    EmptyCorpusError,
    InvalidChunkLengthError,
    MalformedRecordError,
)

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"

_SPECIALS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

DEFAULT_CHUNK_LEN = 128


@dataclass(frozen=True)
class Span:
    """Inclusive token-index interval [start, end]."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def indices(self) -> range:
        return range(self.start, self.end + 1)


class Vocab:
    """Frequency-ordered token vocabulary with reserved pad/unk/mask ids."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:3]) != list(_SPECIALS):
            raise ValueError("vocabulary must start with <pad>, <unk>, <mask>")
        self.id_to_token: tuple[str, ...] = tuple(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def to_lines(self) -> str:
        return "\n".join(self.id_to_token) + "\n"

    def content_hash(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_lines().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_lines(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


@dataclass(frozen=True)
class TokenSequence:
    """Token ids plus per-token (char_start, char_end) offsets into the
    source string and the surface strings themselves."""

    ids: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]
    texts: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.offsets) == len(self.texts)):
            raise ValueError("ids, offsets, texts must have equal length")
        prev_end = -1
        for start, end in self.offsets:
            if start < prev_end or end <= start:
                raise ValueError(f"offsets not strictly increasing at ({start}, {end})")
            prev_end = end

    def __len__(self) -> int:
        return len(self.ids)

    def slice(self, start: int, stop: int) -> "TokenSequence":
        return TokenSequence(self.ids[start:stop], self.offsets[start:stop], self.texts[start:stop])

    def span_text(self, span: Span, source: str) -> str:
        """Exact source substring covered by a token span."""
        return source[self.offsets[span.start][0]:self.offsets[span.end][1]]


@dataclass(frozen=True)
class Chunk:
    tokens: TokenSequence
    doc_id: str
    chunk_index: int

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AnchorExample:
    context: str
    question: str
    answer: str
    context_tokens: TokenSequence
    answer_span: Span


@dataclass
class LoadReport:
    loaded: int = 0
    skipped: int = 0


def tokenize(text: str, vocab: Vocab | None = None) -> TokenSequence:
    """Word-and-punctuation tokenization, case preserved. Unknown tokens
    map to the unk id but keep their true offsets and surface text."""
    ids: list[int] = []
    offsets: list[tuple[int, int]] = []
    texts: list[str] = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        ids.append(vocab.id_of(tok) if vocab is not None else UNK_ID)
        offsets.append((m.start(), m.end()))
        texts.append(tok)
    return TokenSequence(tuple(ids), tuple(offsets), tuple(texts))


def iter_documents(corpus_paths) -> "list[tuple[str, str]]":
    """(doc_id, text) pairs: one document per non-empty line, in file order."""
    docs: list[tuple[str, str]] = []
    for path in corpus_paths:
        p = Path(path)
        name = p.name
        with open(p, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                text = line.rstrip("\n")
                if not text.strip():
                    continue
                docs.append((f"{name}:{line_no:08d}", text))
    return docs


def build_vocab(corpus_paths, max_size: int = 50000, min_freq: int = 1) -> Vocab:
    """Most frequent corpus tokens, ties broken lexicographically, capped
    at max_size including the three reserved specials."""
    counts: Counter[str] = Counter()
    for _, text in iter_documents(corpus_paths):
        for m in _TOKEN_RE.finditer(text):
            counts[m.group(0)] += 1
    if not counts:
        raise EmptyCorpusError(f"no tokens found in {list(map(str, corpus_paths))}")
    eligible = [(tok, n) for tok, n in counts.items() if n >= min_freq]
    eligible.sort(key=lambda kv: (-kv[1], kv[0]))
    keep = max(0, max_size - len(_SPECIALS))
    return Vocab(list(_SPECIALS) + [tok for tok, _ in eligible[:keep]])


def chunk_document(tokens: TokenSequence, L: int = DEFAULT_CHUNK_LEN, doc_id: str = "doc") -> list[Chunk]:
    """Consecutive windows of exactly L tokens; a final partial window is
    kept when its length is at least L/4, otherwise dropped."""
    if L < 2:
        raise InvalidChunkLengthError(f"chunk length must be >= 2, got {L}")
    chunks: list[Chunk] = []
    n = len(tokens)
    pos = 0
    index = 0
    while pos + L <= n:
        chunks.append(Chunk(tokens.slice(pos, pos + L), doc_id, index))
        pos += L
        index += 1
    tail = n - pos
    if tail > 0 and 4 * tail >= L:
        chunks.append(Chunk(tokens.slice(pos, n), doc_id, index))
    return chunks


def _strip_outer(s: str) -> str:
    start, end = 0, len(s)
    while start < end and not s[start].isalnum():
        start += 1
    while end > start and not s[end - 1].isalnum():
        end -= 1
    return s[start:end]


def normalize_answer(s: str) -> str:
    return _strip_outer(s).casefold()


def align_answer(context_tokens: TokenSequence, context: str, answer: str) -> Span:
    """Earliest token span whose detokenized text matches the answer under
    case-folding and outer punctuation stripping."""
    target = normalize_answer(answer)
    if not target:
        raise AnswerNotFoundError(f"answer {answer!r} has no alignable content")
    n = len(context_tokens)
    # Outer stripping can only shorten, so spans much longer than the
    # answer cannot match; the slack covers stripped quotes and brackets.
    max_chars = len(answer) + 32
    for start in range(n):
        char_start = context_tokens.offsets[start][0]
        for end in range(start, n):
            char_end = context_tokens.offsets[end][1]
            if char_end - char_start > max_chars:
                break
            if normalize_answer(context[char_start:char_end]) == target:
                return Span(start, end)
    raise AnswerNotFoundError(f"answer {answer!r} not found in context")


def load_anchor_dataset(path, vocab: Vocab) -> tuple[list[AnchorExample], LoadReport]:
    """Read (context, question, answer) JSONL. Records whose answer cannot
    be aligned are skipped and counted; structurally bad records abort."""
    examples: list[AnchorExample] = []
    report = LoadReport()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(path, line_no, f"invalid JSON: {e.msg}") from e
            if not isinstance(record, dict):
                raise MalformedRecordError(path, line_no, "record is not an object")
            for field in ("context", "question", "answer"):
                if field not in record:
                    raise MalformedRecordError(path, line_no, f"missing field {field!r}")
                if not isinstance(record[field], str):
                    raise MalformedRecordError(path, line_no, f"field {field!r} is not a string")
            context = record["context"]
            tokens = tokenize(context, vocab)
            try:
                span = align_answer(tokens, context, record["answer"])
            except AnswerNotFoundError:
                report.skipped += 1
                continue
            examples.append(AnchorExample(
                context=context,
                question=record["question"],
                answer=record["answer"],
                context_tokens=tokens,
                answer_span=span,
            ))
            report.loaded += 1
    return examples, report


def detokenize_ids(vocab: Vocab, ids) -> str:
    """Vocabulary-based surface form: token strings joined by spaces."""
    return " ".join(vocab.id_to_token[i] for i in ids)
