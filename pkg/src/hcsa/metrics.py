"""BLEU-1 and WUPS answer metrics with a pluggable word-similarity oracle."""

from __future__ import annotations

import json
import logging
import math
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError, TaxonomyError

log = logging.getLogger(__name__)

QUESTION_TYPES = ("object", "number", "color", "location", "action")
_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")


def tokenize(text: str | Sequence[str]) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace. Token lists are normalized the same way."""
    if not isinstance(text, str):
        text = " ".join(text)
    return _PUNCT.sub(" ", text.lower()).split()


def fixture_path(name: str = "taxonomy.tsv") -> Path:
    """Path of a bundled fixture file (``taxonomy.tsv`` or ``synonyms.tsv``)."""
    return Path(str(resources.files("hcsa") / "fixtures" / name))


def _read_pairs(path: str | Path, allow_empty_right: bool) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"{path}:{lineno}: expected two tab-separated fields, got {raw!r}")
        left, right = parts[0].strip().lower(), parts[1].strip().lower()
        if not left or (not right and not allow_empty_right):
            raise TaxonomyError(f"{path}:{lineno}: empty term in {raw!r}")
        pairs.append((left, right))
    return pairs


class SimilarityOracle:
    """Word similarity in [0, 1]: exact match, a synonym table, or Wu-Palmer over a taxonomy.

    Taxonomy input maps each term to its parent; a term with an empty parent,
    or a parent that never appears as a child, is a root at depth 1.
    """

    MODES = ("exact", "synonyms", "taxonomy")

    def __init__(
        self,
        mode: str = "exact",
        synonyms: Iterable[tuple[str, str]] = (),
        parents: dict[str, str] | None = None,
    ):
        if mode not in self.MODES:
            raise InputError(f"oracle mode must be one of {self.MODES}, got {mode!r}")
        self.mode = mode
        self.synonyms = {frozenset((a.lower(), b.lower())) for a, b in synonyms}
        self.parents = {k.lower(): v.lower() for k, v in (parents or {}).items()}
        self._chains: dict[str, list[str]] = {}
        if mode == "taxonomy":
            if not self.parents:
                raise TaxonomyError("taxonomy mode needs a non-empty taxonomy")
            for term in self.parents:
                self._chains[term] = self._chain(term)

    @classmethod
    def from_taxonomy_file(cls, path: str | Path | None = None) -> "SimilarityOracle":
        path = path or fixture_path("taxonomy.tsv")
        parents: dict[str, str] = {}
        for child, parent in _read_pairs(path, allow_empty_right=True):
            if child in parents and parents[child] != parent:
                raise TaxonomyError(f"{path}: term {child!r} has two parents")
            parents[child] = parent
        return cls("taxonomy", parents=parents)

    @classmethod
    def from_synonym_file(cls, path: str | Path | None = None) -> "SimilarityOracle":
        return cls("synonyms", synonyms=_read_pairs(path or fixture_path("synonyms.tsv"), False))

    def _chain(self, term: str) -> list[str]:
        """Ancestors of ``term`` from the root down to the term itself."""
        chain = [term]
        seen = {term}
        node = term
        while self.parents.get(node):
            node = self.parents[node]
            if node in seen:
                raise TaxonomyError(f"cycle in taxonomy through {node!r}")
            seen.add(node)
            chain.append(node)
        return chain[::-1]

    def depth(self, term: str) -> int:
        term = term.lower()
        if term in self._chains:
            return len(self._chains[term])
        if self.mode == "taxonomy" and term in set(self.parents.values()):
            return 1
        return 0

    def similarity(self, a: str, b: str) -> float:
        a, b = a.lower(), b.lower()
        if a == b:
            return 1.0
        if self.mode == "exact":
            return 0.0
        if self.mode == "synonyms":
            return 1.0 if frozenset((a, b)) in self.synonyms else 0.0
        ca, cb = self._chain_or_root(a), self._chain_or_root(b)
        if not ca or not cb:
            return 0.0
        common = 0
        for x, y in zip(ca, cb):
            if x != y:
                break
            common += 1
        return 2.0 * common / (len(ca) + len(cb))

    def _chain_or_root(self, term: str) -> list[str]:
        if term in self._chains:
            return self._chains[term]
        return [term] if term in set(self.parents.values()) else []


def wup_similarity(a: str, b: str, oracle: SimilarityOracle | None = None) -> float:
    """2 * depth(lowest common subsumer) / (depth(a) + depth(b)) in taxonomy mode."""
    return (oracle or SimilarityOracle()).similarity(a, b)


def wup_gamma(a: str, b: str, gamma: float, oracle: SimilarityOracle | None = None) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise InputError(f"gamma must lie in [0, 1], got {gamma}")
    s = wup_similarity(a, b, oracle)
    return s if s >= gamma else 0.1 * s


def wups_single(prediction, reference, gamma: float, oracle: SimilarityOracle | None = None) -> float:
    """Question-level WUPS; each direction is averaged over its own token count."""
    pred, ref = tokenize(prediction), tokenize(reference)
    if not pred or not ref:
        log.debug("empty answer (prediction=%r, reference=%r) scores 0", prediction, reference)
        return 0.0
    oracle = oracle or SimilarityOracle()
    ref_side = sum(max(wup_gamma(r, p, gamma, oracle) for p in pred) for r in ref) / len(ref)
    pred_side = sum(max(wup_gamma(p, r, gamma, oracle) for r in ref) for p in pred) / len(pred)
    return min(ref_side, pred_side)


def wups(predictions: Sequence, references: Sequence, gamma: float,
         oracle: SimilarityOracle | None = None) -> float:
    _check_aligned(predictions, references)
    return sum(wups_single(p, r, gamma, oracle) for p, r in zip(predictions, references)) / len(references)


def bleu1(prediction, reference) -> float:
    """Clipped unigram precision times min(1, exp(1 - r/c))."""
    pred, ref = tokenize(prediction), tokenize(reference)
    if not ref:
        raise InputError("BLEU-1 needs a non-empty reference")
    if not pred:
        return 0.0
    ref_counts = Counter(ref)
    clipped = sum(min(c, ref_counts[w]) for w, c in Counter(pred).items())
    brevity = min(1.0, math.exp(1.0 - len(ref) / len(pred)))
    return clipped / len(pred) * brevity


def corpus_bleu1(predictions: Sequence, references: Sequence) -> float:
    """Sentence-level BLEU-1 averaged over the corpus."""
    _check_aligned(predictions, references)
    return sum(bleu1(p, r) for p, r in zip(predictions, references)) / len(references)


def _check_aligned(predictions: Sequence, references: Sequence) -> None:
    if len(predictions) != len(references):
        raise InputError(f"{len(predictions)} predictions for {len(references)} references")
    if not references:
        raise InputError("empty corpus")


# -- corpus evaluation ------------------------------------------------------------------

@dataclass
class TypeScores:
    count: int
    bleu1: float
    wups_0_0: float
    wups_0_9: float


@dataclass
class EvalReport:
    bleu1: float
    wups_0_0: float
    wups_0_9: float
    count: int
    per_type: dict[str, TypeScores] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def format(self) -> str:
        lines = [f"{'type':<10} {'n':>6} {'BLEU-1':>8} {'WUPS@0.0':>9} {'WUPS@0.9':>9}"]
        rows = [("all", TypeScores(self.count, self.bleu1, self.wups_0_0, self.wups_0_9))]
        rows += sorted(self.per_type.items())
        for name, s in rows:
            lines.append(f"{name:<10} {s.count:>6} {s.bleu1:>8.4f} {s.wups_0_0:>9.4f} {s.wups_0_9:>9.4f}")
        return "\n".join(lines)


def _scores(preds: Sequence[str], refs: Sequence[str], oracle: SimilarityOracle) -> TypeScores:
    return TypeScores(
        count=len(refs),
        bleu1=corpus_bleu1(preds, refs),
        wups_0_0=wups(preds, refs, 0.0, oracle),
        wups_0_9=wups(preds, refs, 0.9, oracle),
    )


def evaluate(predictions: Sequence[dict], references: Sequence[dict],
             oracle: SimilarityOracle | None = None) -> EvalReport:
    """Score prediction records against reference records matched by ``id``.

    Records look like ``{"id": ..., "answer": ..., "type": ...}``; the type
    is taken from the reference when present.
    """
    oracle = oracle or SimilarityOracle()
    by_id = {}
    for rec in predictions:
        if rec["id"] in by_id:
            raise InputError(f"duplicate prediction id {rec['id']!r}")
        by_id[rec["id"]] = rec
    missing = [r["id"] for r in references if r["id"] not in by_id]
    if missing:
        raise InputError(f"no prediction for {len(missing)} reference ids, e.g. {missing[0]!r}")
    preds = [by_id[r["id"]]["answer"] for r in references]
    refs = [r["answer"] for r in references]
    empty = sum(1 for p, r in zip(preds, refs) if not tokenize(p) or not tokenize(r))
    if empty:
        log.warning("%d of %d questions have an empty answer and score 0", empty, len(refs))
    overall = _scores(preds, refs, oracle)

    groups: dict[str, list[int]] = {}
    for i, r in enumerate(references):
        tag = r.get("type") or by_id[r["id"]].get("type") or "unknown"
        groups.setdefault(tag, []).append(i)
    per_type = {
        tag: _scores([preds[i] for i in idx], [refs[i] for i in idx], oracle) for tag, idx in groups.items()
    }
    return EvalReport(overall.bleu1, overall.wups_0_0, overall.wups_0_9, overall.count, per_type)


def read_answers(path: str | Path) -> list[dict]:
    """Answer records from a JSON-lines file; ``answer`` may be a string or a token list."""
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or "id" not in rec or "answer" not in rec:
            raise InputError(f"{path}:{lineno}: record needs 'id' and 'answer'")
        if not isinstance(rec["answer"], str):
            rec["answer"] = " ".join(rec["answer"])
        records.append(rec)
    return records


def write_answers(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
