"""Shared test scaffolding: deterministic scorers, random catalogs, and the
independent oracles the spec-level checks compare against.

The oracles here deliberately avoid the trie/decoder code paths: the legal
output language is enumerated straight from the name token sequences, and
exhaustive-search scoring renormalizes over oracle-derived allowed sets.
"""

from __future__ import annotations

import itertools

import numpy as np

from ettag.catalog import EOS, SEP, EntityCatalog, Vocabulary, build_vocabularies, tokenize
from ettag.decoding import DecodeConfig
from ettag.trie import TokenTrie, TrieCursor, advance, allowed_tokens, build_trie


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max()
    z = x - m
    return z - np.log(np.exp(z).sum())


class UniformScorer:
    def __init__(self, v: int):
        self.v = v

    def encode(self, input_ids):
        return None

    def next_logprobs(self, encoding, prefix):
        return np.full(self.v, -np.log(self.v))


class RandomScorer:
    """Normalized log-probs, deterministic in (seed, input, prefix).

    Integer tuple hashes are stable in CPython, so this is reproducible
    across runs without PYTHONHASHSEED pinning.
    """

    def __init__(self, v: int, seed: int):
        self.v = v
        self.seed = seed

    def encode(self, input_ids):
        return tuple(input_ids)

    def next_logprobs(self, encoding, prefix):
        key = (self.seed, 0x9E3779B9) + tuple(encoding) + (-1,) + tuple(prefix)
        rng = np.random.default_rng(abs(hash(key)))
        return log_softmax(rng.normal(scale=2.0, size=self.v))


class OracleScorer:
    """Puts nearly all probability mass on one target sequence."""

    def __init__(self, v: int, target, strength: float = 25.0):
        self.v = v
        self.target = tuple(target)
        self.strength = strength

    def encode(self, input_ids):
        return None

    def next_logprobs(self, encoding, prefix):
        logits = np.zeros(self.v)
        prefix = tuple(prefix)
        if prefix == self.target[: len(prefix)] and len(prefix) < len(self.target):
            logits[self.target[len(prefix)]] = self.strength
        return log_softmax(logits)


def random_catalog(
    rng: np.random.Generator,
    n_names: int,
    prefix_pairs: int = 3,
    n_words: int = 20,
    max_len: int = 3,
) -> EntityCatalog:
    """Random multi-word catalog guaranteed to contain token-prefix overlaps."""
    words = [f"w{i:02d}" for i in range(n_words)]
    names: list[str] = []
    seen: set[str] = set()
    while len(names) < n_names:
        length = int(rng.integers(1, max_len + 1))
        name = " ".join(words[int(i)] for i in rng.integers(0, n_words, size=length))
        if name not in seen:
            seen.add(name)
            names.append(name)
    made = 0
    for _ in range(200):
        if made >= prefix_pairs:
            break
        base = names[int(rng.integers(0, len(names)))]
        ext = base + " " + words[int(rng.integers(0, n_words))]
        if ext not in seen:
            seen.add(ext)
            names.append(ext)
            made += 1
    assert made >= prefix_pairs, "could not build enough prefix-overlapping pairs"
    return EntityCatalog(names)


def count_prefix_pairs(catalog, vocab) -> int:
    seqs = name_token_seqs(catalog, vocab)
    return sum(
        1
        for a in seqs
        for b in seqs
        if a != b and len(a) < len(b) and b[: len(a)] == a
    )


def catalog_stack(catalog: EntityCatalog):
    """(catalog, output vocab, trie) bundle for constraint tests."""
    _, vocab_out = build_vocabularies(catalog, [])
    return catalog, vocab_out, build_trie(catalog, vocab_out)


def name_token_seqs(catalog: EntityCatalog, vocab: Vocabulary) -> list[tuple[int, ...]]:
    return [tuple(tokenize(n, vocab, mode="output")) for n in catalog]


def brute_force_language(
    seqs: list[tuple[int, ...]],
    max_entities: int,
    allow_empty: bool = False,
) -> set[tuple[int, ...]]:
    """All no-repeat outputs: up to max_entities distinct names in any order,
    joined by SEP, ended by EOS. Enumerated straight from the name lists."""
    language: set[tuple[int, ...]] = set()
    if allow_empty:
        language.add((EOS,))
    for k in range(1, max_entities + 1):
        for combo in itertools.permutations(range(len(seqs)), k):
            out: list[int] = []
            for j, idx in enumerate(combo):
                if j:
                    out.append(SEP)
                out.extend(seqs[idx])
            out.append(EOS)
            language.add(tuple(out))
    return language


def enumerate_trie_language(
    trie: TokenTrie, config: DecodeConfig, cap: int = 2_000_000
) -> set[tuple[int, ...]]:
    """Everything reachable through allowed_tokens/advance until EOS."""
    out: set[tuple[int, ...]] = set()
    stack: list[tuple[TrieCursor, frozenset, int, tuple[int, ...]]] = [
        (trie.start_cursor(), frozenset(), 0, ())
    ]
    while stack:
        cursor, emitted, n_names, prefix = stack.pop()
        for token in allowed_tokens(trie, cursor, emitted, config, n_names).tolist():
            if token == EOS:
                out.add(prefix + (EOS,))
                if len(out) > cap:
                    raise AssertionError("language blew past the enumeration cap")
                continue
            if token == SEP:
                term = trie.terminal_entity(cursor)
                stack.append(
                    (advance(trie, cursor, token), emitted | {term}, n_names + 1, prefix + (token,))
                )
            else:
                stack.append(
                    (advance(trie, cursor, token), emitted, n_names, prefix + (token,))
                )
    return out


def oracle_prefix_allowed(language: set[tuple[int, ...]]) -> dict[tuple[int, ...], list[int]]:
    """prefix -> sorted next tokens, derived purely from the enumerated language."""
    table: dict[tuple[int, ...], set[int]] = {}
    for seq in language:
        for j in range(len(seq)):
            table.setdefault(seq[:j], set()).add(seq[j])
    return {k: sorted(v) for k, v in table.items()}


def oracle_sequence_score(
    scorer,
    input_ids,
    seq: tuple[int, ...],
    allowed_map: dict[tuple[int, ...], list[int]],
    renormalize: bool,
) -> float:
    encoding = scorer.encode(input_ids)
    total = 0.0
    for j, tok in enumerate(seq):
        lp = scorer.next_logprobs(encoding, seq[:j])
        if renormalize:
            vals = lp[allowed_map[seq[:j]]]
            m = vals.max()
            total += lp[tok] - (m + np.log(np.exp(vals - m).sum()))
        else:
            total += lp[tok]
    return float(total)


def exhaustive_best(
    scorer,
    input_ids,
    language: set[tuple[int, ...]],
    renormalize: bool,
) -> tuple[tuple[int, ...], float]:
    """Argmax over the full constrained language with the decoder's tie rule
    (higher score, then lexicographically smaller token sequence)."""
    allowed_map = oracle_prefix_allowed(language)
    best_seq, best_score = None, -np.inf
    for seq in sorted(language):
        score = oracle_sequence_score(scorer, input_ids, seq, allowed_map, renormalize)
        if score > best_score:
            best_seq, best_score = seq, score
    return best_seq, best_score


AIDA_KB_NAMES = ["Germany", "European Union", "Black hole", "BBC", "London"]


def write_aida_file(path, n_train: int, n_testa: int, n_testb: int) -> None:
    """Synthetic corpus in the AIDA CoNLL-YAGO column layout, replicating the
    published split structure (train docs plain-numbered, testa/testb docs
    with suffixed ids)."""
    lines: list[str] = []

    def doc(doc_id: str, idx: int):
        lines.append(f"-DOCSTART- ({doc_id})")
        kb = AIDA_KB_NAMES[idx % len(AIDA_KB_NAMES)]
        lines.append(f"{kb.split()[0]}\tB\t{kb}\t{kb.replace(' ', '_')}\thttp://en.wikipedia.org/wiki/{kb.replace(' ', '_')}\t{1000 + idx}\t/m/0{idx}")
        for extra in kb.split()[1:]:
            lines.append(f"{extra}\tI\t{kb}\t{kb.replace(' ', '_')}\thttp://en.wikipedia.org/wiki/{kb.replace(' ', '_')}\t{1000 + idx}\t/m/0{idx}")
        lines.append("said")
        lines.append(f"nobody\tB\tnobody\t--NME--")
        lines.append("")
        lines.append("The")
        lines.append("end")
        lines.append("")

    for i in range(n_train):
        doc(f"{i + 1} TRAINDOC", i)
    for i in range(n_testa):
        doc(f"{i + 947}testa VALDOC", i)
    for i in range(n_testb):
        doc(f"{i + 1163}testb TESTDOC", i)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
