"""Seeded synthetic data: a full-scale KB for engineering benchmarks and a
small learnable corpus for the desk-scale training/decoding experiments.

Documents in the benchmark corpus spell out the words of their gold entity
names (in mention order) with noise words sprinkled in, so a bag-of-words
encoder has enough signal to learn the task.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import EntityCatalog
from .ingest import ETExample

_ALPHA = np.array(list("abcdefghijklmnopqrstuvwxyz"))


def _word_pool(rng: np.random.Generator, count: int, min_len: int = 4, max_len: int = 9) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        n = int(rng.integers(min_len, max_len + 1))
        w = "".join(rng.choice(_ALPHA, size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def synthetic_kb_names(n: int = 470_578, seed: int = 0) -> list[str]:
    """Unique multi-word names at knowledge-base scale.

    Mostly three-word names drawn from skewed word pools (so prefixes are
    shared realistically), plus a slice of two-word names that are prefixes
    of longer ones to exercise terminal-with-children nodes.
    """
    rng = np.random.default_rng(seed)
    p1 = _word_pool(rng, 2500)
    p2 = _word_pool(rng, 600)
    p3 = _word_pool(rng, 320)
    names: list[str] = []
    seen: set[tuple[int, int, int]] = set()
    while len(names) < n:
        need = n - len(names)
        a = rng.integers(0, len(p1), size=need + need // 8 + 16)
        b = rng.integers(0, len(p2), size=len(a))
        c = rng.integers(0, len(p3), size=len(a))
        for i in range(len(a)):
            key = (int(a[i]), int(b[i]), int(c[i]))
            if key in seen:
                continue
            seen.add(key)
            names.append(f"{p1[key[0]]} {p2[key[1]]} {p3[key[2]]}")
            if len(names) == n:
                break
    # retarget ~1% to two-word prefixes of existing names (kept unique)
    short_seen: set[tuple[int, int]] = set()
    replaced = 0
    budget = n // 100
    for key in list(seen):
        if replaced >= budget:
            break
        pair = (key[0], key[1])
        if pair in short_seen:
            continue
        short_seen.add(pair)
        names[replaced] = f"{p1[pair[0]]} {p2[pair[1]]}"
        replaced += 1
    # the replacements may collide with each other only, and short_seen guards that
    return names


@dataclass
class BenchmarkData:
    catalog: EntityCatalog
    train: list[ETExample]
    eval: list[ETExample]


def synthetic_benchmark(
    seed: int = 0,
    n_entities: int = 50,
    n_train: int = 200,
    n_eval: int = 60,
    gold_range: tuple[int, int] = (2, 6),
    noise_prob: float = 0.4,
) -> BenchmarkData:
    """Desk-scale corpus: documents whose tokens are correlated with their
    gold entities. Deterministic in the seed."""
    rng = np.random.default_rng(seed)
    words = _word_pool(rng, n_entities * 2 + 30)
    name_words, noise_words = words[: n_entities * 2], words[n_entities * 2:]
    names = [f"{name_words[2 * i]} {name_words[2 * i + 1]}" for i in range(n_entities)]
    catalog = EntityCatalog(names)

    def make_doc(doc_id: str) -> ETExample:
        m = int(rng.integers(gold_range[0], gold_range[1] + 1))
        gold = rng.choice(n_entities, size=m, replace=False)
        pieces: list[str] = []
        for eid in gold:
            pieces.append(names[int(eid)])
            if rng.random() < noise_prob:
                pieces.append(noise_words[int(rng.integers(0, len(noise_words)))])
        return ETExample(
            doc_id=doc_id,
            text=" ".join(pieces),
            gold=frozenset(int(e) for e in gold),
            gold_order=tuple(int(e) for e in gold),
        )

    train = [make_doc(f"train-{i:04d}") for i in range(n_train)]
    eval_docs = [make_doc(f"eval-{i:04d}") for i in range(n_eval)]
    return BenchmarkData(catalog=catalog, train=train, eval=eval_docs)
