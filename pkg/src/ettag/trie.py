"""Prefix tree over tokenized entity names and the decoding constraint automaton.

The trie is a flat arena in depth-first preorder: per-node sorted child
arrays live in one CSR-style block, so child lookup is a binary search and
the whole structure is a handful of numpy arrays shared read-only across
decoders. Each node also carries the half-open interval of entity ranks
(positions in sorted-name order) reachable below it; that makes "is this
subtree fully emitted already?" an O(|emitted|) question, which is what the
no-repeat pruning needs to never paint a decoder into a dead end.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .catalog import EOS, SEP, EntityCatalog, Vocabulary, tokenize
from .errors import CacheMismatch, DisallowedToken, EmptyCatalog, OutputOOV

ROOT = 0
FINISHED = -1

_MAGIC = b"ETRIE1"


class TrieCursor(NamedTuple):
    """Position inside the automaton. The root doubles as the entity boundary."""

    node: int

    @property
    def at_boundary(self) -> bool:
        return self.node == ROOT

    @property
    def finished(self) -> bool:
        return self.node == FINISHED


@dataclass
class TokenTrie:
    terminal: np.ndarray      # int32 [n_nodes], entity id or -1
    child_start: np.ndarray   # int64 [n_nodes + 1], CSR offsets
    child_keys: np.ndarray    # int32 [n_edges], token ids, sorted per node
    child_vals: np.ndarray    # int32 [n_edges], child node indices
    ent_lo: np.ndarray        # int64 [n_nodes], first entity rank under node
    ent_hi: np.ndarray        # int64 [n_nodes], one past last entity rank
    child_lo: np.ndarray      # int64 [n_edges], ent_lo gathered per edge
    child_hi: np.ndarray      # int64 [n_edges]
    entity_rank: np.ndarray   # int64 [n_entities], catalog id -> rank
    entity_count: int
    _max_depth: int = field(default=-1, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.terminal)

    @property
    def max_depth(self) -> int:
        if self._max_depth < 0:
            cs, cv = self.child_start, self.child_vals
            frontier = np.array([ROOT], dtype=np.int64)
            depth = 0
            while True:
                starts = cs[frontier]
                counts = cs[frontier + 1] - starts
                total = int(counts.sum())
                if total == 0:
                    break
                idx = np.repeat(starts, counts) + (
                    np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
                )
                frontier = cv[idx].astype(np.int64)
                depth += 1
            self._max_depth = depth
        return self._max_depth

    def start_cursor(self) -> TrieCursor:
        return TrieCursor(ROOT)

    def terminal_entity(self, cursor: TrieCursor) -> int | None:
        t = int(self.terminal[cursor.node])
        return None if t < 0 else t

    def child(self, node: int, token: int) -> int:
        """Child node index for a content token, or -1."""
        s, e = self.child_start[node], self.child_start[node + 1]
        i = s + np.searchsorted(self.child_keys[s:e], token)
        if i < e and self.child_keys[i] == token:
            return int(self.child_vals[i])
        return -1

    def lookup(self, tokens: Sequence[int]) -> int | None:
        """Entity id spelled by exactly this content-token sequence, if any."""
        node = ROOT
        for t in tokens:
            node = self.child(node, t)
            if node < 0:
                return None
        ent = int(self.terminal[node])
        return None if ent < 0 or node == ROOT else ent


def build_trie(catalog: EntityCatalog, vocab: Vocabulary) -> TokenTrie:
    """Build the prefix tree recognizing exactly the tokenized catalog names."""
    n_entities = len(catalog)
    if n_entities == 0:
        raise EmptyCatalog("cannot build a trie over an empty catalog")
    seqs: list[tuple[tuple[int, ...], int]] = []
    for eid, name in enumerate(catalog):
        try:
            ids = tokenize(name, vocab, mode="output")
        except OutputOOV as exc:
            raise OutputOOV(f"catalog name {name!r} not covered by vocabulary: {exc}") from exc
        seqs.append((tuple(ids), eid))
    seqs.sort()

    from array import array

    terminal = array("i", [-1])
    ent_lo = array("q", [0])
    ent_hi = array("q", [0])
    parents = array("i")
    keys = array("i")
    vals = array("i")

    stack = [ROOT]
    prev: tuple[int, ...] = ()
    entity_rank = np.empty(n_entities, dtype=np.int64)
    max_depth = 0
    n_nodes = 1
    for rank, (seq, eid) in enumerate(seqs):
        lcp = 0
        limit = min(len(prev), len(seq))
        while lcp < limit and prev[lcp] == seq[lcp]:
            lcp += 1
        del stack[lcp + 1:]
        for tok in seq[lcp:]:
            parents.append(stack[-1])
            keys.append(tok)
            vals.append(n_nodes)
            terminal.append(-1)
            ent_lo.append(rank)
            ent_hi.append(rank)
            stack.append(n_nodes)
            n_nodes += 1
        # distinct canonical names cannot tokenize identically (tokenize is
        # invertible on canonical text), so the terminal slot is free
        assert terminal[stack[-1]] == -1, "duplicate token sequence in catalog"
        terminal[stack[-1]] = eid
        entity_rank[eid] = rank
        for node in stack:
            ent_hi[node] = rank + 1
        max_depth = max(max_depth, len(seq))
        prev = seq

    terminal_np = np.asarray(terminal, dtype=np.int32)
    ent_lo_np = np.asarray(ent_lo, dtype=np.int64)
    ent_hi_np = np.asarray(ent_hi, dtype=np.int64)
    parents_np = np.asarray(parents, dtype=np.int64)
    keys_np = np.asarray(keys, dtype=np.int32)
    vals_np = np.asarray(vals, dtype=np.int32)

    # per-node child order follows sorted-name insertion, i.e. ascending key;
    # a stable sort on parent alone preserves it
    order = np.argsort(parents_np, kind="stable")
    child_counts = np.bincount(parents_np, minlength=n_nodes)
    child_start = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(child_counts, out=child_start[1:])
    child_keys = keys_np[order]
    child_vals = vals_np[order]

    return TokenTrie(
        terminal=terminal_np,
        child_start=child_start,
        child_keys=child_keys,
        child_vals=child_vals,
        ent_lo=ent_lo_np,
        ent_hi=ent_hi_np,
        child_lo=ent_lo_np[child_vals],
        child_hi=ent_hi_np[child_vals],
        entity_rank=entity_rank,
        entity_count=n_entities,
        _max_depth=max_depth,
    )


_EOS_ARR = np.array([EOS], dtype=np.int32)
_SEP_EOS_ARR = np.array([EOS, SEP], dtype=np.int32)
_EMPTY = np.empty(0, dtype=np.int32)


def _blocked_child_positions(trie: TokenTrie, node: int, emitted, s: int, e: int) -> list[int]:
    """Positions (relative to the child slice) whose subtree is fully emitted."""
    lo_n = trie.ent_lo[node]
    hi_n = trie.ent_hi[node]
    rk = trie.entity_rank
    inside = sorted(int(rk[ent]) for ent in emitted if lo_n <= rk[ent] < hi_n)
    if not inside:
        return []
    child_lo = trie.child_lo[s:e]
    child_hi = trie.child_hi[s:e]
    per_child: dict[int, int] = {}
    for r in inside:
        pos = int(np.searchsorted(child_lo, r, side="right")) - 1
        if pos >= 0 and r < child_hi[pos]:
            per_child[pos] = per_child.get(pos, 0) + 1
    return [
        pos
        for pos, cnt in per_child.items()
        if cnt == int(child_hi[pos] - child_lo[pos])
    ]


def allowed_tokens(
    trie: TokenTrie,
    cursor: TrieCursor,
    emitted,
    config,
    n_generated: int | None = None,
) -> np.ndarray:
    """Sorted array of token ids legal at this cursor.

    ``emitted`` is the set of entity ids already finalized by the hypothesis;
    ``n_generated`` is how many names were finalized (differs from
    len(emitted) only when no_repeat is off and a name repeated).
    """
    node = cursor.node
    if node == FINISHED:
        return _EMPTY
    cs = trie.child_start
    s = cs[node]
    e = cs[node + 1]
    keys = trie.child_keys[s:e]
    no_repeat = config.no_repeat

    if no_repeat and emitted:
        blocked = _blocked_child_positions(trie, node, emitted, s, e)
        if blocked:
            keys = np.delete(keys, blocked)
    if node == ROOT:
        if not emitted and config.allow_empty:
            return np.concatenate((_EOS_ARR, keys))
        return keys

    term = int(trie.terminal[node])
    if term < 0:
        return keys
    if no_repeat and term in emitted:
        return keys
    # finalizing this entity is legal; EOS always ends here, SEP only when
    # another name can still follow
    done = len(emitted) if n_generated is None else n_generated
    can_continue = done + 1 < config.max_entities
    if can_continue and no_repeat:
        remaining = trie.entity_count - len(emitted) - (0 if term in emitted else 1)
        can_continue = remaining > 0
    head = _SEP_EOS_ARR if can_continue else _EOS_ARR
    if len(keys) == 0:
        return head
    return np.concatenate((head, keys))


def advance(trie: TokenTrie, cursor: TrieCursor, token: int) -> TrieCursor:
    """Move the cursor by one token. SEP returns to the boundary, EOS finishes."""
    node = cursor.node
    if node == FINISHED:
        raise DisallowedToken("cursor already finished")
    if token == EOS:
        if node != ROOT and trie.terminal[node] < 0:
            raise DisallowedToken("EOS is only legal at a terminal or the empty boundary")
        return TrieCursor(FINISHED)
    if token == SEP:
        if node == ROOT or trie.terminal[node] < 0:
            raise DisallowedToken("SEP is only legal at a terminal")
        return TrieCursor(ROOT)
    nxt = trie.child(node, token)
    if nxt < 0:
        raise DisallowedToken(f"token {token} is not a continuation at node {node}")
    return TrieCursor(nxt)


def trie_stats(trie: TokenTrie) -> dict[str, int]:
    return {
        "node_count": trie.node_count,
        "max_depth": trie.max_depth,
        "entity_count": trie.entity_count,
    }


def content_hash(catalog: EntityCatalog, vocab: Vocabulary) -> bytes:
    h = hashlib.sha256()
    h.update(catalog.content_hash())
    h.update(vocab.content_hash())
    return h.digest()


def save_trie_cache(trie: TokenTrie, path, key: bytes) -> None:
    """Write the binary cache: magic, 32-byte content hash, node count, then
    per node (terminal|-1, child_count, sorted (token, child) pairs), all
    little-endian int32."""
    if len(key) != 32:
        raise ValueError("cache key must be a 32-byte digest")
    n = trie.node_count
    counts = np.diff(trie.child_start).astype(np.int64)
    sizes = 2 + 2 * counts
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    buf = np.empty(int(offsets[-1]), dtype="<i4")
    buf[offsets[:-1]] = trie.terminal
    buf[offsets[:-1] + 1] = counts.astype(np.int32)
    edge_node = np.repeat(np.arange(n, dtype=np.int64), counts)
    intra = np.arange(len(trie.child_keys), dtype=np.int64) - np.repeat(
        trie.child_start[:-1], counts
    )
    pair_pos = offsets[edge_node] + 2 + 2 * intra
    buf[pair_pos] = trie.child_keys
    buf[pair_pos + 1] = trie.child_vals
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(key)
        f.write(struct.pack("<i", n))
        f.write(buf.tobytes())


def load_trie_cache(path, key: bytes) -> TokenTrie:
    """Read a cache written by save_trie_cache, verifying the content hash."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CacheMismatch(f"{path}: not a trie cache")
    stored = blob[len(_MAGIC): len(_MAGIC) + 32]
    if stored != key:
        raise CacheMismatch(f"{path}: cache was built for a different catalog/vocabulary")
    (n,) = struct.unpack_from("<i", blob, len(_MAGIC) + 32)
    body = np.frombuffer(blob, dtype="<i4", offset=len(_MAGIC) + 36)

    terminal = np.empty(n, dtype=np.int32)
    child_start = np.zeros(n + 1, dtype=np.int64)
    pos = 0
    for v in range(n):
        terminal[v] = body[pos]
        child_start[v + 1] = child_start[v] + body[pos + 1]
        pos += 2 + 2 * int(body[pos + 1])
    if pos != len(body):
        raise CacheMismatch(f"{path}: truncated or padded node block")
    n_edges = int(child_start[-1])
    counts = np.diff(child_start)
    sizes = 2 + 2 * counts
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    edge_node = np.repeat(np.arange(n, dtype=np.int64), counts)
    intra = np.arange(n_edges, dtype=np.int64) - np.repeat(child_start[:-1], counts)
    pair_pos = offsets[edge_node] + 2 + 2 * intra
    child_keys = body[pair_pos].astype(np.int32)
    child_vals = body[pair_pos + 1].astype(np.int32)

    # preorder arena: subtree of v is the contiguous index range [v, end[v])
    end = np.arange(1, n + 1, dtype=np.int64)
    for v in range(n - 1, -1, -1):
        s, e = child_start[v], child_start[v + 1]
        if s != e:
            end[v] = end[child_vals[e - 1]]
    tprefix = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(terminal >= 0, out=tprefix[1:])
    ent_lo = tprefix[:n].copy()
    ent_hi = tprefix[end]
    term_nodes = np.nonzero(terminal >= 0)[0]
    n_entities = len(term_nodes)
    entity_rank = np.empty(n_entities, dtype=np.int64)
    entity_rank[terminal[term_nodes]] = tprefix[term_nodes]

    return TokenTrie(
        terminal=terminal,
        child_start=child_start,
        child_keys=child_keys,
        child_vals=child_vals,
        ent_lo=ent_lo,
        ent_hi=ent_hi,
        child_lo=ent_lo[child_vals],
        child_hi=ent_hi[child_vals],
        entity_rank=entity_rank,
        entity_count=n_entities,
    )
