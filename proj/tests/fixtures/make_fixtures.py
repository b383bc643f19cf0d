#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The Mirror Authors
"""Writes the bundled replay fixtures.

Each fixture is a hand-specified document: token pieces plus, per position,
the probabilities of a few named tokens. Unnamed mass is spread over the rest
of the fixture vocabulary with geometric weights, so every distribution is
strictly positive and normalized. Output is deterministic.

    python3 tests/fixtures/make_fixtures.py tests/fixtures
"""

import json
import math
import sys
from pathlib import Path


def fmt(x):
    return "%.17g" % x


def build_vocab(specials, docs_tokens, extra):
    vocab = list(specials)
    for toks in docs_tokens:
        for t in toks:
            if t not in vocab:
                vocab.append(t)
    for t in extra:
        if t not in vocab:
            vocab.append(t)
    return vocab


def distribution(vocab, named, position, exclude_ids=()):
    """Full distribution as {id: prob}."""
    index = {t: i for i, t in enumerate(vocab)}
    probs = {}
    for text, p in named.items():
        probs[index[text]] = p
    rest = 1.0 - sum(probs.values())
    assert rest > 0, (named, rest)
    others = [i for i in range(len(vocab)) if i not in probs and i not in exclude_ids]
    # rotate so different positions favour different filler tokens
    shift = (position * 7) % len(others)
    others = others[shift:] + others[:shift]
    weights = [0.8 ** k for k in range(len(others))]
    total = sum(weights)
    for i, w in zip(others, weights):
        probs[i] = rest * w / total
    return probs


def dist_json(probs, top_k=None):
    items = sorted(probs.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k is None:
        return {"kind": "full", "entries": [[i, math.log(p)] for i, p in items], "tail_logprob": None}
    kept, dropped = items[:top_k], items[top_k:]
    tail = sum(p for _, p in dropped)
    return {"kind": "topk", "entries": [[i, math.log(p)] for i, p in kept], "tail_logprob": math.log(tail)}


def write_fixture(path, backend_id, tokenizer, vocab, bos, tokens, named_per_pos, default_actual, top_k=None):
    index = {t: i for i, t in enumerate(vocab)}
    lines = []
    header = {"type": "header", "backend_id": backend_id, "vocab_size": len(vocab),
              "bos_id": index[bos] if bos else None, "tokenizer": tokenizer}
    lines.append(json.dumps(header, separators=(",", ":")))
    lines.append(json.dumps({"type": "vocab", "entries": [[i, t] for i, t in enumerate(vocab)]},
                            separators=(",", ":"), ensure_ascii=False))
    offset = 0
    exclude = (index[bos],) if bos else ()
    for pos, tok in enumerate(tokens):
        start, end = offset, offset + len(tok.encode("utf-8"))
        offset = end
        if pos == 0 and not bos:
            dist = None
        else:
            named = dict(named_per_pos.get(pos, {}))
            named.setdefault(tok, default_actual(pos))
            dist = dist_json(distribution(vocab, named, pos, exclude), top_k)
        rec = '{"type":"token","id":%d,"text":%s,"byte_start":%d,"byte_end":%d,"dist":' % (
            index[tok], json.dumps(tok, ensure_ascii=False), start, end)
        if dist is None:
            rec += "null}"
        else:
            rec += '{"kind":"%s","entries":[%s],"tail_logprob":%s}}' % (
                dist["kind"], ",".join("[%d,%s]" % (i, fmt(lp)) for i, lp in dist["entries"]),
                "null" if dist["tail_logprob"] is None else fmt(dist["tail_logprob"]))
        lines.append(rec)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def agenda(out):
    # Factual error: agenda setting attributed to Gerbner and Katz.
    tokens = ["Agenda", " setting", " is", " a", " concept", " proposed", " by", " Ger", "bner", " and", " Katz",
              ".", " It", " explains", " how", " media", " coverage", " shapes", " public", " priorities", "."]
    extra = [" McC", " Maxwell", " Bernard", " Shaw", " theory", " news", " salience", " the", " issues",
             " Lippmann", " framing", ",", " in", " of", " agenda", " political", " attention", "ombs"]
    vocab = build_vocab(["<|endoftext|>"], [tokens], extra)
    named = {
        1: {" setting": 0.9},
        4: {" concept": 0.35, " theory": 0.45},
        7: {" McC": 0.55, " Maxwell": 0.12, " Bernard": 0.05, " Lippmann": 0.04, " Ger": 0.004},
        8: {"bner": 0.97},
        10: {" Shaw": 0.62, " Katz": 0.006},
        15: {" media": 0.6, " news": 0.25},
        19: {" priorities": 0.2, " attention": 0.3, " agenda": 0.2},
    }
    write_fixture(out / "agenda.jsonl", "share-14b-replay", "fixture-bpe", vocab, "<|endoftext|>", tokens, named,
                  lambda pos: 0.45 + 0.02 * (pos % 5))


def discussion(out):
    # Discussion section: unexpected "guide", "platform", "literacy"; missing "section", "safety", "protection".
    tokens = ["Our", " findings", " suggest", " that", " users", " need", " a", " guide", " to", " privacy", ".",
              " Each", " platform", " should", " support", " literacy", " programs", ".",
              "\n\n",
              "Future", " work", " can", " test", " these", " ideas", " with", " young", " users", "."]
    extra = [" section", " safety", " protection", " data", " control", " concerns", " disclosure", " settings",
             " this", " results", " the", ",", " of", " online", " risks"]
    vocab = build_vocab(["<|endoftext|>"], [tokens], extra)
    missing = {" section": 0.12, " safety": 0.10, " protection": 0.09}
    named = {}
    for pos in range(1, len(tokens)):
        named[pos] = dict(missing)
    named[7].update({" guide": 0.004, " data": 0.2, " control": 0.1})
    named[12].update({" platform": 0.005, " data": 0.15, " settings": 0.2})
    named[15].update({" literacy": 0.003, " safety": 0.2, " data": 0.15})
    named[18] = {"\n\n": 0.9}
    write_fixture(out / "discussion.jsonl", "share-4b-replay", "fixture-bpe", vocab, "<|endoftext|>", tokens, named,
                  lambda pos: 0.4 + 0.03 * (pos % 4))


def african(out):
    # Remote-style top-k fixture without BOS; after " African" the model expects "-" and " American".
    tokens = ["Communication", " research", " rarely", " centers", " African", " locations", " or", " cosmopolitan",
              " curiosity", "."]
    extra = ["-", " American", " countries", " contexts", " voices", " perspectives", " scholars", " the", ",",
             " and", " in", " Western", " audiences", " media", " global"]
    vocab = build_vocab([], [tokens], extra)
    named = {
        4: {" African": 0.03, " Western": 0.3, " the": 0.2},
        5: {"-": 0.167, " American": 0.147, " countries": 0.12, " contexts": 0.1, " voices": 0.09,
            " perspectives": 0.08, " scholars": 0.05, " locations": 0.02},
        7: {" cosmopolitan": 0.0008, " global": 0.4, " Western": 0.2},
        8: {" curiosity": 0.002, " audiences": 0.3, " media": 0.25},
    }
    write_fixture(out / "african.jsonl", "share-14b-topk", "fixture-bpe", vocab, None, tokens, named,
                  lambda pos: 0.5 + 0.04 * (pos % 3), top_k=10)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
    out.mkdir(parents=True, exist_ok=True)
    agenda(out)
    discussion(out)
    african(out)


if __name__ == "__main__":
    main()
