"""Per-behavior keyword analysis of persona text via TF-IDF."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter

from .behaviors import LABEL_ORDER, BehaviorLabel

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Pinned variant: raw term counts, smooth document-frequency IDF
# ln((1 + D) / (1 + df)) with no +1 shift and no length normalization, so a
# term shared by every class scores exactly zero.


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens: list[str], max_n: int = 2) -> list[str]:
    grams = list(tokens)
    for n in range(2, max_n + 1):
        grams.extend(
            " ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
        )
    return grams


def tfidf_analysis(
    pairs: list[tuple[str, BehaviorLabel]],
    top_k: int = 10,
) -> dict[BehaviorLabel, list[tuple[str, float]]]:
    """Top n-grams per behavior label by TF-IDF score.

    Documents are the concatenated persona texts per label; unigrams and
    bigrams are scored together. Labels with no pairs are omitted with a
    warning.
    """
    if not pairs:
        raise ValueError("no persona-behavior pairs")
    docs: dict[BehaviorLabel, list[str]] = {b: [] for b in LABEL_ORDER}
    for text, label in pairs:
        docs[label].append(text)
    present = [b for b in LABEL_ORDER if docs[b]]
    for label in LABEL_ORDER:
        if not docs[label]:
            log.warning("label %s has no persona text; omitted", label.value)

    term_counts: dict[BehaviorLabel, Counter] = {}
    for label in present:
        tokens = tokenize(" ".join(docs[label]))
        term_counts[label] = Counter(ngrams(tokens))

    doc_freq: Counter = Counter()
    for label in present:
        doc_freq.update(set(term_counts[label]))

    n_docs = len(present)
    results: dict[BehaviorLabel, list[tuple[str, float]]] = {}
    for label in present:
        scored = []
        for term, count in term_counts[label].items():
            idf = math.log((1 + n_docs) / (1 + doc_freq[term]))
            scored.append((term, count * idf))
        scored.sort(key=lambda item: (-item[1], item[0]))
        results[label] = scored[:top_k]
    return results
