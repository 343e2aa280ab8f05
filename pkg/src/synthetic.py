"""
Synthetic data generators used by the demo and the test-suite
"""

import string
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from sparse_encode import SparseVector
from vocab_expansion import HeadMatrix, SubwordVocabulary


def zipf_probabilities(size: int, exponent: float = 1.1) -> np.ndarray:
    ranks = np.arange(1, size + 1, dtype=np.float64)
    weights = ranks ** -exponent
    return weights / weights.sum()


def make_words(count: int, rng: np.random.Generator, min_len: int = 2,
               max_len: int = 8) -> List[str]:
    """Distinct lower-case pseudo words"""
    letters = np.array(list(string.ascii_lowercase))
    words: List[str] = []
    seen = set()
    while len(words) < count:
        length = int(rng.integers(min_len, max_len + 1))
        word = "".join(rng.choice(letters, size=length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def zipf_titles(count: int, words: Sequence[str], seed: int, min_tokens: int = 1,
                max_tokens: int = 30, exponent: float = 1.1) -> List[str]:
    """Titles whose tokens are drawn from a Zipf distribution over words"""
    rng = np.random.default_rng(seed)
    probs = zipf_probabilities(len(words), exponent)
    titles = []
    for _ in range(count):
        length = int(rng.integers(min_tokens, max_tokens + 1))
        picks = rng.choice(len(words), size=length, p=probs)
        titles.append(" ".join(words[i] for i in picks))
    return titles


def character_subword_vocabulary(extra_pieces: Sequence[str] = ()) -> SubwordVocabulary:
    """
    Subword vocabulary able to cover any lower-case ASCII word: specials,
    every letter as a word-initial and a continuation piece, plus extras
    """
    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    pieces += list(string.ascii_lowercase)
    pieces += ["##" + letter for letter in string.ascii_lowercase]
    for piece in extra_pieces:
        if piece not in pieces:
            pieces.append(piece)
    return SubwordVocabulary.from_pieces(pieces)


def random_head(rows: int, hidden: int, seed: int) -> HeadMatrix:
    rng = np.random.default_rng(seed)
    return HeadMatrix(weights=rng.standard_normal((rows, hidden)),
                      bias=rng.standard_normal(rows) * 0.1)


def random_sparse_vectors(count: int, dim: int, mean_l0: int, seed: int,
                          term_distribution: Literal["uniform", "zipf"] = "uniform",
                          prefix: str = "d", exponent: float = 1.1,
                          l0_spread: Optional[int] = None) -> List[SparseVector]:
    """
    Random sparse vectors with L0 drawn uniformly around mean_l0

    The L0 draw is independent of term_distribution, so uniform and zipf
    corpora with the same seed have identical L0 sequences.
    """
    spread = mean_l0 // 2 if l0_spread is None else l0_spread
    length_rng = np.random.default_rng([seed, 0])
    term_rng = np.random.default_rng([seed, 1])
    weight_rng = np.random.default_rng([seed, 2])
    probs = None if term_distribution == "uniform" else zipf_probabilities(dim, exponent)
    width = len(str(count - 1)) if count > 1 else 1
    vectors = []
    for i in range(count):
        l0 = int(length_rng.integers(max(1, mean_l0 - spread), mean_l0 + spread + 1))
        l0 = min(l0, dim)
        terms = term_rng.choice(dim, size=l0, replace=False, p=probs)
        weights = weight_rng.uniform(0.01, 3.0, size=l0)
        vectors.append(SparseVector(dict(zip(terms.tolist(), weights.tolist())),
                                    f"{prefix}{i:0{width}d}"))
    return vectors


def random_qrels(query_ids: Sequence[str], doc_ids: Sequence[str], seed: int,
                 positives_per_query: int = 2,
                 negatives_per_query: int = 1) -> Tuple[Dict[str, set], Dict[str, set]]:
    """Random disjoint positive / negative doc sets per query"""
    rng = np.random.default_rng(seed)
    positives: Dict[str, set] = {}
    negatives: Dict[str, set] = {}
    for qid in query_ids:
        picks = rng.choice(len(doc_ids), size=positives_per_query + negatives_per_query,
                           replace=False)
        positives[qid] = {doc_ids[i] for i in picks[:positives_per_query]}
        negatives[qid] = {doc_ids[i] for i in picks[positives_per_query:]}
    return positives, negatives
