"""Independent reference implementations used by the tests.

They favour obviousness over speed: plain dynamic programming, exhaustive
pairwise loops, fixed-point closure.
"""

from fractions import Fraction


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def ratio(a: str, b: str) -> int:
    longest = max(len(a), len(b))
    if longest == 0:
        return 100
    exact = Fraction(100 * (longest - levenshtein(a, b)), longest)
    score = int(exact + Fraction(1, 2))  # half up; exact is non-negative
    if a != b and score == 100:
        score = 99
    return score


def closure_components(keys, threshold):
    """Partition of ``keys`` under the transitive closure of ratio >= threshold."""
    keys = list(keys)
    label = {k: {k} for k in keys}
    changed = True
    while changed:
        changed = False
        for a in keys:
            for b in keys:
                if a != b and ratio(a, b) >= threshold and label[a] is not label[b]:
                    merged = label[a] | label[b]
                    for k in merged:
                        label[k] = merged
                    changed = True
    return {frozenset(s) for s in label.values()}


def match_oracle(patent_symbols, predictions, threshold, prefix_len):
    """Exhaustive pairwise check of the decision rule."""
    overlap = set()
    for symbol, score in predictions:
        for patent_symbol in patent_symbols:
            if score > threshold and symbol[:prefix_len] == patent_symbol[:prefix_len]:
                overlap.add(symbol[:prefix_len])
    return bool(overlap), overlap
