"""Independent sentence-BLEU oracle used to freeze expected values in the
C++ tests: clipped n-gram precision up to 4-grams, add-one smoothing for
zero-match orders n >= 2, brevity penalty exp(1 - r/c) when c <= r."""
import collections
import math
import re
import sys


def tokenize(text):
    return re.findall(r"\w+|[^\w\s]", text.lower())


def bleu(cand, ref):
    c, r = tokenize(cand), tokenize(ref)
    precisions = []
    for n in range(1, 5):
        cc = collections.Counter(tuple(c[i:i + n]) for i in range(len(c) - n + 1))
        rc = collections.Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
        matches = sum(min(v, rc[k]) for k, v in cc.items())
        total = max(len(c) - n + 1, 0)
        if n >= 2 and matches == 0:
            precisions.append(1.0 / (total + 1))
        else:
            precisions.append(matches / total)
    bp = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    if min(precisions) == 0:
        return 0.0, precisions, bp
    return bp * math.exp(sum(math.log(p) for p in precisions) / 4), precisions, bp


if __name__ == "__main__":
    score, ps, bp = bleu(sys.argv[1], sys.argv[2])
    print(repr(score), [repr(p) for p in ps], repr(bp))
