"""Brute-force reference for vocabulary.golden.txt, independent of the C++ tokenizer.

Usage: python3 make_golden.py corpus.txt > vocabulary.golden.txt
Needs nltk. Settings match the default preprocessing: min_doc_len 3,
lower_frac 2e-5, upper_frac 0.5, and no bigram reaches the count of 20.
"""
import math
import re
import sys

from nltk.stem.porter import PorterStemmer

stem = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS).stem


def tokens(line):
    out = []
    for chunk in line.split():
        chunk = chunk.replace("'", "").replace("’", "").lower()
        if not chunk or chunk.startswith("@") or chunk.startswith(("http://", "https://", "www.")) or "://" in chunk:
            continue
        for piece in re.split(r"[^a-z0-9]+", chunk):
            if piece and not piece.isdigit():
                out.append(stem(piece))
    return out


docs = [tokens(l) for l in open(sys.argv[1], encoding="utf-8")]
docs = [d for d in docs if len(d) >= 3]
n = len(docs)
df = {}
for d in docs:
    for t in set(d):
        df[t] = df.get(t, 0) + 1
lo, hi = math.ceil(2e-5 * n), math.floor(0.5 * n)
kept = sorted((t for t, c in df.items() if lo <= c <= hi), key=lambda t: (-df[t], t))
print(f"V={len(kept)}")
for t in kept:
    print(t)
