"""
Retrieving paraphrase pairs for a sentence
==========================================

A small PPDB excerpt goes through the same path the ``ingest`` and ``index``
subcommands take, then we look at what comes back for one question.
"""

from dictedit.data import tokenize
from dictedit.ppdb import build_dictionary
from dictedit.retrieval import build_index, retrieve

ppdb = """\
[VB] ||| overcome ||| get rid of ||| PPDB2.0Score=3.52 ||| 0-0 ||| Equivalence
[VB] ||| overcome ||| surmount ||| PPDB2.0Score=3.10 ||| 0-0 ||| Equivalence
[NP] ||| the best ways ||| the most suitable ways ||| PPDB2.0Score=2.01 ||| 0-0 1-1 2-2 ||| Equivalence
[NP] ||| the best ways ||| the best methods ||| PPDB2.0Score=2.44 ||| 0-0 1-1 2-2 ||| Equivalence
[NN] ||| boredom ||| tedium ||| PPDB2.0Score=2.87 ||| 0-0 ||| Equivalence
[NN] ||| boredom ||| excitement ||| PPDB2.0Score=1.20 ||| 0-0 ||| Exclusion
[JJ] ||| best ||| finest ||| PPDB2.0Score=1.75 ||| 0-0 ||| Equivalence
[NN] ||| cat ||| feline ||| PPDB2.0Score=3.30 ||| 0-0 ||| Equivalence
""".splitlines()

# only Equivalence pairs survive; "boredom -> excitement" is dropped here
dictionary = build_dictionary(ppdb)
print(len(dictionary), "dictionary entries")

index = build_index(dictionary)
sentence = tokenize("What are the best ways to overcome boredom?")
print(sentence)

# score = sum of tf-idf over shared words + the PPDB score
for pair in retrieve(index, sentence, M=5):
    print(f"{pair.score_r:7.3f}  {pair.entry.label:35s} overlap {pair.overlap_score:.3f}")

# nothing in common with the dictionary: an empty list, which the
# network handles with an all-masked dictionary
print(len(retrieve(index, tokenize("a quiet afternoon"))))
