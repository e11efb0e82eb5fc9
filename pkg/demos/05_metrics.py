"""
WUPS and BLEU-1 by hand
=======================
"""

from hcsa.metrics import SimilarityOracle, bleu1, evaluate, wup_similarity, wups

tax = SimilarityOracle.from_taxonomy_file()

# dog and cat share the parent "animal": 2*depth(animal) / (depth(dog)+depth(cat)) = 4/6
print("WUP(dog, cat) =", wup_similarity("dog", "cat", tax))

# below the 0.9 threshold the similarity is scaled down by 0.1
print("WUPS@0.0 =", wups(["dog"], ["cat"], 0.0, tax))
print("WUPS@0.9 =", round(wups(["dog"], ["cat"], 0.9, tax), 4))

# clipped unigram precision with a brevity penalty
print("BLEU-1('red blue', 'red') =", bleu1("red blue", "red"))
print("BLEU-1('red', 'red blue') =", round(bleu1("red", "red blue"), 4))

# synonyms count as equal, everything else scores zero
syn = SimilarityOracle.from_synonym_file()
print("puppy ~ dog:", syn.similarity("puppy", "dog"))

refs = [{"id": "1", "answer": "red", "type": "color"},
        {"id": "2", "answer": "dog", "type": "object"},
        {"id": "3", "answer": "kitchen", "type": "location"}]
preds = [{"id": "1", "answer": "crimson"}, {"id": "2", "answer": "cat"}, {"id": "3", "answer": "kitchen"}]
print(evaluate(preds, refs, tax).format())
