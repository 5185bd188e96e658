"""Aligning at the subword level and reporting at the word level.

Run: python demos/03_subword_projection.py

Joint BPE merges are learned on both sides of a toy corpus. Each sentence is
segmented, a subword alignment is made (here by hand, standing in for model
output) and projected back: a word pair is linked as soon as any of their
subwords are.
"""

from attnalign.data import BPE, desegment, learn_bpe, project_to_words
from attnalign.links import AlignmentSet

src = ["the lowest newer tower".split(), "the newest tower".split()]
tgt = ["der niedrigste neuere turm".split(), "der neueste turm".split()]

merges = learn_bpe([src, tgt], merges=12)
print("first merges:", ", ".join(f"{a}+{b}" for a, b in merges[:6]), "...")
bpe = BPE(merges)

s_tok, s_map = bpe.apply(src[0])
t_tok, t_map = bpe.apply(tgt[0])
print("\nsource subwords:", " ".join(s_tok))
print("target subwords:", " ".join(t_tok))
print("source word of each subword:", s_map)
print("target word of each subword:", t_map)
assert desegment(s_tok) == src[0] and bpe.apply(s_tok)[0] == s_tok  # reversible, idempotent

# a monotone subword alignment: each target subword points at the source
# subword in the same relative position of the same word
links = set()
for t, tw in enumerate(t_map, 1):
    candidates = [s for s, sw in enumerate(s_map, 1) if sw == tw]
    links.add((candidates[min(len(candidates) - 1, sum(1 for x in t_map[:t - 1] if x == tw))], t))
sub = AlignmentSet(links, src_len=len(s_tok), tgt_len=len(t_tok))
words = project_to_words(sub, s_map, t_map)
print("\nsubword links:", sub.sorted_links())
print("word links:   ", words.sorted_links())
for i, j in words.sorted_links():
    print(f"  {src[0][i - 1]:>8} - {tgt[0][j - 1]}")
