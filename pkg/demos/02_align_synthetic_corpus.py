"""From a synthetic parallel corpus to symmetrized word alignments, using the library API.

Run: python demos/02_align_synthetic_corpus.py   (about two minutes on one core)

Steps:
  1. sample a corpus whose gold alignments are known by construction
  2. train a small translation model in each direction and freeze it
  3. fit an alignment layer on top of each frozen model (with contiguity loss)
  4. read alignments off the attention: forward pass, then attention optimization
  5. optimize both directions jointly and compare with grow-diag
  6. train full-context layers on the joint alignments and merge their outputs
"""

from attnalign.attopt import OptConfig
from attnalign.data import SyntheticConfig, generate_synthetic
from attnalign.evaluation import Report, evaluate_corpus
from attnalign.nnmodel import (
    AlignmentLayer,
    FullContextAlignmentLayer,
    ModelConfig,
    TranslationModel,
    train_translation,
)
from attnalign.objectives import LayerTrainConfig, train_alignment_layer, train_guided
from attnalign.pipeline.stages import align_pairs, bidirectional_links
from attnalign.symmetrize import grow_diag

corpus, gold = generate_synthetic(SyntheticConfig(vocab_size=20, sentences=1500, min_len=4,
                                                  max_len=10), seed=3)
test = slice(0, 300)  # score a gold-annotated slice of the training text
print(f"corpus: {len(corpus)} pairs; first pair\n  {' '.join(corpus.src[0])}\n  {' '.join(corpus.tgt[0])}")
print(f"  gold: {gold[0].sorted_links()}\n")

data = {"fwd": corpus, "bwd": corpus.reversed()}
models, layers = {}, {}
for d, c in data.items():
    cfg = ModelConfig(len(c.src_vocab), len(c.tgt_vocab), embedding_size=48, hidden_units=128,
                      encoder_layers=1, heads=4, align_hidden=24)
    model = TranslationModel(cfg, seed=1, direction=d)
    trace = train_translation(model, c.pairs(), steps=400, batch_tokens=2000, lr=5e-3, warmup=50)
    models[d] = model.freeze()
    layer = AlignmentLayer(cfg, seed=2)
    train_alignment_layer(model, layer, c.pairs(), LayerTrainConfig(steps=400, batch_tokens=2000))
    layers[d] = layer
    print(f"{d}: translation loss {trace[0]:.2f} -> {sum(trace[-20:]) / 20:.2f}, "
          f"alignment layer has {layer.num_parameters()} of {model.num_parameters()} parameters")

report = Report()
gold_test = gold[test]


def score(name, links):
    report.add(name, evaluate_corpus(links[test], gold_test))
    return links


hyp = {}
for d, c in data.items():
    flip = (lambda a: a) if d == "fwd" else (lambda a: a.transpose())
    for method in ("forward", "attopt"):
        links = align_pairs(models[d], layers[d], c.pairs(), method, OptConfig(steps=3))
        hyp[d, method] = score(f"{d}.{method}", [flip(a) for a in links])
score("attopt.grow-diag", [grow_diag(f, b) for f, b in zip(hyp["fwd", "attopt"], hyp["bwd", "attopt"])])

bidir, totals = bidirectional_links(models["fwd"], layers["fwd"], models["bwd"], layers["bwd"],
                                    corpus, OptConfig(steps=10, weight=5.0))
score("bidir", bidir)
print(f"\njoint objective over the corpus, per step: {' '.join(f'{x:.0f}' for x in totals)}")

guided = {}
for d, c in data.items():
    labels = bidir if d == "fwd" else [a.transpose() for a in bidir]
    layer = FullContextAlignmentLayer(models[d].config, seed=4)
    train_guided(models[d], layer, c.pairs(), labels, LayerTrainConfig(steps=400, batch_tokens=2000,
                                                                       lr=1e-2))
    links = align_pairs(models[d], layer, c.pairs(), "guided")
    guided[d] = score(f"{d}.guided", links if d == "fwd" else [a.transpose() for a in links])
score("final", [grow_diag(f, b) for f, b in zip(guided["fwd"], guided["bwd"])])

print()
print(report.table())
