import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from attnalign.data import SyntheticConfig, generate_synthetic  # noqa: E402
from attnalign.nnmodel import ModelConfig, TranslationModel, train_translation  # noqa: E402


def small_model_config(corpus, **overrides) -> ModelConfig:
    sizes = dict(embedding_size=32, hidden_units=64, encoder_layers=1, decoder_layers=1,
                 heads=2, align_hidden=16)
    sizes.update(overrides)
    return ModelConfig(len(corpus.src_vocab), len(corpus.tgt_vocab), **sizes)


@pytest.fixture(scope="session")
def copy_world():
    """A small monotone relabeling corpus and briefly trained models in both directions."""
    corpus, gold = generate_synthetic(
        SyntheticConfig(vocab_size=12, sentences=400, min_len=3, max_len=8, reorder_window=1,
                        split_prob=0.0), seed=3)
    models = {}
    for direction, data in (("fwd", corpus), ("bwd", corpus.reversed())):
        model = TranslationModel(small_model_config(data), seed=11, direction=direction)
        train_translation(model, data.pairs(), steps=150, batch_tokens=1000, lr=5e-3, warmup=30,
                          seed=5)
        models[direction] = model.freeze()
    return SimpleNamespace(corpus=corpus, gold=gold, fwd=models["fwd"], bwd=models["bwd"],
                           config=models["fwd"].config)


@pytest.fixture(scope="session")
def copy_layers(copy_world):
    """Alignment layers trained on top of both copy-world models."""
    from attnalign.nnmodel import AlignmentLayer
    from attnalign.objectives import LayerTrainConfig, train_alignment_layer

    layers = {}
    for direction, data in (("fwd", copy_world.corpus), ("bwd", copy_world.corpus.reversed())):
        layer = AlignmentLayer(getattr(copy_world, direction).config, seed=21)
        train_alignment_layer(getattr(copy_world, direction), layer, data.pairs(),
                              LayerTrainConfig(steps=150, batch_tokens=1000, lr=1e-2, warmup=20))
        layers[direction] = layer
    return layers


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for key in sorted(verdicts, key=str):
            terminalreporter.write_line(verdicts[key])
