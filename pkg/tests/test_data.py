import hashlib

import numpy as np
import pytest

from attnalign.data import (
    BPE,
    EOS,
    PAD,
    UNK,
    Corpus,
    SyntheticConfig,
    Vocab,
    apply_bpe,
    desegment,
    format_line,
    generate_synthetic,
    learn_bpe,
    load_merges,
    parse_line,
    project_to_words,
    read_pharaoh,
    read_text,
    save_merges,
    write_pharaoh,
)
from attnalign.errors import DataError, ParseError
from attnalign.evaluation import aer
from attnalign.links import AlignmentSet


class TestVocabCorpus:
    def test_specials_and_round_trip(self, tmp_path):
        v = Vocab.build([["b", "a"], ["c", "a"]])
        assert (v.stoi["<pad>"], v.stoi["<unk>"], v.stoi["</s>"]) == (PAD, UNK, EOS)
        assert v.decode(v.encode(["a", "c"])) == ["a", "c"]
        assert v.encode(["zzz"]).tolist() == [UNK]
        v.save(tmp_path / "v")
        assert Vocab.load(tmp_path / "v").itos == v.itos

    def test_bijective(self):
        v = Vocab.build([list("hello world")])
        assert len(set(v.itos)) == len(v) and all(v.stoi[t] == i for i, t in enumerate(v.itos))

    def test_line_counts_must_match(self):
        with pytest.raises(DataError):
            Corpus([["a"]], [["b"], ["c"]])

    def test_empty_sentence(self):
        with pytest.raises(DataError, match="line 2"):
            Corpus([["a"], []], [["b"], ["c"]])

    def test_reversed_and_io(self, tmp_path):
        c = Corpus([["a", "b"]], [["x"]])
        r = c.reversed()
        assert r.src == [["x"]] and r.src_vocab is c.tgt_vocab
        c.write(tmp_path / "s", tmp_path / "t")
        assert read_text(tmp_path / "s") == [["a", "b"]]

    def test_invalid_utf8(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"\xff\xfe\n")
        with pytest.raises(DataError, match="UTF-8"):
            read_text(tmp_path / "bad")


class TestPharaoh:
    def test_zero_based(self):
        assert parse_line("0-0 1-1") == AlignmentSet([(1, 1), (2, 2)])

    def test_possible_marker(self):
        a = parse_line("0-0 1?2")
        assert a.sure == {(1, 1)} and a.possible == {(1, 1), (2, 3)}

    def test_one_based(self):
        assert parse_line("1-1 2-3", indexing=1) == AlignmentSet([(1, 1), (2, 3)])

    @pytest.mark.parametrize("line,col", [("0-0 x-1", 5), ("0-0  1:2", 6), ("0-", 1)])
    def test_malformed_reports_position(self, line, col):
        with pytest.raises(ParseError) as info:
            parse_line(line, lineno=7)
        assert info.value.line == 7 and info.value.column == col

    def test_below_origin(self):
        with pytest.raises(ParseError):
            parse_line("0-1", indexing=1)

    @pytest.mark.parametrize("indexing", [0, 1])
    def test_round_trip(self, tmp_path, indexing):
        sets = [AlignmentSet([(1, 1), (3, 2)], [(2, 2)]), AlignmentSet(), AlignmentSet([(4, 1)])]
        write_pharaoh(tmp_path / "a", sets, indexing)
        assert read_pharaoh(tmp_path / "a", indexing) == sets
        assert format_line(sets[0], indexing) == ("0-0 1?1 2-1" if indexing == 0 else "1-1 2?2 3-2")

    def test_file_errors_carry_path_and_line(self, tmp_path):
        (tmp_path / "a").write_text("0-0\n0-0 oops\n")
        with pytest.raises(ParseError) as info:
            read_pharaoh(tmp_path / "a")
        assert info.value.line == 2 and str(tmp_path / "a") in str(info.value)


class TestBPE:
    def test_zero_merges_is_characters(self):
        assert learn_bpe([[["abc"]]], 0) == []
        assert apply_bpe([], "abc ab")[0] == ["a", "b", "c</w>", "a", "b</w>"]

    def test_first_merge_counted_by_hand(self):
        assert learn_bpe([[["aaab"]] * 5], 1) == [("a", "a")]

    def test_joint_over_both_sides(self):
        table = learn_bpe([[["xy"]] * 3, [["xy"]] * 3], 1)
        assert table == [("x", "y</w>")]

    def test_lexicographic_tie_break(self):
        assert learn_bpe([[["ab", "cd"]] * 2], 1) == [("a", "b</w>")]

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            learn_bpe([[]], 3)

    def test_round_trip_and_map(self):
        words = "the cat sat on the mat".split()
        table = learn_bpe([[words] * 3], 10)
        tokens, word_map = apply_bpe(table, words)
        assert desegment(tokens) == words
        assert word_map == sorted(word_map) and set(word_map) == set(range(1, len(words) + 1))

    def test_unknown_characters_fall_back(self):
        table = learn_bpe([[["aaaa"]] * 3], 5)
        assert apply_bpe(table, "zq")[0] == ["z", "q</w>"]

    def test_idempotent_on_segmented_text(self):
        table = learn_bpe([["lower newest widest".split()] * 4], 12)
        once, map_once = apply_bpe(table, "lowest newer")
        twice, map_twice = apply_bpe(table, once)
        assert (twice, map_twice) == (once, map_once)

    def test_merge_file_round_trip(self, tmp_path):
        table = learn_bpe([["hello yellow".split()] * 3], 6)
        save_merges(tmp_path / "m", table)
        assert load_merges(tmp_path / "m") == table
        assert BPE.load(tmp_path / "m").merges == table
        (tmp_path / "bad").write_text("a b c\n")
        with pytest.raises(DataError, match="line 1"):
            load_merges(tmp_path / "bad")


class TestProjection:
    def test_identity_maps(self):
        a = AlignmentSet([(1, 2), (3, 1)])
        assert project_to_words(a, [1, 2, 3], [1, 2]) == a

    def test_pieces_collapse(self):
        a = AlignmentSet([(1, 1), (1, 2), (2, 1), (2, 2)])
        assert project_to_words(a, [1, 1], [1, 1]) == AlignmentSet([(1, 1)])

    def test_hand_case(self):
        assert project_to_words(AlignmentSet([(1, 1), (2, 1)]), [1, 1], [1]) == AlignmentSet([(1, 1)])

    def test_out_of_range(self):
        with pytest.raises(DataError):
            project_to_words(AlignmentSet([(3, 1)]), [1, 2], [1])

    def test_identity_projection_preserves_aer(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n, m = rng.integers(1, 7, size=2)
            cells = [(s, t) for s in range(1, n + 1) for t in range(1, m + 1)]
            hyp = AlignmentSet([c for c in cells if rng.random() < 0.3])
            gold = AlignmentSet([c for c in cells if rng.random() < 0.3])
            projected = project_to_words(hyp, list(range(1, n + 1)), list(range(1, m + 1)))
            assert aer(projected, gold) == aer(hyp, gold)


class TestSynthetic:
    def test_relabeling_without_reordering(self):
        corpus, golds = generate_synthetic(SyntheticConfig(sentences=50, reorder_window=1,
                                                           split_prob=0.0), seed=4)
        mapping = {}
        for s, t, g in zip(corpus.src, corpus.tgt, golds):
            assert len(s) == len(t)
            assert g == AlignmentSet([(i, i) for i in range(1, len(s) + 1)])
            for a, b in zip(s, t):
                assert mapping.setdefault(a, b) == b

    def test_doubled_tokens(self):
        corpus, golds = generate_synthetic(SyntheticConfig(sentences=50, split_prob=0.5), seed=5)
        doubled = 0
        for t, g in zip(corpus.tgt, golds):
            per_target = {}
            for s, j in g.links:
                per_target.setdefault(j, []).append(s)
            assert all(len(v) == 1 for v in per_target.values())
            fanout = {}
            for s, j in g.links:
                fanout.setdefault(s, []).append(j)
            for s, js in fanout.items():
                assert len(js) <= 2
                if len(js) == 2:
                    doubled += 1
                    assert t[js[0] - 1] == t[js[1] - 1]
        assert doubled > 0

    def test_reordering_stays_in_window(self):
        cfg = SyntheticConfig(sentences=100, reorder_window=3, split_prob=0.0)
        _, golds = generate_synthetic(cfg, seed=6)
        for g in golds:
            for s, t in g.links:
                assert (s - 1) // 3 == (t - 1) // 3

    def test_byte_identical_with_fixed_seed(self, tmp_path):
        digests = []
        for run in range(2):
            corpus, golds = generate_synthetic(SyntheticConfig(sentences=200), seed=9)
            corpus.write(tmp_path / f"s{run}", tmp_path / f"t{run}")
            write_pharaoh(tmp_path / f"g{run}", golds)
            digests.append([hashlib.sha256((tmp_path / f"{k}{run}").read_bytes()).hexdigest()
                            for k in "stg"])
        assert digests[0] == digests[1]

    def test_gold_within_bounds(self):
        corpus, golds = generate_synthetic(SyntheticConfig(sentences=300, split_prob=0.3), seed=2)
        for s, t, g in zip(corpus.src, corpus.tgt, golds):
            assert g.src_len == len(s) and g.tgt_len == len(t)
            assert {j for _, j in g.links} == set(range(1, len(t) + 1))

    def test_offset_draws_new_sentences_same_language(self):
        cfg = SyntheticConfig(sentences=30, reorder_window=1, split_prob=0.0)
        a, _ = generate_synthetic(cfg, seed=1)
        b, _ = generate_synthetic(cfg, seed=1, offset=1)
        assert a.src != b.src
        table = {x: y for s, t in zip(a.src, a.tgt) for x, y in zip(s, t)}
        for s, t in zip(b.src, b.tgt):
            assert all(table.get(x, y) == y for x, y in zip(s, t))

    @pytest.mark.parametrize("kw", [dict(min_len=0), dict(min_len=5, max_len=4),
                                    dict(split_prob=1.5), dict(reorder_window=0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            SyntheticConfig(**kw)
