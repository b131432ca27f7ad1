import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthopair.corpus import (
    Lexicon,
    SplitSpec,
    TokenPair,
    bundled_lexicon,
    extract_candidates,
    largest_remainder,
    load_lexicon,
    load_pairs,
    split,
    split_sentences,
    tokenize,
    write_pairs,
)
from orthopair.errors import EmptyFileError, MissingColumnsError, UndecodableError

HEADER = "variant\tstandard\tcontext\tsource_id\n"


def write(tmp_path, text, name="pairs.tsv"):
    path = tmp_path / name
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, encoding="utf-8", newline="")
    return path


class TestLoadPairs:
    def test_gb_row(self, tmp_path):
        path = write(tmp_path, HEADER + "afear'd\tafraid\tI was afear'd of it.\tpg123\n")
        (pair,) = load_pairs(path)
        assert pair == TokenPair("afear'd", "afraid", "I was afear'd of it.", "pg123")

    def test_identical_pair_is_rejected(self, tmp_path):
        path = write(tmp_path, HEADER + "cat\tcat\t\t\nkat\tcat\t\t\n")
        rejects = []
        pairs = load_pairs(path, rejects=rejects)
        assert [p.variant for p in pairs] == ["kat"]
        assert len(rejects) == 1 and rejects[0].line == 2

    def test_crlf_matches_lf(self, tmp_path):
        body = ["afear'd\tafraid\tctx\ts1", "chillun\tchildren\tctx\ts2"]
        lf = write(tmp_path, HEADER + "\n".join(body) + "\n", "lf.tsv")
        crlf = write(tmp_path, HEADER.replace("\n", "\r\n") + "\r\n".join(body) + "\r\n", "crlf.tsv")
        assert load_pairs(lf) == load_pairs(crlf)

    def test_columns_by_header_name(self, tmp_path):
        path = write(tmp_path, "source_id\tstandard\tvariant\ns1\tafraid\tafear'd\n")
        assert load_pairs(path) == [TokenPair("afear'd", "afraid", None, "s1")]

    def test_normalizes_tokens(self, tmp_path):
        path = write(tmp_path, HEADER + "Afear’d,\tAfraid\t\t\n")
        assert load_pairs(path)[0].variant == "afear'd"
        assert load_pairs(path, lowercase=False)[0].standard == "Afraid"

    def test_fce_codes(self, tmp_path):
        path = write(tmp_path, "variant\tstandard\terror_code\nrecieve\treceive\tS\nis\tare\tAGV\n")
        rejects = []
        pairs = load_pairs(path, fmt="fce-tsv", rejects=rejects)
        assert [p.variant for p in pairs] == ["recieve"]
        assert rejects[0].line == 3

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyFileError):
            load_pairs(write(tmp_path, ""))

    def test_missing_columns(self, tmp_path):
        with pytest.raises(MissingColumnsError) as info:
            load_pairs(write(tmp_path, "variant\tcontext\nx\ty\n"))
        assert info.value.line == 1

    def test_undecodable(self, tmp_path):
        with pytest.raises(UndecodableError) as info:
            load_pairs(write(tmp_path, HEADER.encode() + b"ok\tfine\t\t\nbad\xff\tx\t\t\n"))
        assert info.value.line == 3

    def test_errors_are_distinct(self):
        kinds = {EmptyFileError, MissingColumnsError, UndecodableError}
        assert len(kinds) == 3
        assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_pairs(write(tmp_path, HEADER), fmt="xml")

    def test_roundtrip(self, tmp_path):
        pairs = [TokenPair("afear'd", "afraid", "I was afear'd.", "pg1"), TokenPair("chillun", "children")]
        path = tmp_path / "out.tsv"
        write_pairs(path, pairs)
        assert load_pairs(path) == pairs


class TestLexicon:
    def test_sorted_unique(self, tmp_path):
        path = write(tmp_path, "the\nCat\ncat\n\n...\n", "lex.txt")
        lex = load_lexicon(path)
        assert lex.tokens == ("cat", "the")
        assert "cat" in lex and "dog" not in lex

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Lexicon(("b", "a"))

    def test_bundled(self):
        lex = bundled_lexicon()
        assert len(lex) == 1000
        assert "the" in lex


class TestExtraction:
    LEX = Lexicon.from_tokens("he said twice it cost dollars is large we visited today".split())

    def test_apostrophe_variant(self):
        out = extract_candidates("He said 'afear'd' twice.", self.LEX)
        assert out == [("afear'd", "He said 'afear'd' twice.")]

    def test_numeric_excluded(self):
        assert extract_candidates("It cost 40 dollars.", self.LEX) == []

    def test_capitalized_name_excluded(self):
        text = "London is large. We visited London today."
        assert extract_candidates(text, self.LEX) == []

    def test_sentence_initial_out_of_lexicon_kept(self):
        out = extract_candidates("Chillun is here.", Lexicon.from_tokens(["is", "here"]))
        assert [c for c, _ in out] == ["chillun"]

    def test_planted_recall(self):
        rng = np.random.default_rng(0)
        lex = bundled_lexicon()
        words = [w for w in lex.tokens if w.isalpha()]
        planted = ["afear'd", "chillun", "wurld", "'fraid", "mars'", "hev", "gwine", "dat"]
        planted = [p for p in planted if p not in lex]
        sentences, expected = [], set()
        for k in range(40):
            toks = list(rng.choice(words, size=8))
            if k % 3 == 0:
                toks.append(str(rng.integers(10, 99)))
            var = planted[k % len(planted)]
            toks.insert(int(rng.integers(1, len(toks))), var)
            expected.add(var)
            sentences.append(" ".join(toks).capitalize() + ".")
        out = extract_candidates(" ".join(sentences), lex)
        found = {c for c, _ in out}
        assert expected <= found
        for cand in found:
            assert cand not in lex
            assert not any(ch.isdigit() for ch in cand)

    def test_sentence_split_abbreviations(self):
        assert split_sentences("Mr. Smith came. He left!  Then it rained.") == [
            "Mr. Smith came.", "He left!", "Then it rained.",
        ]

    def test_tokenize(self):
        assert tokenize("'Tis a well-known mars' tale, 'afear'd'.") == ["'Tis", "a", "well-known", "mars'", "tale", "afear'd"]


class TestSplit:
    def test_sizes(self):
        pairs = [TokenPair(f"v{i}", f"s{i}") for i in range(10)]
        train, val, test = split(pairs, SplitSpec((0.8, 0.1, 0.1), seed=3))
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_deterministic(self):
        pairs = [TokenPair(f"v{i}", f"s{i}") for i in range(50)]
        assert split(pairs, SplitSpec(seed=4)) == split(pairs, SplitSpec(seed=4))
        assert split(pairs, SplitSpec(seed=4)) != split(pairs, SplitSpec(seed=5))

    def test_variant_grouping(self):
        pairs = [TokenPair(f"v{i}", f"s{i}") for i in range(20)]
        pairs += [TokenPair("chillun", "children"), TokenPair("chillun", "chilly"), TokenPair("chillun", "chill")]
        for seed in range(10):
            parts = split(pairs, SplitSpec(seed=seed))
            holding = [sum(p.variant == "chillun" for p in part) for part in parts]
            assert sorted(holding) == [0, 0, 3]

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            SplitSpec((0.5, 0.3, 0.3))

    def test_largest_remainder(self):
        assert largest_remainder(10, (0.8, 0.1, 0.1)) == [8, 1, 1]
        assert sum(largest_remainder(7, (0.5, 0.25, 0.25))) == 7

    @settings(max_examples=1000, deadline=None)
    @given(
        st.lists(st.tuples(st.sampled_from("abcdefghij"), st.sampled_from("klmnop")), min_size=0, max_size=40),
        st.integers(0, 2**32 - 1),
        st.sampled_from(["pair", "variant-type"]),
    )
    def test_partition_properties(self, raw, seed, grouping):
        pairs = [TokenPair(v * (1 + i % 3), s) for i, (v, s) in enumerate(raw)]
        spec = SplitSpec(seed=seed, grouping=grouping)
        parts = split(pairs, spec)
        assert parts == split(pairs, spec)
        key = lambda p: (p.variant, p.standard)
        assert sorted((p for part in parts for p in part), key=key) == sorted(pairs, key=key)
        if grouping == "variant-type":
            homes = {}
            for k, part in enumerate(parts):
                for p in part:
                    assert homes.setdefault(p.variant, k) == k
        n_units = len(pairs) if grouping == "pair" else len({p.variant for p in pairs})
        if n_units >= 10:
            assert all(parts)
