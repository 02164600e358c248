import random

import pytest

from maskdb import masking
from maskdb.assoc import AssociativeArray, MaskSpec, mask_array
from maskdb.errors import ArgumentError, FormatError, LoadError, RemapError, StoreError
from maskdb.ope import LoopbackTransport, OpeServerState, OpeSession
from maskdb.store import TripleStore

KEY = masking.derive_key("hunter2", b"\x01\x02\x03\x04\x05\x06\x07\x08")


def tweet_corpus() -> AssociativeArray:
    return AssociativeArray.from_triples([
        ("T1", "word|happy", "1"),
        ("T1", "word|sun", "1"),
        ("T2", "word|happy", "1"),
        ("T2", "word|rain", "1"),
        ("T3", "word|rain", "1"),
    ])


def random_store(rng: random.Random, n_rows=15, n_cols=10, density=0.3) -> TripleStore:
    store = TripleStore()
    triples = [(f"r{i:02d}", f"c{j:02d}", str(rng.randint(1, 99)))
               for i in range(n_rows) for j in range(n_cols) if rng.random() < density]
    store.ingest(triples)
    return store


class TestIngest:
    def test_counts_and_size(self):
        store = TripleStore()
        n = store.ingest(tweet_corpus())
        assert n == 5
        assert len(store) == 5

    def test_double_ingest_idempotent(self):
        store = TripleStore()
        store.ingest(tweet_corpus())
        assert store.ingest(tweet_corpus()) == 0
        assert len(store) == 5

    def test_full_scan_roundtrip(self):
        store = TripleStore()
        store.ingest(tweet_corpus())
        assert store.scan() == list(tweet_corpus().triples())

    def test_masked_array_spec_checked(self):
        spec = MaskSpec.parse("DET,DET,RND")
        masked = mask_array(tweet_corpus(), spec, KEY)
        store = TripleStore(spec=spec)
        assert store.ingest(masked) == 5
        with pytest.raises(StoreError):
            TripleStore().ingest(masked)  # CLR store, DET array

    def test_tab_in_field_rejected(self):
        with pytest.raises(FormatError):
            TripleStore().ingest([("a\tb", "c", "d")])

    def test_overwrite_counts_as_change(self):
        store = TripleStore()
        store.ingest([("r", "c", "1")])
        assert store.ingest([("r", "c", "2")]) == 1
        assert store.scan()[0].val == "2"


class TestScans:
    def setup_method(self):
        self.store = TripleStore()
        self.store.ingest(tweet_corpus())

    def test_scan_row_absent(self):
        assert self.store.scan_row("T99") == []

    def test_scan_row_sorted_by_col(self):
        cols = [t.col for t in self.store.scan_row("T1")]
        assert cols == sorted(cols) == ["word|happy", "word|sun"]

    def test_scan_col_masked_equality(self):
        spec = MaskSpec.parse("DET,DET,RND")
        masked = mask_array(tweet_corpus(), spec, KEY)
        store = TripleStore(spec=spec)
        store.ingest(masked)
        happy_ct = masking.mask_det("word|happy", KEY).payload
        hits = store.scan_col(happy_ct)
        assert len(hits) == 2

    def test_scans_equal_client_side_filter(self):
        rng = random.Random(77)
        for _ in range(10):
            store = random_store(rng)
            full = store.scan()
            for row in store.rows():
                assert store.scan_row(row) == [t for t in full if t.row == row]
            for col in store.cols():
                got = store.scan_col(col)
                want = sorted((t for t in full if t.col == col), key=lambda t: t.row)
                assert got == want


class TestRangeScan:
    def _ope_store(self):
        spec = MaskSpec.parse("DET,OPE,RND")
        state = OpeServerState(width=16, insert_timeout=0)
        session = OpeSession(LoopbackTransport(state), KEY)
        masked = mask_array(tweet_corpus(), spec, KEY, sessions={"col": session})
        store = TripleStore(spec=spec)
        store.ingest(masked)
        return store, session

    def test_full_width_range_returns_all(self):
        store, _ = self._ope_store()
        assert len(store.range_scan("col", "0" * 16, "1" * 16)) == len(store)

    def test_degenerate_range_equals_scan(self):
        store, session = self._ope_store()
        bits = session.lookup("word|happy")
        assert store.range_scan("col", bits, bits) == store.scan_col(bits)

    def test_random_ranges_match_brute_force(self):
        rng = random.Random(3)
        for _ in range(20):
            store = random_store(rng)
            keys = store.cols()
            lo, hi = sorted([rng.choice(keys), rng.choice(keys)])
            got = store.range_scan("col", lo, hi)
            want = [t for t in store.scan() if lo <= t.col <= hi]
            assert sorted(got) == sorted(want)

    def test_inverted_range_rejected(self):
        store, _ = self._ope_store()
        with pytest.raises(ArgumentError):
            store.range_scan("col", "1" * 16, "0" * 16)

    def test_bad_dimension_rejected(self):
        with pytest.raises(ArgumentError):
            TripleStore().range_scan("val", "a", "b")


class TestApplyRemap:
    def test_identity_remap_is_noop(self):
        store = TripleStore()
        store.ingest(tweet_corpus())
        before = store.scan()
        remap = {c: c for c in store.cols()}
        assert store.apply_remap("col", remap) == 0
        assert store.scan() == before

    def test_remap_preserves_range_semantics(self):
        spec = MaskSpec.parse("DET,OPE,RND")
        state = OpeServerState(width=16, insert_timeout=0)
        session = OpeSession(LoopbackTransport(state), KEY)
        masked = mask_array(tweet_corpus(), spec, KEY, sessions={"col": session})
        store = TripleStore(spec=spec)
        store.ingest(masked)

        old_bits = {w: session.lookup(w) for w in ["word|happy", "word|rain", "word|sun"]}
        old_result = store.range_scan("col", old_bits["word|happy"], old_bits["word|rain"])

        remap = state.rebalance()
        store.apply_remap("col", remap)
        new_bits = {w: session.lookup(w) for w in old_bits}
        new_result = store.range_scan("col", new_bits["word|happy"], new_bits["word|rain"])

        def plaintext_set(triples):
            return {(t.row, t.val) for t in triples}

        assert plaintext_set(new_result) == plaintext_set(old_result)
        assert len(new_result) == len(old_result)

    def test_partial_remap_rolls_back(self):
        store = TripleStore()
        store.ingest(tweet_corpus())
        before = store.scan()
        with pytest.raises(RemapError):
            store.apply_remap("col", {"word|happy": "word|x"})
        assert store.scan() == before

    def test_row_dimension_remap(self):
        store = TripleStore()
        store.ingest(tweet_corpus())
        remap = {"T1": "U1", "T2": "U2", "T3": "U3"}
        assert store.apply_remap("row", remap) == 5
        assert store.rows() == ["U1", "U2", "U3"]
        assert len(store.scan_row("U1")) == 2


class TestPersistence:
    def test_roundtrip_random_store(self, tmp_path):
        rng = random.Random(11)
        store = random_store(rng)
        path = store.persist(tmp_path / "store.tsv")
        loaded = TripleStore.load(path)
        assert loaded.scan() == store.scan()
        assert loaded.spec == store.spec

    def test_header_records_spec(self, tmp_path):
        spec = MaskSpec.parse("DET,OPE,RND")
        store = TripleStore(spec=spec)
        store.ingest([("a", "b", "c")])
        path = store.persist(tmp_path / "store.tsv")
        first = path.read_text().split("\n")[0]
        assert first == "#cmdstore v1 DET,OPE,RND"
        assert TripleStore.load(path).spec == spec

    def test_empty_file_loads_empty(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        store = TripleStore.load(path)
        assert len(store) == 0

    def test_two_field_line_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#cmdstore v1 CLR,CLR,CLR\na\tb\tc\nx\ty\n")
        with pytest.raises(LoadError) as err:
            TripleStore.load(path)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_headerless_triples_load_as_clear(self, tmp_path):
        path = tmp_path / "plain.tsv"
        path.write_text("a\tb\tc\n")
        store = TripleStore.load(path)
        assert len(store) == 1
        assert store.spec == MaskSpec()

    def test_index_coherence_after_operations(self):
        rng = random.Random(13)
        store = random_store(rng)
        store.ingest([("zz", "yy", "1")])
        store.apply_remap("row", {r: r for r in store.rows()})
        from_main = {(t.row, t.col, t.val) for t in store.scan()}
        from_trans = {(t.row, t.col, t.val)
                      for c in store.cols() for t in store.scan_col(c)}
        assert from_main == from_trans
