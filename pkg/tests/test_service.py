import pytest
from fastapi.testclient import TestClient

from maskdb import masking
from maskdb.assoc import AssociativeArray, MaskSpec, mask_array, unmask_array, MaskedArray
from maskdb.masking import MaskMode
from maskdb.service import StoreClient, create_app

KEY = masking.derive_key("hunter2", b"\x01\x02\x03\x04\x05\x06\x07\x08")

CORPUS = [
    ("T1", "word|happy", "1"),
    ("T1", "word|sun", "1"),
    ("T2", "word|happy", "1"),
    ("T2", "word|rain", "1"),
    ("T3", "word|rain", "1"),
]


@pytest.fixture()
def http(tmp_path):
    app = create_app(data_dir=tmp_path / "data")
    with TestClient(app) as client:
        yield client


@pytest.fixture()
def store(http):
    client = StoreClient("http://testserver", "corpus", client=http)
    client.create("CLR,CLR,CLR")
    return client


class TestLifecycle:
    def test_health(self, http):
        body = http.get("/health").json()
        assert body["status"] == "ok"

    def test_create_and_list(self, http):
        assert http.post("/stores", json={"name": "a", "spec": "DET,DET,RND"}).status_code == 201
        listed = http.get("/stores").json()["stores"]
        assert listed == [{"name": "a", "spec": "DET,DET,RND", "entries": 0}]

    def test_conflicting_create(self, http):
        http.post("/stores", json={"name": "a"})
        assert http.post("/stores", json={"name": "a"}).status_code == 409

    def test_bad_spec_rejected(self, http):
        assert http.post("/stores", json={"name": "a", "spec": "DET"}).status_code == 400

    def test_bad_name_rejected(self, http):
        assert http.post("/stores", json={"name": "../evil"}).status_code == 422

    def test_missing_store_404(self, http):
        assert http.get("/stores/nope").status_code == 404
        assert http.get("/stores/nope/scan").status_code == 404

    def test_delete(self, http):
        http.post("/stores", json={"name": "a"})
        assert http.delete("/stores/a").status_code == 204
        assert http.get("/stores/a").status_code == 404


class TestStoreOperations:
    def test_ingest_and_scan(self, store):
        assert store.ingest(CORPUS) == 5
        assert len(store.scan()) == 5
        assert len(store) == 5

    def test_scan_filters(self, store):
        store.ingest(CORPUS)
        assert [t.col for t in store.scan(row="T1")] == ["word|happy", "word|sun"]
        assert [t.row for t in store.scan(col="word|rain")] == ["T2", "T3"]

    def test_scan_both_filters_rejected(self, store, http):
        store.ingest(CORPUS)
        resp = http.get("/stores/corpus/scan", params={"row": "T1", "col": "word|sun"})
        assert resp.status_code == 400

    def test_range_scan(self, store):
        store.ingest(CORPUS)
        hits = store.range_scan("col", "word|happy", "word|rain")
        assert {t.col for t in hits} == {"word|happy", "word|rain"}

    def test_range_scan_inverted(self, store, http):
        store.ingest(CORPUS)
        resp = http.get("/stores/corpus/range",
                        params={"dimension": "col", "lo": "z", "hi": "a"})
        assert resp.status_code == 400

    def test_ingest_bad_triple(self, store, http):
        resp = http.post("/stores/corpus/triples",
                         json={"triples": [["a\tb", "c", "d"]]})
        assert resp.status_code == 400

    def test_remap(self, store):
        store.ingest(CORPUS)
        mapping = {c: "x" + c for c in ["word|happy", "word|rain", "word|sun"]}
        assert store.apply_remap("col", mapping) == 5
        assert {t.col for t in store.scan()} == set(mapping.values())

    def test_partial_remap_conflict(self, store, http):
        store.ingest(CORPUS)
        resp = http.post("/stores/corpus/remap",
                         json={"dimension": "col", "mapping": {"word|happy": "x"}})
        assert resp.status_code == 409

    def test_persist_and_reload(self, tmp_path):
        data = tmp_path / "data"
        app = create_app(data_dir=data)
        with TestClient(app) as http:
            client = StoreClient("http://testserver", "keep", client=http)
            client.create("CLR,CLR,CLR")
            client.ingest(CORPUS)
            path = client.persist()
            assert path.endswith("keep.tsv")
        # a fresh service instance loads the journal
        app2 = create_app(data_dir=data)
        with TestClient(app2) as http2:
            client2 = StoreClient("http://testserver", "keep", client=http2)
            assert len(client2.scan()) == 5


class TestServiceCorrelate:
    def test_clear_correlation(self, store):
        store.ingest(CORPUS)
        triples = store.correlate(["word|happy"])
        counts = {t.col: int(t.val) for t in triples}
        assert counts == {"word|happy": 2, "word|sun": 1, "word|rain": 1}

    def test_threshold(self, store):
        store.ingest(CORPUS)
        triples = store.correlate(["word|happy"], threshold=1)
        assert [(t.row, t.col, t.val) for t in triples] == [
            ("word|happy", "word|happy", "2")]

    def test_masked_end_to_end(self, http):
        # trusted side masks, untrusted service correlates, trusted side unmasks
        spec = MaskSpec.parse("DET,DET,RND")
        masked = mask_array(AssociativeArray.from_triples(CORPUS), spec, KEY)
        client = StoreClient("http://testserver", "masked", client=http)
        client.create(spec)
        client.ingest(masked.array.triples())

        selector = masking.mask_det("word|happy", KEY).payload
        result = AssociativeArray.from_triples(client.correlate([selector]))
        out_spec = MaskSpec(MaskMode.DET, MaskMode.DET, MaskMode.CLR)
        clear = unmask_array(MaskedArray(result, out_spec), out_spec, KEY)
        assert clear.row("word|happy") == {
            "word|happy": "2", "word|sun": "1", "word|rain": "1"}

    def test_rnd_keyed_store_rejected(self, http):
        spec = MaskSpec.parse("RND,RND,RND")
        masked = mask_array(AssociativeArray.from_triples(CORPUS), spec, KEY,
                            allow_rnd_keys=True)
        client = StoreClient("http://testserver", "blind", client=http)
        client.create(spec)
        client.ingest(masked.array.triples())
        resp = http.post("/stores/blind/correlate", json={"selectors": ["x"]})
        assert resp.status_code == 400

    def test_empty_selectors_rejected(self, store, http):
        resp = http.post("/stores/corpus/correlate", json={"selectors": []})
        assert resp.status_code == 422
