"""Benchmark harness: overhead of masked operations versus clear.

For each corpus size and masking mode this measures, as medians of repeated
runs, the three end-to-end costs a client of the system sees:

* ``correlate``     — masked correlation executed by the store holder,
* ``query_unmask``  — full retrieval plus client-side unmasking,
* ``threshold``     — thresholding a correlation result.

Each mode's ratio against the clear (CLR) baseline is compared to the
targets below and graded pass/warn; warn is reported, never fatal (timings
are hardware-dependent). By default the query path runs against a real HTTP
service on localhost so retrieval cost is part of the picture, the way a
client talking to a remote store would see it; ``local=True`` keeps
everything in-process.

The corpus is a seeded synthetic feed: numbered posts, each carrying a
handful of words drawn from a Zipf-like distribution, exploded into
``word|...`` columns. Separately, deterministic masking is timed under both
of its hash choices (SHA-1 default versus SHA-256), reported as a ratio for
information only.
"""

from __future__ import annotations

import logging
import platform
import random
import statistics
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from .assoc import AssociativeArray, MaskSpec, Triple, mask_array, unmask_triples
from .errors import ConfigError
from .kernels import CorrelationResult, correlate, threshold_masked
from .masking import KeyMaterial, MaskMode, derive_key, mask_aut, mask_det
from .ope import LoopbackTransport, OpeServerState, OpeSession
from .store import TripleStore

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (10_000, 100_000)
DEFAULT_MODES = ("CLR", "DET", "OPE", "AUT")
DEFAULT_REPS = 5

# acceptance targets: masked/clear time ratios
RATIO_TARGETS = {"correlate": 2.5, "query_unmask": 2.5, "threshold": 1.2}

MODE_SPECS = {
    "CLR": "CLR,CLR,CLR",
    "DET": "DET,DET,RND",
    "OPE": "DET,OPE,RND",  # range queries live on columns
    "AUT": "AUT,AUT,AUT",
}

TSV_COLUMNS = ("size", "mode", "op", "median_ms", "ratio_vs_clr")


def synthetic_corpus(n_entries: int, seed: int, vocab_size: int = 2000,
                     words_per_post: int = 8) -> AssociativeArray:
    """Roughly ``n_entries`` triples: posts with Zipf-ish word columns."""
    rng = random.Random(seed)
    vocab = [f"w{i:05d}" for i in range(vocab_size)]
    cum_weights = []
    total = 0.0
    for rank in range(vocab_size):
        total += 1.0 / (rank + 1)
        cum_weights.append(total)
    n_posts = max(1, n_entries // words_per_post)
    triples = []
    seen_ids: set[str] = set()
    for _ in range(n_posts):
        while True:
            post_id = f"{rng.randrange(10 ** 9):010d}"  # zero-padded: byte order = numeric order
            if post_id not in seen_ids:
                seen_ids.add(post_id)
                break
        words = set(rng.choices(vocab, cum_weights=cum_weights, k=words_per_post))
        triples.extend((post_id, f"word|{w}", "1") for w in words)
    return AssociativeArray.from_triples(triples)


def most_common_column(arr: AssociativeArray) -> str:
    transposed = arr.transpose()
    return max(transposed.rows(), key=lambda c: len(transposed.row(c)))


@dataclass
class BenchCell:
    size: int
    mode: str
    op: str
    median_ms: float
    ratio_vs_clr: float
    status: str  # baseline | pass | warn | info

    def tsv_row(self) -> str:
        return f"{self.size}\t{self.mode}\t{self.op}\t{self.median_ms:.3f}\t{self.ratio_vs_clr:.3f}"

    def summary_line(self) -> str:
        return (f"[{self.status:>8}] size={self.size:<8} mode={self.mode:<4} "
                f"op={self.op:<13} median={self.median_ms:9.2f} ms "
                f"ratio={self.ratio_vs_clr:6.2f}x")


@dataclass
class BenchReport:
    cells: list[BenchCell] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def add(self, cell: BenchCell) -> None:
        self.cells.append(cell)

    def cell(self, size: int, mode: str, op: str) -> BenchCell | None:
        for c in self.cells:
            if (c.size, c.mode, c.op) == (size, mode, op):
                return c
        return None

    def warnings(self) -> list[BenchCell]:
        return [c for c in self.cells if c.status == "warn"]

    def to_tsv(self) -> str:
        lines = ["\t".join(TSV_COLUMNS)]
        lines.extend(c.tsv_row() for c in self.cells)
        return "".join(line + "\n" for line in lines)

    def summary(self) -> str:
        lines = ["bench environment: " + ", ".join(f"{k}={v}" for k, v in self.environment.items())]
        lines.extend(c.summary_line() for c in self.cells)
        n_warn = len(self.warnings())
        lines.append(f"{n_warn} warn cell(s)" if n_warn else "all graded cells within targets")
        return "\n".join(lines)


def _median_ms(fn: Callable[[], object], reps: int) -> float:
    fn()  # warmup: fill connection pools and dict caches
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times)


class _UvicornThread:
    """A real HTTP server on an ephemeral localhost port, run in-thread."""

    def __init__(self, data_dir: str):
        import uvicorn

        from .service import create_app
        config = uvicorn.Config(create_app(data_dir), host="127.0.0.1", port=0,
                                log_level="warning", access_log=False)
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        for _ in range(500):
            if self._server.started:
                break
            time.sleep(0.01)
        else:
            raise ConfigError("benchmark HTTP server failed to start")
        sock = self._server.servers[0].sockets[0]
        host, port = sock.getsockname()[:2]
        return f"http://{host}:{port}"

    def __exit__(self, *exc) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)


class _LocalBackend:
    """In-process stand-in with the same surface the bench needs."""

    def __init__(self):
        self._stores: dict[str, TripleStore] = {}

    def setup(self, name: str, spec: MaskSpec, triples) -> None:
        store = TripleStore(spec=spec)
        store.ingest(triples)
        self._stores[name] = store

    def scan(self, name: str) -> list[Triple]:
        return self._stores[name].scan()

    def correlate(self, name: str, selectors: list[str],
                  threshold: int | None = None) -> list[Triple]:
        store = self._stores[name]
        result = correlate(store.to_array(), selectors)
        if threshold is not None:
            result = threshold_masked(result, threshold)
        return list(result.array.triples())


class _HttpBackend:
    def __init__(self, base_url: str):
        import httpx

        from .service import StoreClient
        self._base_url = base_url
        self._http = httpx.Client(base_url=base_url, timeout=300.0)
        self._clients: dict[str, "StoreClient"] = {}

    def setup(self, name: str, spec: MaskSpec, triples) -> None:
        from .service import StoreClient
        client = StoreClient(self._base_url, name, client=self._http)
        client.create(spec)
        client.ingest(triples)
        self._clients[name] = client

    def scan(self, name: str) -> list[Triple]:
        return self._clients[name].scan()

    def correlate(self, name: str, selectors: list[str],
                  threshold: int | None = None) -> list[Triple]:
        return self._clients[name].correlate(selectors, threshold)

    def close(self) -> None:
        self._http.close()


def _grade(op: str, ratio: float) -> str:
    target = RATIO_TARGETS[op]
    return "pass" if ratio <= target else "warn"


def _prime(backend) -> None:
    """Warm the whole request path so the first graded mode isn't penalized."""
    corpus = synthetic_corpus(500, seed=0)
    backend.setup("bench-prime", MaskSpec(), corpus.triples())
    for _ in range(3):
        backend.correlate("bench-prime", [most_common_column(corpus)])
        backend.scan("bench-prime")


def _bench_det_hash_delta(report: BenchReport, key_sha1: KeyMaterial, size: int,
                          seed: int, reps: int) -> None:
    values = [f"value-{i:08d}" for i in range(min(size, 20_000))]
    key_sha256 = derive_key("bench", key_sha1.salt, det_hash="sha256")

    def run(key: KeyMaterial) -> Callable[[], None]:
        def inner():
            for v in values:
                mask_det(v, key)
        return inner

    t_sha1 = _median_ms(run(key_sha1), reps)
    t_sha256 = _median_ms(run(key_sha256), reps)
    report.add(BenchCell(size, "DET", "det_mask_sha1", t_sha1, 1.0, "info"))
    report.add(BenchCell(size, "DET", "det_mask_sha256", t_sha256,
                         t_sha256 / t_sha1 if t_sha1 else 0.0, "info"))


def run_bench(sizes=DEFAULT_SIZES, modes=DEFAULT_MODES, seed: int = 1,
              reps: int = DEFAULT_REPS, password: str = "bench",
              service_url: str | None = None, local: bool = False,
              threshold: int = 2) -> BenchReport:
    """Run the full grid and return the report (no I/O besides the service)."""
    if reps < 5:
        raise ConfigError("ratios are medians of at least 5 repetitions")
    unknown = [m for m in modes if m not in MODE_SPECS]
    if unknown:
        raise ConfigError(f"unknown bench mode(s) {unknown}; choose from {list(MODE_SPECS)}")
    if "CLR" not in modes:
        modes = ("CLR", *modes)

    key = derive_key(password, b"bench-sa"[:8])
    report = BenchReport(environment={
        "python": platform.python_version(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "reps": reps,
        "seed": seed,
        "transport": "local" if local else "http",
    })

    with tempfile.TemporaryDirectory(prefix="maskdb-bench-") as tmp:
        if local:
            backend = _LocalBackend()
            server_ctx = None
        elif service_url:
            backend = _HttpBackend(service_url)
            server_ctx = None
        else:
            server_ctx = _UvicornThread(tmp)
            backend = _HttpBackend(server_ctx.__enter__())
        try:
            _prime(backend)
            for size in sizes:
                _run_size(report, backend, size, modes, key, seed, reps, threshold)
            _bench_det_hash_delta(report, key, max(sizes), seed, reps)
        finally:
            if isinstance(backend, _HttpBackend):
                backend.close()
            if server_ctx is not None:
                server_ctx.__exit__(None, None, None)
    return report


def _run_size(report: BenchReport, backend, size: int, modes, key: KeyMaterial,
              seed: int, reps: int, threshold: int) -> None:
    corpus = synthetic_corpus(size, seed)
    selector_clear = most_common_column(corpus)
    logger.info("bench size %d: %d triples, selector %r", size, len(corpus), selector_clear)

    # phase 1: mask and ingest every mode's copy of the corpus
    specs: dict[str, MaskSpec] = {}
    sessions: dict[str, dict] = {}
    names: dict[str, str] = {}
    selectors: dict[str, str] = {}
    mask_base = None
    for mode in modes:
        spec = MaskSpec.parse(MODE_SPECS[mode])
        dims = {}
        if spec.col is MaskMode.OPE:
            state = OpeServerState(width=16, insert_timeout=0)
            dims["col"] = OpeSession(LoopbackTransport(state), key)

        t0 = time.perf_counter()
        masked = mask_array(corpus, spec, key, sessions=dims)
        mask_ms = (time.perf_counter() - t0) * 1000.0
        name = f"bench-{size}-{mode.lower()}"
        backend.setup(name, spec, masked.array.triples())

        mask_base = mask_base or mask_ms
        report.add(BenchCell(size, mode, "mask_ingest", mask_ms, mask_ms / mask_base, "info"))

        if spec.col is MaskMode.OPE:
            selector = dims["col"].lookup(selector_clear)
        elif spec.col is MaskMode.DET:
            selector = mask_det(selector_clear, key).payload
        elif spec.col is MaskMode.AUT:
            selector = mask_aut(selector_clear, key).payload
        else:
            selector = selector_clear
        specs[mode], sessions[mode], names[mode], selectors[mode] = spec, dims, name, selector

    # thresholding is a pure kernel over the (small) correlation result;
    # loop it so the measurement rises above timer noise
    results = {
        mode: CorrelationResult(
            AssociativeArray.from_triples(backend.correlate(names[mode], [selectors[mode]])),
            (selectors[mode],))
        for mode in modes
    }

    def run_op(op: str, mode: str):
        if op == "correlate":
            return backend.correlate(names[mode], [selectors[mode]])
        if op == "query_unmask":
            return unmask_triples(backend.scan(names[mode]), specs[mode], key,
                                  sessions=sessions[mode])
        for _ in range(100):
            threshold_masked(results[mode], threshold)

    # phase 2: time ops with reps interleaved across modes, so heap growth,
    # GC pauses and other drift land evenly instead of biasing whichever
    # mode happens to be measured first
    for op in ("correlate", "query_unmask", "threshold"):
        times: dict[str, list[float]] = {mode: [] for mode in modes}
        for mode in modes:
            run_op(op, mode)  # warmup
        for _ in range(reps):
            for mode in modes:
                t0 = time.perf_counter()
                run_op(op, mode)
                times[mode].append((time.perf_counter() - t0) * 1000.0)
        base = statistics.median(times["CLR"])
        for mode in modes:
            median = statistics.median(times[mode])
            if mode == "CLR":
                report.add(BenchCell(size, mode, op, median, 1.0, "baseline"))
            else:
                ratio = median / base if base else 0.0
                report.add(BenchCell(size, mode, op, median, ratio, _grade(op, ratio)))
