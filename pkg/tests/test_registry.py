import json
import os
import signal
import subprocess
import sys
import textwrap
import threading
import time
import urllib.request
from dataclasses import replace

import numpy as np
import pytest

from gridseer.bundle import ModelBundle, bundle_digest, make_manifest, pack
from gridseer.catalog import QuestionId, resolve_question
from gridseer.errors import HashMismatch, InvalidBundle, NotFound, StorageFull
from gridseer.models import init_mlp, normalize_fit
from gridseer.registry import RegistryClient, RegistryServer, RegistryStore


def make_blob(question=QuestionId.NODE_POWER, publisher="lab-a", seed=0, hidden=(4,)):
    spec = resolve_question(question)
    params = init_mlp((len(spec.features), *hidden, 1), seed=seed)
    stats = normalize_fit(np.vstack([np.zeros(len(spec.columns)), np.ones(len(spec.columns))]), spec.columns)
    manifest = make_manifest(
        spec, params, created_at="2021-01-01T00:00:00Z", publisher=publisher, train_fingerprint=f"seed={seed}", interval=60
    )
    return pack(ModelBundle(manifest, stats, params))


@pytest.fixture
def client(registry):
    return RegistryClient(registry.url)


# ---------------------------------------------------------------------------
# store


def test_store_publish_fetch(tmp_path):
    store = RegistryStore(tmp_path)
    blob = make_blob()
    entry, created = store.publish(blob)
    assert created and entry.version == 1 and entry.size_bytes == len(blob)
    assert store.fetch(entry.bundle_id) == blob
    assert entry.bundle_id == bundle_digest(blob)


def test_store_reload_keeps_entries(tmp_path):
    store = RegistryStore(tmp_path)
    ids = [store.publish(make_blob(seed=s))[0].bundle_id for s in range(3)]
    again = RegistryStore(tmp_path)
    assert [e.bundle_id for e in again.list()] == [e.bundle_id for e in store.list()]
    assert sorted(ids) == sorted(e.bundle_id for e in again.list())


def test_store_quota(tmp_path):
    blob = make_blob()
    store = RegistryStore(tmp_path, max_bytes=len(blob) + 10)
    store.publish(blob)
    with pytest.raises(StorageFull):
        store.publish(make_blob(seed=1))
    assert len(store.list()) == 1


def test_store_recovers_from_torn_state(tmp_path):
    store = RegistryStore(tmp_path)
    good, _ = store.publish(make_blob(seed=0))
    lost, _ = store.publish(make_blob(seed=1))
    bad, _ = store.publish(make_blob(seed=2))
    # simulate the aftermath of crashes at different points of a publish
    (store.blobs / f"{lost.bundle_id}.mdl").unlink()
    path = store.blobs / f"{bad.bundle_id}.mdl"
    path.write_bytes(path.read_bytes()[:-5])
    (store.blobs / ".incoming-abc").write_bytes(b"partial")
    with open(store.index, "ab") as fh:
        fh.write(b'{"bundle_id": "ab')
    reopened = RegistryStore(tmp_path)
    assert [e.bundle_id for e in reopened.list()] == [good.bundle_id]
    assert bundle_digest(reopened.fetch(good.bundle_id)) == good.bundle_id


CRASH_WORKER = textwrap.dedent(
    """
    import sys
    sys.path[:0] = [sys.argv[2]]
    from test_registry import make_blob
    from gridseer.registry import RegistryStore
    store = RegistryStore(sys.argv[1])
    print("ready", flush=True)
    for seed in range(10_000):
        store.publish(make_blob(seed=seed, hidden=(64, 64)))
    """
)


@pytest.mark.parametrize("delay", [0.05, 0.2, 0.5])
def test_killed_publisher_leaves_consistent_store(tmp_path, delay):
    here = os.path.dirname(__file__)
    proc = subprocess.Popen([sys.executable, "-c", CRASH_WORKER, str(tmp_path), here], stdout=subprocess.PIPE)
    assert proc.stdout.readline().strip() == b"ready"
    time.sleep(delay)
    proc.send_signal(signal.SIGKILL)
    proc.wait()
    store = RegistryStore(tmp_path)
    for entry in store.list():
        assert bundle_digest(store.fetch(entry.bundle_id)) == entry.bundle_id


# ---------------------------------------------------------------------------
# HTTP service


def test_health(registry, client):
    assert client.health()
    with urllib.request.urlopen(registry.url + "/v1/health") as resp:
        assert resp.status == 200


def test_publish_then_fetch_identical(client):
    blob = make_blob()
    entry = client.publish(blob)
    assert client.fetch(entry.bundle_id) == blob


def test_publish_twice_is_idempotent(registry, client):
    blob = make_blob()
    a = client.publish(blob)
    req = urllib.request.Request(registry.url + "/v1/bundles", data=blob, method="POST")
    with urllib.request.urlopen(req) as resp:
        assert resp.status == 200
        b = json.loads(resp.read())
    assert b["bundle_id"] == a.bundle_id and b["version"] == a.version
    assert len(client.list()) == 1


def test_first_publish_is_201(registry):
    req = urllib.request.Request(registry.url + "/v1/bundles", data=make_blob(), method="POST")
    with urllib.request.urlopen(req) as resp:
        assert resp.status == 201


def test_publish_corrupted(client):
    blob = bytearray(make_blob())
    blob[-1] ^= 0xFF
    with pytest.raises(InvalidBundle):
        client.publish(bytes(blob))
    with pytest.raises(InvalidBundle):
        client.publish(b"not a bundle")


def test_list_empty_and_filter(client):
    assert client.list() == []
    client.publish(make_blob(QuestionId.NODE_POWER))
    t = client.publish(make_blob(QuestionId.TEMPERATURE))
    client.publish(make_blob(QuestionId.NETWORK_ENERGY))
    assert [e.bundle_id for e in client.list("Temperature")] == [t.bundle_id]


def test_list_order_against_sort(client):
    rng = np.random.default_rng(3)
    questions = [QuestionId.NODE_POWER, QuestionId.TEMPERATURE, QuestionId.NETWORK_ENERGY]
    published = []
    for seed in range(12):
        q = questions[int(rng.integers(3))]
        pub = ["zeta", "alpha", "mid"][int(rng.integers(3))]
        published.append(client.publish(make_blob(q, pub, seed=seed)))
    got = client.list()
    expected = sorted(published, key=lambda e: (e.question, e.publisher, e.version))
    assert got == expected
    for (q, p) in {(e.question, e.publisher) for e in published}:
        versions = [e.version for e in got if (e.question, e.publisher) == (q, p)]
        assert versions == list(range(1, len(versions) + 1))


def test_fetch_unknown(client):
    with pytest.raises(NotFound):
        client.fetch("0" * 64)
    with pytest.raises(NotFound):
        client.fetch("nothex")
    with pytest.raises(NotFound):
        client.fetch_manifest("f" * 64)


def test_manifest_fetch_is_small(client):
    blob = make_blob(hidden=(384, 384))
    assert len(blob) >= 1 << 20
    entry = client.publish(blob)
    raw = urllib.request.urlopen(f"{client.url}/v1/bundles/{entry.bundle_id}/manifest").read()
    assert len(raw) < 2048 < len(blob)
    manifest = client.fetch_manifest(entry.bundle_id)
    assert manifest.bundle_id == entry.bundle_id and manifest.network == {"layer_sizes": [2, 384, 384, 1]}


def test_client_detects_transport_corruption(tmp_path):
    store = RegistryStore(tmp_path)
    entry, _ = store.publish(make_blob())
    server = RegistryServer(store)
    server.start_background()
    try:
        # corrupt the blob behind the store's back, as a faulty disk or proxy would
        path = store.blobs / f"{entry.bundle_id}.mdl"
        data = bytearray(path.read_bytes())
        data[-1] ^= 1
        path.write_bytes(bytes(data))
        with pytest.raises(HashMismatch):
            RegistryClient(server.url).fetch(entry.bundle_id)
    finally:
        server.shutdown()
        server.server_close()


def test_storage_full_over_http(tmp_path):
    blob = make_blob()
    server = RegistryServer(RegistryStore(tmp_path, max_bytes=len(blob) - 1))
    server.start_background()
    try:
        with pytest.raises(StorageFull):
            RegistryClient(server.url).publish(blob)
    finally:
        server.shutdown()
        server.server_close()


def test_concurrent_publishes(client):
    blobs = [make_blob(seed=s, publisher="same") for s in range(8)]
    results = []
    threads = [threading.Thread(target=lambda b=b: results.append(client.publish(b))) for b in blobs + blobs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    entries = client.list()
    assert len(entries) == 8
    assert sorted(e.version for e in entries) == list(range(1, 9))
    assert {e.bundle_id for e in results} == {e.bundle_id for e in entries}


def test_entry_reflects_manifest(client):
    blob = make_blob(QuestionId.TEMPERATURE, "site-x")
    e = client.publish(blob)
    assert (e.question, e.publisher, e.created_at) == ("Temperature", "site-x", "2021-01-01T00:00:00Z")
    assert replace(e, version=e.version) == e
