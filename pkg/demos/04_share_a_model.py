"""
Sharing a model, not the data
=============================

A publisher trains a temperature model and pushes the bundle to a local
registry. A subscriber lists, pulls and runs it against telemetry that never
leaves their machine.
"""

import json
import tempfile
from pathlib import Path

from gridseer.bundle import pack, run_bundle, unpack
from gridseer.catalog import QuestionId, resolve_question
from gridseer.pipeline import train_question
from gridseer.registry import RegistryClient, RegistryServer, RegistryStore
from gridseer.synth import SynthConfig, gen_node, write_synth
from gridseer.telemetry import build_series

work = Path(tempfile.mkdtemp(prefix="gridseer-demo-"))

server = RegistryServer(RegistryStore(work / "registry"))
server.start_background()
client = RegistryClient(server.url)
print("registry at", server.url)

# publisher side
records, _ = gen_node(SynthConfig(duration=3 * 86400, seed=10))
spec = resolve_question(QuestionId.TEMPERATURE)
outcome = train_question(spec, build_series(records, "n0", 60), publisher="site-a")
blob = pack(outcome.bundle)
entry = client.publish(blob)
print(f"published {entry.bundle_id[:12]} v{entry.version}, {entry.size_bytes} bytes")
print("fingerprint:", outcome.bundle.manifest.train_fingerprint[:80], "...")

# subscriber side
for e in client.list("Temperature"):
    print("available:", e.bundle_id[:12], e.publisher, e.created_at)
manifest = client.fetch_manifest(entry.bundle_id)
print("inputs:", manifest.input_columns, "->", manifest.target_column)
bundle = unpack(client.fetch(entry.bundle_id))

write_synth(SynthConfig(duration=86400, seed=99), work / "mine")
report = run_bundle(bundle, work / "mine", work / "results")
print(report.rows_read, "rows scored")
print((work / "results" / "predictions.csv").read_text().splitlines()[:3])
print(json.loads((work / "results" / "metrics.json").read_text()))

# a flipped bit anywhere is caught before the model is used
bad = bytearray(blob)
bad[len(bad) // 2] ^= 1
try:
    unpack(bytes(bad))
except Exception as exc:
    print("tampered bundle:", type(exc).__name__)

server.shutdown()
