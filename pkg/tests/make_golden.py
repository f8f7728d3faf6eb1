"""Regenerates the end-to-end golden fixture and its expected report.

Every number in ``tests/data/golden_report.json`` is recomputed here as
straight-line arithmetic: the hash-derived mock responses, the stored
(rounded, float32-normalized) cache forms, recall and synthesis pool
assembly, similarity ranking with the hash tie-break, all three text
scorers, the vision scorer, weighted fusion, and the aggregates. None
of the modules under test are imported, only the shared canonical
serialization layer, so the end-to-end byte comparison would only pass
by accident if the pipeline and this file made the same mistake twice.

The run configuration frozen below must match the manifest built in
tests/test_acceptance.py.

Run from the repository root:

    python3 tests/make_golden.py
"""
from __future__ import annotations

import hashlib
import math
import re
from pathlib import Path

import numpy as np

from mindseye import jsonutil

DATA_DIR = Path(__file__).resolve().parent / "data"

MOCK_SEED = 7
RUN_SEED = 42
POOL_RECALL = 3
POOL_SYNTHESIS = 3
TOP_K = 2
IMAGE_BYTES = 96
CLIP_DIM = 16
SBERT_DIM = 24
PARAMS = {
    "mock-lm": 1_300_000_000,
    "mock-nli": 355_000_000,
    "mock-embed": 110_000_000,
    "mock-clip": 150_000_000,
}

# (query, candidate surfaces, gold index). A few surfaces repeat across
# instances ("honey", "ice", "a mirror") so the run exercises imagined
# text deduplication.
FIXTURE = (
    ("which tool cuts wood",
     ("a saw", "a spoon", "a pillow", "a lamp"), 0),
    ("what do bees make",
     ("wax candles", "honey", "bread", "paper"), 1),
    ("what melts in the sun",
     ("granite", "steel", "ice", "glass"), 2),
    ("which one flies",
     ("a brick", "an anchor", "a boot", "a kite"), 3),
    ("which animal lives in water",
     ("a fish", "a camel", "an eagle", "a goat"), 0),
    ("which is a fruit",
     ("a carrot", "an apple", "a potato", "an onion"), 1),
    ("what reflects light",
     ("a sponge", "a towel", "a mirror", "a blanket"), 2),
    ("which gas do plants absorb",
     ("oxygen", "helium", "neon", "carbon dioxide"), 3),
    ("what conducts electricity",
     ("copper wire", "dry wood", "rubber", "glass rods"), 0),
    ("which season is coldest",
     ("summer", "winter", "spring", "autumn"), 1),
    ("what pulls objects to the ground",
     ("friction", "magnetism", "gravity", "inertia"), 2),
    ("which organ pumps blood",
     ("the liver", "the lungs", "the brain", "the heart"), 3),
    ("which planet is closest to the sun",
     ("mercury", "venus", "mars", "jupiter"), 0),
    ("what turns into a frog",
     ("a caterpillar", "a tadpole", "a larva", "a chick"), 1),
    ("what forms when water vapor cools",
     ("ice", "steam", "clouds", "smoke"), 2),
    ("which material is magnetic",
     ("plastic", "cotton", "ceramic", "iron"), 3),
    ("which device measures temperature",
     ("a thermometer", "a barometer", "a mirror", "a compass"), 0),
    ("what do chickens hatch from",
     ("seeds", "eggs", "spores", "bulbs"), 1),
    ("which star lights the day sky",
     ("the moon", "polaris", "the sun", "sirius"), 2),
    ("what is stored in a honeycomb",
     ("honey", "pollen dust", "rainwater", "sand"), 0),
)

_TOKEN_RE = re.compile(r"\S+")


# -- hash-derived mock responses ----------------------------------------


def _digest(parts: list) -> bytes:
    return hashlib.sha256(jsonutil.canonical_bytes(parts)).digest()


def _uniform(parts: list) -> float:
    return int.from_bytes(_digest(parts)[:8], "little") / 2.0 ** 64


def _byte_stream(parts: list, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(_digest(parts + [counter]))
        counter += 1
    return bytes(out[:length])


def _mock_key(backend_id: str, label: str, *parts) -> list:
    return [MOCK_SEED, backend_id, label, *parts]


def _raw_unit_vector(backend_id: str, label: str, content_key: str,
                     dim: int) -> list[float]:
    values: list[float] = []
    chunk = 0
    while len(values) < dim:
        raw = _digest(_mock_key(backend_id, label, content_key, chunk))
        for offset in range(0, 32, 8):
            if len(values) == dim:
                break
            u = int.from_bytes(raw[offset:offset + 8], "little") / 2.0 ** 64
            values.append(2.0 * u - 1.0)
        chunk += 1
    norm = math.sqrt(sum(v * v for v in values))
    return [v / norm for v in values]


def _stored_embedding(raw: list[float]) -> list[float]:
    """The embedding-cache stored form: unit float64, downcast to float32."""
    arr = np.asarray(raw, dtype=np.float64)
    row = (arr / float(np.linalg.norm(arr))).astype(np.float32)
    return [float(v) for v in row]


_EMBED_MEMO: dict[tuple[str, str, str], list[float]] = {}


def _embedding(backend_id: str, label: str, content_key: str,
               dim: int) -> list[float]:
    memo_key = (backend_id, label, content_key)
    if memo_key not in _EMBED_MEMO:
        _EMBED_MEMO[memo_key] = _stored_embedding(
            _raw_unit_vector(backend_id, label, content_key, dim))
    return _EMBED_MEMO[memo_key]


def clip_text(text: str) -> list[float]:
    return _embedding("mock-clip", "embed_text", jsonutil.text_hash(text), CLIP_DIM)


def clip_image(content_hash: str) -> list[float]:
    return _embedding("mock-clip", "embed_image", content_hash, CLIP_DIM)


def sbert_text(text: str) -> list[float]:
    return _embedding("mock-embed", "embed_text", jsonutil.text_hash(text), SBERT_DIM)


# -- shared arithmetic ---------------------------------------------------


def cosine(a: list[float], b: list[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(y * y for y in b))
    return dot / (norm_a * norm_b)


def softmax(values: list[float]) -> list[float]:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def argmax_low(values: list[float]) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def rounded(values: list[float]) -> list[float]:
    return [jsonutil.round_float(v) for v in values]


# -- imagination ----------------------------------------------------------


def imagine(text: str) -> list[tuple[str, str]]:
    """Selected (content_hash, source) pairs for one text, ranked."""
    pool: list[tuple[str, str]] = []
    seen: set[str] = set()
    for i in range(POOL_RECALL):
        token = _digest(_mock_key("mock-search", "search",
                                  jsonutil.text_hash(text), i)).hex()
        data = _byte_stream(_mock_key("mock-search", "image_bytes", token),
                            IMAGE_BYTES)
        content_hash = hashlib.sha256(data).hexdigest()
        if content_hash in seen:
            continue
        seen.add(content_hash)
        pool.append((content_hash, "recall"))
    seed = jsonutil.derive_seed(RUN_SEED, "synthesis", text)
    for i in range(POOL_SYNTHESIS):
        data = _byte_stream(_mock_key("mock-gen", "generate", seed,
                                      jsonutil.text_hash(text), i),
                            IMAGE_BYTES)
        content_hash = hashlib.sha256(data).hexdigest()
        if content_hash in seen:
            continue
        seen.add(content_hash)
        pool.append((content_hash, "synthesis"))
    text_embedding = clip_text(text)
    scored = [(cosine(text_embedding, clip_image(h)), h, source)
              for h, source in pool]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [(h, source) for _, h, source in scored[:TOP_K]]


# -- scoring streams ------------------------------------------------------


def prompt_probs(query: str, surfaces: tuple[str, ...]) -> list[float]:
    scores = []
    for surface in surfaces:
        text = f"Question: {query} The answer is {surface}."
        start = len("Question: ") + len(query) + len(" The answer is ")
        end = start + len(surface)
        spanned = [m.group(0) for m in _TOKEN_RE.finditer(text)
                   if m.start() < end and m.end() > start]
        logprobs = [jsonutil.round_float(
                        -(0.1 + 4.9 * _uniform(_mock_key("mock-lm", "logprob", tok))))
                    for tok in spanned]
        mean_nll = -sum(logprobs) / len(logprobs)
        scores.append(1.0 / max(1e-6, mean_nll))
    return rounded(softmax(scores))


def nli_probs(query: str, surfaces: tuple[str, ...]) -> list[float]:
    out = []
    for surface in surfaces:
        hypothesis = f"The answer is {surface}."
        raw = _uniform(_mock_key("mock-nli", "nli", jsonutil.text_hash(query),
                                 jsonutil.text_hash(hypothesis)))
        out.append(jsonutil.round_float(raw))
    return out


def embed_probs(query: str, surfaces: tuple[str, ...]) -> list[float]:
    query_embedding = sbert_text(query)
    scores = [cosine(query_embedding, sbert_text(surface)) for surface in surfaces]
    return rounded(softmax(scores))


def vision_probs(query: str, surfaces: tuple[str, ...],
                 selections: dict[str, list[tuple[str, str]]]) -> list[float]:
    query_embedding = clip_text(query)
    scores = []
    for surface in surfaces:
        images = [clip_image(h) for h, _ in selections[surface]]
        total = sum(cosine(query_embedding, image) for image in images)
        scores.append(total / len(images))
    return rounded(softmax(scores))


def ensemble_weight(lm_params: int) -> float:
    ratio = PARAMS["mock-clip"] / lm_params
    return 1.0 / (1.0 + math.exp(-ratio))


# -- report assembly -------------------------------------------------------


def build_report() -> tuple[list[dict], dict]:
    instance_dicts = [
        {
            "schema": "zlavi/1",
            "id": f"sciq.golden.{i:02d}",
            "task_kind": "science_qa",
            "query_text": query,
            "candidates": [
                {"surface": s, "imagination_text": s} for s in surfaces
            ],
            "gold": gold,
            "gold_distribution": None,
            "metadata": {},
        }
        for i, (query, surfaces, gold) in enumerate(FIXTURE)
    ]
    instances_hash = jsonutil.stable_hash(instance_dicts)

    unique_texts: list[str] = []
    for _, surfaces, _ in FIXTURE:
        for surface in surfaces:
            if surface not in unique_texts:
                unique_texts.append(surface)
    selections = {text: imagine(text) for text in unique_texts}
    for selected in selections.values():
        assert len(selected) == TOP_K

    weights = {lm: ensemble_weight(p) for lm, p in PARAMS.items()
               if lm != "mock-clip"}
    normalized = {"mock-lm": True, "mock-nli": False, "mock-embed": True,
                  "mock-clip": True}

    rows = []
    for inst, (query, surfaces, gold) in zip(instance_dicts, FIXTURE):
        streams = {
            "mock-lm": prompt_probs(query, surfaces),
            "mock-nli": nli_probs(query, surfaces),
            "mock-embed": embed_probs(query, surfaces),
            "mock-clip": vision_probs(query, surfaces, selections),
        }
        for lm, weight in weights.items():
            fused = [(1.0 - weight) * a + weight * b
                     for a, b in zip(streams[lm], streams["mock-clip"])]
            streams[f"ens:{lm}"] = rounded(fused)
        outputs = {}
        for stream_id, probs in streams.items():
            base = stream_id.removeprefix("ens:")
            outputs[stream_id] = {
                "probs": probs,
                "prediction": argmax_low(probs),
                "normalized": normalized[base],
            }
        rows.append({
            "instance_id": inst["id"],
            "gold": gold,
            "group": None,
            "gold_distribution": None,
            "outputs": outputs,
        })

    aggregates = {}
    for stream_id in sorted(rows[0]["outputs"]):
        correct = sum(1 for row in rows
                      if row["outputs"][stream_id]["prediction"] == row["gold"])
        aggregates[stream_id] = {"accuracy": 100.0 * correct / len(rows)}

    source_counts = {"recall": 0, "synthesis": 0}
    for selected in selections.values():
        for _, source in selected:
            source_counts[source] += 1
    total_selected = sum(source_counts.values())

    config = {
        "dataset": {"name": "sciq", "split": "test", "expected_count": None},
        "language_models": [
            {"model_id": "mock-lm", "strategy": "prompt"},
            {"model_id": "mock-nli", "strategy": "nli"},
            {"model_id": "mock-embed", "strategy": "embedding"},
        ],
        "vision_model": "mock-clip",
        "imagination": {"sources": ["recall", "synthesis"],
                        "pool_recall": POOL_RECALL,
                        "pool_synthesis": POOL_SYNTHESIS,
                        "top_k": TOP_K},
        "search_backend": "mock-search",
        "generate_backend": "mock-gen",
        "ensemble": {"mode": "sigmoid_param_ratio", "fixed_weight": 0.5},
        "seed": RUN_SEED,
        "direction": None,
        "renormalize_nli": False,
    }
    report = {
        "schema": "zlavi/1",
        "run_id": jsonutil.stable_hash({"manifest": config,
                                        "instances": instances_hash})[:16],
        "task_kind": "science_qa",
        "dataset": {"name": "sciq", "split": "test",
                    "instances": len(instance_dicts),
                    "content_hash": instances_hash},
        "config": config,
        "model_params": dict(PARAMS),
        "ensemble_weights": {lm: jsonutil.round_float(w)
                             for lm, w in weights.items()},
        "imagination_stats": {
            "recall_fraction": source_counts["recall"] / total_selected,
            "synthesis_fraction": source_counts["synthesis"] / total_selected,
        },
        "rows": rows,
        "aggregates": aggregates,
    }
    return instance_dicts, report


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    instance_dicts, report = build_report()
    instances_path = DATA_DIR / "golden_instances.jsonl"
    with open(instances_path, "w", encoding="utf-8") as fh:
        for obj in instance_dicts:
            fh.write(jsonutil.canonical_dumps(obj))
            fh.write("\n")
    report_path = DATA_DIR / "golden_report.json"
    report_path.write_text(jsonutil.canonical_dumps(report, indent=2) + "\n",
                           "utf-8")
    print(f"wrote {instances_path} ({len(instance_dicts)} instances)")
    print(f"wrote {report_path}")
    print(f"run_id: {report['run_id']}")
    print(f"ensemble weights: {report['ensemble_weights']}")
    print(f"imagination stats: {report['imagination_stats']}")
    for stream_id, entry in report["aggregates"].items():
        print(f"  {stream_id}: accuracy {entry['accuracy']}")


if __name__ == "__main__":
    main()
