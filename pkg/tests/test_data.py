import json
import math
import warnings
from collections import Counter

import numpy as np
import pytest

from hcsa import SyntheticTaskConfig
from hcsa.data import (
    ANSWER_VOCAB,
    EVENT_NAMES,
    QUESTION_VOCAB,
    _HEADER,
    downsample,
    event_prototypes,
    generate_synthetic_dataset,
    load_dataset,
    read_features,
    save_dataset,
    write_features,
    write_references,
)
from hcsa.errors import ConfigError, CorruptFileError, ShapeMismatchError, VersionMismatchError


def test_noiseless_two_event_sample():
    cfg = SyntheticTaskConfig(seq_len=20, d_video=6, num_event_types=2, events_per_sequence=2, noise=0.0)
    s = generate_synthetic_dataset(cfg, 1)[0]
    protos = event_prototypes(cfg)
    words = QUESTION_VOCAB.decode(s.question)
    assert words[:3] == ["what", "happens", "after"]
    asked = EVENT_NAMES.index(words[3])
    answer = EVENT_NAMES.index(ANSWER_VOCAB.decode(s.answer)[0])
    assert {asked, answer} == {0, 1}
    # the asked-about event is planted before the answer event
    def first_row(e):
        hits = [i for i, row in enumerate(s.features) if np.allclose(row, protos[e].astype(np.float32))]
        return hits[0]
    assert first_row(asked) < first_row(answer)
    assert np.count_nonzero(np.abs(s.features).sum(axis=1)) <= 16


def test_generation_is_deterministic():
    cfg = SyntheticTaskConfig()
    a, b = generate_synthetic_dataset(cfg, 5), generate_synthetic_dataset(cfg, 5)
    assert a == b
    assert all(x.features.tobytes() == y.features.tobytes() for x, y in zip(a, b))
    assert generate_synthetic_dataset(SyntheticTaskConfig(seed=1), 1)[0] != a[0]


def test_offsets_give_the_same_samples():
    cfg = SyntheticTaskConfig()
    assert generate_synthetic_dataset(cfg, 5)[3:] == generate_synthetic_dataset(cfg, 2, offset=3)


def test_answer_balance():
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 1000)
    counts = Counter(s.answer[0] for s in samples)
    assert len(counts) == 5
    p = 1 / 5
    sigma = math.sqrt(1000 * p * (1 - p))
    for c in counts.values():
        assert abs(c - 200) <= 3 * sigma


def test_every_event_appears_once_when_all_types_are_used():
    cfg = SyntheticTaskConfig(noise=0.0)
    protos = event_prototypes(cfg).astype(np.float32)
    s = generate_synthetic_dataset(cfg, 1)[0]
    for e in range(5):
        assert any(np.allclose(row, protos[e]) for row in s.features)


def test_impossible_placement():
    with pytest.raises(ConfigError):
        SyntheticTaskConfig(seq_len=10, events_per_sequence=5, max_span=8)
    with pytest.raises(ConfigError):
        SyntheticTaskConfig(num_event_types=1)


@pytest.mark.parametrize("n, expected", [(512, None), (1024, list(range(0, 1024, 2))), (700, None)])
def test_downsample(n, expected):
    x = np.arange(n, dtype=float)[:, None]
    out = downsample(x, 512)
    assert out.shape == (min(n, 512), 1) and out[0, 0] == 0
    if n == 512:
        assert out is x
    if expected is not None:
        assert out[:, 0].tolist() == expected
    if n == 700:
        assert out[:, 0].tolist() == [(i * 700) // 512 for i in range(512)]


def test_feature_file_layout(tmp_path):
    x = np.array([[1.5, -2.0, 3.25]], dtype=np.float64)
    write_features(tmp_path / "a.hcsf", x)
    raw = (tmp_path / "a.hcsf").read_bytes()
    assert raw[:4] == b"HCSF" and _HEADER.unpack_from(raw)[1:] == (1, 1, 3)
    assert np.frombuffer(raw[16:], "<f4").tolist() == [1.5, -2.0, 3.25]
    assert np.array_equal(read_features(tmp_path / "a.hcsf"), x)


def test_dataset_roundtrip(tmp_path):
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 10)
    save_dataset(samples, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert loaded == samples
    assert all(a.features.tobytes() == b.features.tobytes() for a, b in zip(samples, loaded))


def test_truncated_feature_file(tmp_path):
    write_features(tmp_path / "a.hcsf", np.ones((4, 3)))
    raw = (tmp_path / "a.hcsf").read_bytes()
    (tmp_path / "a.hcsf").write_bytes(raw[:-5])
    with pytest.raises(CorruptFileError):
        read_features(tmp_path / "a.hcsf")
    (tmp_path / "a.hcsf").write_bytes(raw[:7])
    with pytest.raises(CorruptFileError):
        read_features(tmp_path / "a.hcsf")


def test_bad_magic_version_and_size(tmp_path):
    path = tmp_path / "a.hcsf"
    write_features(path, np.ones((2, 2)))
    raw = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(CorruptFileError):
        read_features(path)
    raw[4] = 2
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_features(path)
    raw[4] = 1
    path.write_bytes(bytes(raw) + b"\0\0\0\0")
    with pytest.raises(ShapeMismatchError):
        read_features(path)


def test_manifest_unknown_fields_warn(tmp_path):
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 2)
    root = save_dataset(samples, tmp_path / "ds")
    lines = (root / "manifest.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    rec["camera"] = "front"
    lines[0] = json.dumps(rec)
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.warns(UserWarning, match="camera"):
        loaded = load_dataset(root)
    assert loaded == samples


def test_mixed_feature_widths_rejected(tmp_path):
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 2)
    root = save_dataset(samples, tmp_path / "ds")
    write_features(root / "features" / f"{samples[1].id}.hcsf", np.ones((4, 7)))
    with pytest.raises(ShapeMismatchError):
        load_dataset(root)


def test_references_file(tmp_path):
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 3)
    write_references(samples, tmp_path / "refs.jsonl")
    recs = [json.loads(l) for l in (tmp_path / "refs.jsonl").read_text().splitlines()]
    assert [r["id"] for r in recs] == [s.id for s in samples]
    assert recs[0]["answer"] in EVENT_NAMES and recs[0]["type"] == "synthetic"


def test_missing_dataset_dir(tmp_path):
    with warnings.catch_warnings(), pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope")
