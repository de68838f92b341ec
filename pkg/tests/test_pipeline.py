import json

import numpy as np
import pytest

from synthsusp.phantom import PhantomSpec, candidate_lattice, generate_cohort
from synthsusp.pipeline import (PipelineConfig, infer_cohort, load_manifest_records, load_susp, save_susp,
                                write_cohort)
from synthsusp.suspicion import SuspiciousnessMap


@pytest.fixture(scope="module")
def small():
    coll = candidate_lattice()
    cases = generate_cohort(PhantomSpec(seed=40, shape=(80, 80)), 2, 2, coll)
    return cases, coll


@pytest.mark.parametrize("kw", [{"tol": 0}, {"workers": 0}, {"distance": "l2"}, {"method": "unet"},
                                {"method": "external"}, {"exchange_dir": "/no/such/dir"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PipelineConfig(**kw)


def test_susp_round_trip(tmp_path, rng):
    valid = rng.random((6, 7)) > 0.5
    values = np.where(valid, rng.random((6, 7)), 0.0).astype(np.float32).astype(np.float64)
    susp = SuspiciousnessMap(values, valid, (0.5, 0.5), (1.0, 2.0), (3.0, 4.0))
    save_susp(susp, tmp_path / "s.sgrid")
    back = load_susp(tmp_path / "s.sgrid")
    assert np.array_equal(back.values, values) and np.array_equal(back.valid, valid)
    assert (back.spacing, back.origin, back.center) == (susp.spacing, susp.origin, susp.center)


def test_susp_without_sidecar_is_all_valid(tmp_path):
    susp = SuspiciousnessMap(np.ones((2, 2)), np.ones((2, 2), bool), (1.0, 1.0))
    save_susp(susp, tmp_path / "s.sgrid")
    (tmp_path / "s.json").unlink()
    assert load_susp(tmp_path / "s.sgrid").valid.all()


def test_process_pool_matches_serial(small):
    cases, coll = small
    serial = infer_cohort(cases, coll, PipelineConfig())
    pooled = infer_cohort(cases, coll, PipelineConfig(workers=2))
    for a, b in zip(serial, pooled):
        for k in a:
            assert np.array_equal(a[k].values, b[k].values)


def test_manifest_round_trip(tmp_path, small):
    cases, coll = small
    manifest = write_cohort(cases, coll, tmp_path)
    maps = infer_cohort(cases, coll, PipelineConfig(), ["adc-incr"])
    entries = json.loads(manifest.read_text())
    for entry, m in zip(entries, maps):
        save_susp(m["adc-incr"], tmp_path / entry["susp_path"])
    records = load_manifest_records(manifest)
    assert [r.label for r in records] == [c.label for c in cases]
    for rec, case in zip(records, cases):
        assert all(np.array_equal(a.bits, b.bits) for a, b in zip(rec.truth_rois, case.truth_rois))
    assert entries[0]["generator"] == "numpy.random.PCG64"
