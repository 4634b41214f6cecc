from __future__ import annotations

import numpy as np
import pytest

from artifact.memgap import (DESCRIPTOR_COLUMNS, RESULT_COLUMNS, GapConfig, PairDescriptor,
                             gap_from_descriptors, gap_sweep, read_descriptors, write_results)
from artifact.io import read_csv

CFG = GapConfig(N=30, P=900, M=300, t=0.01, taus=(1e-2, 1e5, 80), seed=1)
DESC = PairDescriptor("p", 0.5, 1.0, 0.25, 1.0, 0.0)


def test_descriptor_validation():
    for bad in (dict(ref_variance=0), dict(partner_norm=-1), dict(cosine=1.5),
                dict(b_partner=1.0), dict(ref_norm=float("nan"))):
        kw = dict(pair_id="x", ref_variance=1, ref_norm=1, partner_variance=1, partner_norm=1, cosine=0)
        kw.update(bad)
        with pytest.raises(ValueError):
            PairDescriptor(**kw)


def test_descriptor_spec():
    d = PairDescriptor("x", 0.5, 2.0, 0.25, 1.5, 0.3, 0.4)
    s = d.to_spec(20)
    np.testing.assert_allclose(s.centroid_gram, [[4.0, 0.9], [0.9, 2.25]])
    assert s.weights == pytest.approx((0.6, 0.4)) and s.variances == (0.5, 0.25)
    assert d.variance_ratio == 2.0
    sw = d.swapped()
    assert sw.swapped() == d and sw.b_partner == pytest.approx(0.6)


def test_config_validation():
    with pytest.raises(ValueError):
        GapConfig(t=0)
    with pytest.raises(ValueError):
        GapConfig(taus=(1.0, 0.5, 10))
    assert GapConfig().tau_grid().size == 300


def test_gap_signs_and_antisymmetry():
    r = gap_from_descriptors(DESC, CFG, 1.0)
    s = gap_from_descriptors(DESC.swapped(), CFG, 1.0)
    assert not r.flags and not s.flags
    # the higher-variance reference memorizes first
    assert r.gap < 0 and s.gap > 0
    assert r.gap == pytest.approx(r.tau_m_ref - r.tau_m_partner)
    assert abs(r.gap + s.gap) <= 0.2 * abs(r.gap)


def test_identical_inputs_identical_outputs():
    a = gap_from_descriptors(DESC, CFG, 1.0)
    b = gap_from_descriptors(DESC, CFG, 1.0)
    assert a == b


def test_threshold_rules():
    with pytest.raises(ValueError):
        gap_from_descriptors(DESC, CFG, 0.9)
    r = gap_from_descriptors(DESC, CFG, 50.0)
    assert r.gap is None and len(r.flags) == 2


def test_sweep_product_and_io(tmp_path):
    res = gap_sweep([DESC], thresholds=(1.0, 1.1), b_grid=(0.4, 0.6), config=CFG)
    assert [(r.b_partner, r.threshold) for r in res] == [(0.4, 1.0), (0.4, 1.1), (0.6, 1.0), (0.6, 1.1)]
    out = tmp_path / "r.csv"
    write_results(out, res)
    cols = read_csv(out)
    assert tuple(cols) == RESULT_COLUMNS
    np.testing.assert_allclose(cols["gap"], [r.gap for r in res])


def test_read_descriptors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(",".join(DESCRIPTOR_COLUMNS) + "\na,0.5,1,0.25,1,0\nb,1,2,1,1,-0.5\n")
    ds = read_descriptors(p)
    assert [d.pair_id for d in ds] == ["a", "b"] and ds[1].cosine == -0.5
    (tmp_path / "bad.csv").write_text("pair_id,ref_variance\na,1\n")
    with pytest.raises(ValueError):
        read_descriptors(tmp_path / "bad.csv")
