import math
from dataclasses import replace

import numpy as np
import pytest

from platoon_edca.des import SimConfig, replicate, run_simulation, write_manifest, write_packet_csv
from platoon_edca.edca import EdcaParams
from platoon_edca.errors import ConfigError

P = EdcaParams()


def test_idle_single_station_matches_uniform_backoff():
    st = run_simulation(SimConfig(n_vehicles=1, headway=5.0, lambda0=50.0, lambda1=0.0, duration=40.0, warmup=0.0, seed=3))
    d = st.access_delay_us[0]
    values, counts = np.unique(d, return_counts=True)
    assert values.tolist() == [1421, 1434, 1447, 1460]
    expected = d.size / 4
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 16.27  # 3 dof, p = 0.001
    assert np.mean(d) == pytest.approx(1421 + 1.5 * 13, abs=3 * 13 * math.sqrt(1.25) / math.sqrt(d.size) * 2)


def test_simultaneous_broadcasts_collide_without_retry():
    p = EdcaParams(cw_min=(0, 15), cw_max=(0, 31))
    st = run_simulation(SimConfig(n_vehicles=2, headway=5.0, edca=p, lambda0=400.0, lambda1=0.0, duration=3.0, warmup=0.0))
    r = st.records[st.records["outcome"] != 2]
    _, inverse, counts = np.unique(r["done_us"], return_inverse=True, return_counts=True)
    together = counts[inverse] > 1
    assert together.any()
    assert np.all(r["outcome"][together] == 1)
    assert np.all(r["outcome"][~together] == 0)
    # one record per packet: collided broadcasts are not sent again
    keys = r[["station", "ac", "arrival_us"]]
    assert np.unique(keys).size == keys.size


def test_same_seed_is_deterministic():
    cfg = SimConfig(n_vehicles=20, headway=10.0, lambda0=30.0, lambda1=10.0, duration=3.0, warmup=0.5, seed=11)
    a, b = run_simulation(cfg), run_simulation(cfg)
    assert np.array_equal(a.records, b.records)
    assert a.summary() == b.summary()
    c = run_simulation(replace(cfg, seed=12))
    assert not np.array_equal(a.records, c.records)


@pytest.mark.parametrize("topology", ["single_domain", "line_with_ranges"])
def test_conservation_and_lower_bound(topology):
    cfg = SimConfig(n_vehicles=30, headway=40.0, lambda0=60.0, lambda1=10.0, duration=3.0, warmup=0.5, topology=topology)
    st = run_simulation(cfg)
    for ac in (0, 1):
        assert st.arrived[ac] == st.transmitted[ac] + st.dropped[ac] + st.queued[ac]
        assert st.queued[ac] >= 0
        if st.access_delay_us[ac].size:
            assert st.access_delay_us[ac].min() >= P.ttr_us
            assert np.all(st.sojourn_us[ac] >= st.access_delay_us[ac])
    assert st.transmissions[0] + st.transmissions[1] == st.transmitted[0] + st.transmitted[1]


def test_virtual_collisions_favour_ac0():
    # one station, both queues saturated: only AC1 ever loses or drops
    p = EdcaParams(retry_limit=1)
    st = run_simulation(SimConfig(n_vehicles=1, headway=5.0, edca=p, lambda0=2000.0, lambda1=2000.0, duration=4.0, warmup=0.0))
    assert st.virtual_collisions > 0
    assert st.dropped[0] == 0
    assert st.external_collisions == 0
    assert st.drops == st.dropped[1] <= st.virtual_collisions


def test_freeze_costs_at_least_one_slot_per_freeze():
    # AC1 delays that were interrupted by k busy periods include k transmissions
    st = run_simulation(SimConfig(n_vehicles=5, headway=5.0, lambda0=200.0, lambda1=10.0, duration=4.0, warmup=0.0))
    d = st.access_delay_us[1]
    assert d.size > 0 and np.all(d >= P.ttr_us)
    busy = P.ttr_us + P.sifs_us
    assert np.any(d >= P.ttr_us + busy)


def test_replicate_single_equals_run():
    cfg = SimConfig(n_vehicles=10, headway=10.0, lambda0=20.0, lambda1=10.0, duration=2.0, warmup=0.2, seed=5)
    agg = replicate(cfg, 1)
    st = run_simulation(cfg)
    assert np.array_equal(agg.runs[0].records, st.records)
    assert agg.metrics["ac0_mean_ms"].mean == st.summary()["ac0_mean_ms"]
    assert agg.metrics["ac0_mean_ms"].ci_low == agg.metrics["ac0_mean_ms"].ci_high


def test_replicate_deterministic_aggregate():
    cfg = SimConfig(n_vehicles=10, headway=10.0, lambda0=20.0, lambda1=10.0, duration=1.0, warmup=0.2, seed=5)
    a, b = replicate(cfg, 3), replicate(cfg, 3)
    assert a.seeds == [5, 6, 7]
    assert {k: v for k, v in a.metrics.items()} == {k: v for k, v in b.metrics.items()}


def test_ci_width_shrinks_like_inverse_sqrt():
    cfg = SimConfig(n_vehicles=8, headway=10.0, lambda0=40.0, lambda1=10.0, duration=0.6, warmup=0.1, seed=100)
    widths = {}
    for n in (4, 16, 64):
        m = replicate(cfg, n).metrics["ac0_mean_ms"]
        widths[n] = m.ci_high - m.ci_low
    assert widths[4] / widths[64] == pytest.approx(4.0, rel=0.6)
    assert widths[4] > widths[16] > widths[64]


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        SimConfig(n_vehicles=0, headway=-1, duration=1.0, warmup=2.0, topology="ring")
    assert len(exc.value.problems) == 4
    with pytest.raises(ConfigError):
        replicate(SimConfig(n_vehicles=2, headway=5.0), 0)


def test_output_files(tmp_path):
    cfg = SimConfig(n_vehicles=3, headway=10.0, lambda0=20.0, lambda1=10.0, duration=0.5, warmup=0.0, seed=9)
    st = run_simulation(cfg)
    write_packet_csv(st, tmp_path / "p.csv")
    write_manifest(cfg, tmp_path / "m.txt", {"note": "x"})
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "station,ac,arrival_us,hol_us,done_us,outcome"
    assert len(lines) == st.records.size + 1
    manifest = (tmp_path / "m.txt").read_text()
    assert f"param_hash = {cfg.param_hash()}" in manifest and "seed = 9" in manifest and "PCG64" in manifest
