import math

import numpy as np
import pytest

import ivcea


def four_rows():
    z = np.array([1, 1, 0, 0])
    d = np.array([1, 0, 0, 0])
    y = np.array([10.0, 4.0, 2.0, 0.0])
    return z, d, y


def test_wald_four_rows():
    z, d, y = four_rows()
    # (7 - 1) / (0.5 - 0)
    assert ivcea.wald_cace(z, d, y) == pytest.approx(12.0)


def test_dataset_roundtrip_and_nan_missing():
    z = np.array([0, 1, 0, 1])
    d = np.array([0, 1, 0, 1])
    y1 = np.array([1.0, np.nan, 3.0, 4.0])
    y2 = np.array([0.5, 0.6, 0.7, 0.8])
    ds = ivcea.TrialDataset(z, d, y1, y2, {"eq5d0": np.array([0.1, 0.2, 0.3, 0.4])})
    assert len(ds) == 4
    assert list(ds.r1) == [1, 0, 1, 1]
    back = ivcea.parse_csv(ds.to_csv())
    assert back.to_csv() == ds.to_csv()
    assert set(ds.covariates) == {"eq5d0"}


def test_schema_error_is_catchable():
    with pytest.raises(ivcea.IvceaError):
        ivcea.parse_csv("a,b\n1,2\n")


def test_simulate_and_estimate():
    ds, truth = ivcea.simulate({"preset": "confounded_switching", "seed": 3})
    assert truth["cace"]["cost"] == pytest.approx(1000.0)
    est = ivcea.three_sls(ds, covariates=["eq5d0"])
    assert est.estimand == "CACE"
    assert abs(est.theta[0] - 1000.0) < 4 * est.se[0]
    itt = ivcea.itt_sur(ds)
    pp = ivcea.pp_sur(ds)
    assert itt.theta.shape == (2,)
    assert pp.estimand == "PP"
    assert est.to_dict()["estimand"] == "CACE"


def test_inb_matches_formula():
    theta = np.array([300.0, 0.05])
    cov = np.array([[400.0, 0.2], [0.2, 0.0004]])
    lam = 20000.0
    r = ivcea.inb_from(theta, cov, lam)
    assert r.inb == pytest.approx(lam * 0.05 - 300.0)
    var = lam * lam * cov[1, 1] + cov[0, 0] - 2 * lam * cov[0, 1]
    assert r.inb_se == pytest.approx(math.sqrt(var))


def test_icer_and_ceac():
    ratio, quadrant = ivcea.icer(1000.0, 0.1)
    assert ratio == pytest.approx(10000.0)
    assert quadrant
    probs = ivcea.ceac(np.array([1000.0, 0.1]), np.diag([100.0**2, 0.02**2]), [0.0, 10000.0, 50000.0])
    assert probs[0] < 0.01
    assert probs[1] == pytest.approx(0.5)
    assert probs[2] > 0.99


def test_rubin_toy():
    p = ivcea.rubin_pool([np.array([1.0]), np.array([3.0])], [np.eye(1), np.eye(1)])
    assert p.estimate[0] == pytest.approx(2.0)
    assert p.total[0, 0] == pytest.approx(4.0)


def test_mi_keeps_observed_and_uses_donors():
    cfg = {"preset": "mar_cost_on_qaly", "n": 400, "seed": 5}
    ds, _ = ivcea.simulate(cfg)
    sets, violations = ivcea.mi_impute(ds, m=3, donors=5, cycles=2, seed=2)
    assert len(sets) == 3
    assert violations == 0
    obs = ds.r1 == 1
    for s in sets:
        assert np.all(s.y1[obs] == ds.y1[obs])
        assert not np.isnan(s.y1).any()


def test_bayes_small_run():
    ds, _ = ivcea.simulate({"seed": 8})
    draws = ivcea.fit_bayes_iv(ds, covariates=["eq5d0"], chains=2, iterations=400, burnin=200, seed=1)
    assert draws.draws.shape[0] == 2 * 200
    assert "b11" in draws.names
    assert draws.column("b11").shape == (400,)


def test_run_mc_tiny():
    rep = ivcea.run_mc({"dgp": {"n": 300}, "methods": ["cace-3sls", "itt"], "missing": ["cca"], "replicates": 3, "seed": 1})
    assert rep["replicates"] == 3
    assert {c["pipeline"] for c in rep["cells"]} == {"cace-3sls/cca", "itt/cca"}
