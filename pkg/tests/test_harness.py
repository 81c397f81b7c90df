import json
import math

import numpy as np
import pytest

from nastein import bounds
from nastein.harness import (CSV_HEADER, ConfigError, ExperimentRow, PreconditionError, block_covariance_matrix,
                             emit_csv, fit_rate, load_config, multivariate_check, read_csv, recompute_bound,
                             rows_to_csv, run_multivariate_experiment, run_univariate_experiment)
from nastein.lattice import CovarianceModel, compute_An

from conftest import LN2


def cfg(**over):
    doc = {"mode": "univariate", "field": {"kind": "sign_gaussian_na", "d": 1, "c": 0.3, "lambda": LN2, "K": 1},
           "n_list": [16, 32, 64], "replicates": 400, "seed": 7}
    doc.update(over)
    return load_config(doc)


def test_load_nested_and_dotted(tmp_path):
    a = cfg()
    dotted = {"mode": "univariate", "field.kind": "sign_gaussian_na", "field.d": 1, "field.c": 0.3,
              "field.lambda": LN2, "field.K": 1, "n_list": [16, 32, 64], "replicates": 400, "seed": 7}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(dotted))
    b = load_config(path)
    assert a.field == b.field and a.n_list == b.n_list


@pytest.mark.parametrize("over", [
    {"mode": "nope"}, {"n_list": [32, 16]}, {"n_list": []}, {"replicates": 1},
    {"extra": 1}, {"field": {"kind": "ising", "d": 1}}, {"p": 2, "anchors": [[0]]},
])
def test_config_errors(over):
    with pytest.raises(ConfigError):
        cfg(**over)


def test_config_missing_key():
    with pytest.raises(ConfigError, match="missing"):
        load_config({"mode": "univariate", "field": {"kind": "iid_rademacher", "d": 1}, "n_list": [4]})


def test_config_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_certificate_failure_is_precondition():
    with pytest.raises(PreconditionError):
        cfg(field={"kind": "sign_gaussian_na", "d": 1, "c": 0.9, "lambda": LN2})


def test_default_anchors():
    c = cfg(mode="multivariate", p=3, field={"kind": "sign_gaussian_na", "d": 2, "c": 0.1, "lambda": LN2})
    assert c.anchors_for(5) == [(0, 0), (5, 0), (10, 0)]


def test_univariate_rows_and_recompute():
    c = cfg()
    rows = run_univariate_experiment(c)
    assert [r.n for r in rows] == [16, 32, 64]
    model = c.field.analytic_model
    for r in rows:
        assert r.A_n == compute_An(model, r.n)
        assert recompute_bound(r, c.field) == r.bound
        assert r.bound * r.n ** 0.25 == pytest.approx(r.kappa1, rel=1e-13)
        assert 0 < r.empirical_d1 < 1 and r.mc_stderr > 0
        assert r.passed and not r.rate_only and r.seed == 7


def test_univariate_iid_bound_is_remark_value():
    rows = run_univariate_experiment(cfg(field={"kind": "iid_rademacher", "d": 1}, n_list=[100], replicates=2000))
    assert rows[0].bound == pytest.approx(0.5, abs=1e-15)
    assert rows[0].kappa1 == pytest.approx(5.0)
    assert rows[0].passed


def test_refuses_degenerate_and_unbounded():
    c = cfg(field={"kind": "iid_rademacher", "d": 1})
    c.model = CovarianceModel.iid(1e-9, 1)
    with pytest.raises(PreconditionError, match="floor"):
        run_univariate_experiment(c)
    with pytest.raises(PreconditionError, match="bounded"):
        run_univariate_experiment(cfg(field={"kind": "gaussian_na", "d": 1, "c": 0.3, "lambda": LN2}))
    with pytest.raises(ConfigError):
        run_univariate_experiment(cfg(field={"kind": "multinomial", "d": 1}))


def test_univariate_deterministic_across_workers():
    c = cfg(n_list=[8, 16], replicates=1500)
    a = rows_to_csv(run_univariate_experiment(c))
    c.workers = 3
    assert rows_to_csv(run_univariate_experiment(c)) == a


def test_fit_rate_exact_power_law():
    for d, rate in ((1, -0.25), (2, -1 / 3)):
        rows = []
        for n in (8, 16, 32, 64):
            rep = bounds.field_bound_univariate(d, 1.0, LN2, 0.1, 0.8, n)
            rows.append(ExperimentRow(n, d, 10, 0.1, 0.01, 0.8, rep.details["kappa1"], rep.value, True, False, 0))
        slope, _ = fit_rate(rows)
        assert slope == pytest.approx(rate, abs=1e-9)


def test_fit_rate_needs_three_rows():
    rows = [ExperimentRow(n, 1, 10, 0.1, 0.01, 1, 1, 1 / n, n > 4, False, 0) for n in (2, 4, 8, 16)]
    with pytest.raises(ValueError):
        fit_rate(rows)


@pytest.mark.slow
def test_iid_empirical_rate():
    rows = run_univariate_experiment(cfg(field={"kind": "iid_rademacher", "d": 1},
                                         n_list=[64, 256, 1024, 4096], replicates=10_000))
    slope, _ = fit_rate(rows, "empirical_d1")
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_csv_format(tmp_path):
    path = emit_csv([], tmp_path / "empty.csv")
    assert path.read_bytes() == b"n,d,replicates,empirical_d1,mc_stderr,A_n,kappa1,bound,valid,rate_only,seed\n"
    row = ExperimentRow(64, 1, 10000, 0.1234567890123456, 1e-5, 0.61873, 30.25, 10.69, True, False, 3)
    emit_csv([row], tmp_path / "one.csv")
    text = (tmp_path / "one.csv").read_text()
    assert text.splitlines()[1] == "64,1,10000,0.123456789012,1e-05,0.61873,30.25,10.69,true,false,3"
    back = read_csv(tmp_path / "one.csv")[0]
    for k in CSV_HEADER:
        v, w = getattr(row, k), getattr(back, k)
        assert v == w if not isinstance(v, float) else w == pytest.approx(v, rel=1e-11)
    assert "\r" not in text


# --- multivariate ----------------------------------------------------------------------

def mcfg(**over):
    doc = {"mode": "multivariate", "field": {"kind": "sign_gaussian_na", "d": 1, "c": 0.3, "lambda": LN2, "K": 1},
           "n_list": [16, 32], "replicates": 300, "seed": 1, "p": 2}
    doc.update(over)
    return load_config(doc)


def test_p1_sigma_is_block_variance():
    c = mcfg(p=1)
    chk = multivariate_check(c, 16)
    assert chk.Sigma.shape == (1, 1)
    assert chk.Sigma[0, 0] == pytest.approx(16 * compute_An(c.field.analytic_model, 16), rel=1e-14)


def test_multivariate_checks_hold():
    c = mcfg()
    chk = multivariate_check(c, 32)
    assert chk.gershgorin_valid and chk.gershgorin_ok and chk.separated_ok
    assert chk.max_neg_offdiag > 0
    assert chk.max_abs_inverse == pytest.approx(np.abs(np.linalg.inv(chk.Sigma)).max())
    psi, s = bounds.psi_n_from_sigma(chk.Sigma, 32, 1)
    assert (chk.psi_n, chk.sigma_inv_half_inf) == (psi, s)


def test_multivariate_rows():
    checks = []
    rows = run_multivariate_experiment(mcfg(), checks)
    assert len(rows) == len(checks) == 2
    for r, chk in zip(rows, checks):
        assert r.rate_only and math.isnan(r.kappa1) and r.passed
        assert 0 <= r.empirical_d1 <= 2
        assert r.bound == chk.rate.value


def test_separation_guard():
    with pytest.raises(PreconditionError, match="disjoint"):
        run_multivariate_experiment(mcfg(anchors=[[0], [20]]))


def test_block_covariance_matrix_symmetric():
    model = CovarianceModel.extremal(0.5, 1.0, 2)
    S = block_covariance_matrix(model, [(0, 0), (4, 0), (0, 4)], 4)
    assert np.array_equal(S, S.T)
