import numpy as np
import pandas as pd
import pytest

from exposure_lab.errors import DataError, NumericalError
from exposure_lab.estimator import (
    DofSpec,
    RegressionSpec,
    cluster_vcov,
    first_stage_f,
    run_spec,
    tsls,
    wls,
)


def _cluster_oracle(X, e, clusters, w, k_model=None):
    """Brute-force sandwich: cluster-summed weighted scores."""
    X = np.asarray(X, float)
    n, k = X.shape
    k_model = k if k_model is None else k_model
    bread = np.linalg.inv(X.T @ (X * w[:, None]))
    groups = {}
    for i, g in enumerate(clusters):
        groups.setdefault(g, []).append(i)
    meat = np.zeros((k, k))
    for idx in groups.values():
        s = np.zeros(k)
        for i in idx:
            s += w[i] * e[i] * X[i]
        meat += np.outer(s, s)
    G = len(groups)
    c = (G / (G - 1)) * ((n - 1) / (n - k_model))
    return c * bread @ meat @ bread


def _hc1_oracle(X, e, w):
    X = np.asarray(X, float)
    n, k = X.shape
    bread = np.linalg.inv(X.T @ (X * w[:, None]))
    meat = (X * (w * e)[:, None]).T @ (X * (w * e)[:, None])
    return (n / (n - k)) * bread @ meat @ bread


class TestWls:
    def test_exact_fit(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        w = rng.uniform(0.1, 5.0, 50)
        beta = wls(2.0 * x, x[:, None], w)
        assert beta[0] == pytest.approx(2.0, abs=1e-12)

    def test_duplicate_rows_half_weight(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 2))
        y = X @ np.array([1.0, -2.0]) + rng.normal(size=30)
        w = rng.uniform(0.5, 2.0, 30)
        base = wls(y, X, w)
        dup = wls(np.r_[y, y], np.r_[X, X], np.r_[w / 2, w / 2])
        assert np.allclose(base, dup, atol=1e-12)

    def test_normal_equation_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        w = rng.uniform(0.1, 3.0, 50)
        beta = wls(y, X, w)
        oracle = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (w * y))
        assert np.allclose(beta, oracle, rtol=1e-9)

    def test_rank_deficiency_names_columns(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(20, 1))
        X = np.column_stack([x, 2 * x])
        with pytest.raises(NumericalError, match="collinear columns: (first|second)"):
            wls(rng.normal(size=20), X, names=["first", "second"])

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericalError, match="non-finite"):
            wls(np.array([1.0, np.nan]), np.ones((2, 1)))


class TestTsls:
    def test_self_instrument_reduces_to_wls(self):
        rng = np.random.default_rng(4)
        n = 60
        x = rng.normal(size=(n, 1))
        exog = rng.normal(size=(n, 2))
        y = x[:, 0] + exog @ np.array([0.5, -1.0]) + rng.normal(size=n)
        w = rng.uniform(0.2, 2.0, n)
        beta_iv = tsls(y, x, exog, x, w)
        beta_ols = wls(y, np.column_stack([x, exog]), w)
        assert np.allclose(beta_iv, beta_ols, atol=1e-10)

    def test_exactly_identified_closed_form(self):
        rng = np.random.default_rng(5)
        n = 80
        z = rng.normal(size=(n, 2))
        exog = rng.normal(size=(n, 1))
        x_endog = z @ np.array([[1.0, 0.2], [0.3, 0.9]]).T + rng.normal(size=(n, 2))
        y = x_endog @ np.array([0.5, -0.2]) + exog[:, 0] + rng.normal(size=n)
        w = rng.uniform(0.5, 1.5, n)
        beta = tsls(y, x_endog, exog, z, w)
        Zfull = np.column_stack([z, exog])
        Xfull = np.column_stack([x_endog, exog])
        oracle = np.linalg.solve(Zfull.T @ (Xfull * w[:, None]), Zfull.T @ (w * y))
        assert np.allclose(beta, oracle, rtol=1e-9)

    def test_zero_column_rejected(self):
        rng = np.random.default_rng(6)
        n = 30
        x = rng.normal(size=(n, 1))
        z = rng.normal(size=(n, 1))
        exog = np.zeros((n, 1))
        with pytest.raises(NumericalError):
            tsls(rng.normal(size=n), x, exog, z)

    def test_underidentified_rejected(self):
        rng = np.random.default_rng(7)
        n = 30
        with pytest.raises(DataError, match="identify"):
            tsls(
                rng.normal(size=n),
                rng.normal(size=(n, 2)),
                None,
                rng.normal(size=(n, 1)),
            )


class TestClusterVcov:
    def test_own_cluster_equals_hc1(self):
        rng = np.random.default_rng(8)
        n = 40
        X = rng.normal(size=(n, 3))
        e = rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, n)
        V = cluster_vcov(X, e, np.arange(n), w)
        assert np.allclose(V, _hc1_oracle(X, e, w), rtol=1e-9)

    def test_matches_oracle_many_seeds(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n = 60
            X = rng.normal(size=(n, 2))
            e = rng.normal(size=n)
            w = rng.uniform(0.2, 3.0, n)
            clusters = rng.integers(0, 7, n)
            V = cluster_vcov(X, e, clusters, w)
            assert np.allclose(V, _cluster_oracle(X, e, clusters, w), rtol=1e-9)

    def test_duplicated_cluster_halved_weights(self):
        rng = np.random.default_rng(9)
        n = 30
        X = rng.normal(size=(n, 2))
        w = rng.uniform(0.5, 2.0, n)
        clusters = rng.integers(0, 5, n)
        beta_ref = wls(X @ [1.0, 2.0] + rng.normal(size=n), X, w)
        y = X @ [1.0, 2.0] + rng.normal(size=n)
        # duplicate cluster 0 with halved weights
        mask = clusters == 0
        X2 = np.r_[X, X[mask]]
        y2 = np.r_[y, y[mask]]
        w2 = np.r_[w, w[mask]]
        w2[np.r_[mask, np.zeros(mask.sum(), bool)]] /= 2
        w2[n:] /= 2
        cl2 = np.r_[clusters, np.full(mask.sum(), 0)]
        beta1 = wls(y, X, w)
        beta2 = wls(y2, X2, w2)
        assert np.allclose(beta1, beta2, atol=1e-12)
        e2 = y2 - X2 @ beta2
        V2 = cluster_vcov(X2, e2, cl2, w2)
        assert np.allclose(V2, _cluster_oracle(X2, e2, cl2, w2), rtol=1e-9)

    def test_zero_residuals_zero_matrix(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(20, 2))
        V = cluster_vcov(X, np.zeros(20), rng.integers(0, 4, 20), np.ones(20))
        assert np.allclose(V, 0.0)

    def test_single_cluster_rejected(self):
        with pytest.raises(NumericalError, match="2 clusters"):
            cluster_vcov(np.ones((5, 1)), np.ones(5), np.zeros(5), np.ones(5))

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(11)
        n = 50
        X = rng.normal(size=(n, 2))
        e = rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, n)
        clusters = rng.integers(0, 6, n)
        V1 = cluster_vcov(X, e, clusters, w)
        V2 = cluster_vcov(X, e, clusters, 7.0 * w)
        assert np.allclose(V1, V2, rtol=1e-12)

    def test_dof_spec(self):
        rng = np.random.default_rng(12)
        n = 30
        X = rng.normal(size=(n, 2))
        e = rng.normal(size=n)
        clusters = rng.integers(0, 5, n)
        V_base = cluster_vcov(X, e, clusters)
        V_extra = cluster_vcov(X, e, clusters, dof=DofSpec(extra_df=5))
        ratio = (n - 2) / (n - 7)
        assert np.allclose(V_extra, V_base * ratio, rtol=1e-12)


class TestFirstStageF:
    def test_zero_coefficient(self):
        f = first_stage_f(np.array([0.0, 1.0]), np.eye(2), [0])
        assert f == 0.0

    def test_single_instrument_wald_identity(self):
        coef = np.array([0.8, 0.1])
        vcov = np.diag([0.04, 0.01])
        f = first_stage_f(coef, vcov, [0])
        assert f == pytest.approx((0.8 / 0.2) ** 2)

    def test_two_instrument_quadratic_form(self):
        coef = np.array([0.5, 0.3, 9.9])
        V = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.0], [0.0, 0.0, 1.0]])
        f = first_stage_f(coef, V, [0, 1])
        b = coef[:2]
        oracle = float(b @ np.linalg.solve(V[:2, :2], b)) / 2
        assert f == pytest.approx(oracle, rel=1e-9)

    def test_singular_block_rejected(self):
        with pytest.raises(NumericalError, match="singular"):
            first_stage_f(np.array([1.0, 1.0]), np.zeros((2, 2)), [0, 1])


def _toy_frame(seed=0, n=400, g1=15, g2=8, n_cl=25):
    rng = np.random.default_rng(seed)
    f1 = rng.integers(0, g1, n)
    f2 = rng.integers(0, g2, n)
    cl = rng.integers(0, n_cl, n)
    z1 = rng.normal(size=n)
    z2 = rng.normal(size=n)
    v1 = rng.normal(size=n)
    v2 = rng.normal(size=n)
    x1 = z1 + 0.4 * v1 + rng.normal(size=g1)[f1] * 0.3
    x2 = z2 + 0.4 * v2
    u = rng.normal(size=n_cl)[cl] * 0.5 + rng.normal(size=n) + 0.5 * v1 - 0.2 * v2
    exog = rng.normal(size=n)
    y = (
        0.5 * x1
        - 0.2 * x2
        + 0.3 * exog
        + rng.normal(size=g1)[f1]
        + rng.normal(size=g2)[f2]
        + u
    )
    return pd.DataFrame(
        {
            "y": y,
            "x1": x1,
            "x2": x2,
            "z1": z1,
            "z2": z2,
            "exog": exog,
            "f1": f1.astype(str),
            "f2": f2.astype(str),
            "cl": cl.astype(str),
            "w": rng.uniform(0.5, 2.0, n),
        }
    )


def _ols_spec(**kw):
    base = dict(
        name="ols",
        dependent="y",
        exogenous=("x1", "x2", "exog"),
        fixed_effects=(("f1",), ("f2",)),
        cluster=("cl",),
        weights="w",
    )
    base.update(kw)
    return RegressionSpec(**base)


class TestRunSpec:
    def test_no_endogenous_is_wls_path(self):
        frame = _toy_frame()
        res = run_spec(frame, _ols_spec())
        assert res.terms == ("x1", "x2", "exog")
        assert res.n_obs <= len(frame)
        assert res.first_stages == ()

    def test_deterministic_repeat(self):
        frame = _toy_frame()
        r1 = run_spec(frame, _ols_spec())
        r2 = run_spec(frame, _ols_spec())
        assert r1 == r2

    def test_row_order_invariance(self):
        frame = _toy_frame()
        res1 = run_spec(frame, _ols_spec())
        shuffled = frame.sample(frac=1.0, random_state=5).reset_index(drop=True)
        res2 = run_spec(shuffled, _ols_spec())
        assert np.allclose(res1.coef, res2.coef, rtol=1e-9)
        assert np.allclose(res1.se, res2.se, rtol=1e-9)

    def test_frisch_waugh_lovell(self):
        from tests.test_hdfe import dense_dummy_wls

        frame = _toy_frame(seed=3, n=250)
        res = run_spec(frame, _ols_spec())
        kept = frame  # no singletons dropped in this draw, verify below
        assert res.n_singletons_dropped == 0
        f1 = pd.factorize(frame["f1"])[0]
        f2 = pd.factorize(frame["f2"])[0]
        oracle = dense_dummy_wls(
            frame["y"].to_numpy(),
            frame[["x1", "x2", "exog"]].to_numpy(),
            [f1, f2],
            frame["w"].to_numpy(),
        )
        assert np.allclose(res.coef, oracle, rtol=1e-8)

    def test_tsls_with_self_instrument_equals_ols(self):
        frame = _toy_frame(seed=4)
        frame["zx1"] = frame["x1"]
        frame["zx2"] = frame["x2"]
        ols = run_spec(frame, _ols_spec())
        iv = run_spec(
            frame,
            _ols_spec(
                name="iv",
                exogenous=("exog",),
                endogenous=("x1", "x2"),
                instruments=("zx1", "zx2"),
            ),
        )
        assert np.allclose(iv.coef[:2], ols.coef[:2], atol=1e-10)

    def test_affine_equivariance(self):
        frame = _toy_frame(seed=6)
        res = run_spec(frame, _ols_spec())
        frame2 = frame.copy()
        frame2["x1"] = 2.5 * frame2["x1"] + 7.0  # intercept shift absorbed by FE
        res2 = run_spec(frame2, _ols_spec())
        i = res.terms.index("x1")
        assert res2.coef[i] == pytest.approx(res.coef[i] / 2.5, rel=1e-8)
        assert res2.tstats[i] == pytest.approx(res.tstats[i], rel=1e-8)

    def test_weight_scale_invariance(self):
        frame = _toy_frame(seed=7)
        res1 = run_spec(frame, _ols_spec())
        frame2 = frame.copy()
        frame2["w"] = frame2["w"] * 100.0
        res2 = run_spec(frame2, _ols_spec())
        assert np.allclose(res1.coef, res2.coef, rtol=1e-10)
        assert np.allclose(res1.se, res2.se, rtol=1e-10)

    def test_r2_within_not_above_r2(self):
        for seed in range(5):
            res = run_spec(_toy_frame(seed=seed), _ols_spec())
            assert res.r2_within <= res.r2 + 1e-12

    def test_ses_positive_and_clusters_counted(self):
        res = run_spec(_toy_frame(), _ols_spec())
        assert all(s > 0 for s in res.se)
        assert res.n_clusters == 25

    def test_singletons_dropped_and_reported(self):
        frame = _toy_frame(seed=8, n=60, g1=50)  # many singleton f1 groups
        res = run_spec(frame, _ols_spec())
        assert res.n_singletons_dropped > 0
        assert res.n_obs == len(frame) - res.n_singletons_dropped

    def test_missing_column_rejected(self):
        with pytest.raises(DataError, match="lacks columns"):
            run_spec(_toy_frame(), _ols_spec(dependent="nope"))

    def test_first_stage_f_reported(self):
        frame = _toy_frame(seed=9)
        iv = run_spec(
            frame,
            _ols_spec(
                name="iv",
                exogenous=("exog",),
                endogenous=("x1",),
                instruments=("z1",),
            ),
        )
        assert len(iv.first_stages) == 1
        fs = iv.first_stages[0]
        assert fs.fstat > 10  # strong by construction
        assert fs.fstat == pytest.approx((fs.coef[0] / fs.se[0]) ** 2, rel=1e-9)
