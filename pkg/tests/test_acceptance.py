"""Acceptance criteria, one test (or parametrized family) per criterion.

Each check is recorded through the ``criterion`` fixture and summarized as
one PASS/FAIL line per criterion at the end of the run.
"""

import math

import numpy as np
import pytest

from spreadlab import lab, registry, simkit, spreads, theory
from spreadlab.simkit import SimConfig, annual_sigma_from_daily, gen_fbm, gen_signs_chain, gen_signs_ou
from spreadlab.spreads import FitOptions
from spreadlab.theory import MINUTE_TAU as TAU
from spreadlab.theory import ModelKind, ModelSpec
from spreadlab.varest import empirical_variance, increment_count

pytestmark = pytest.mark.slow

STUDY = registry.SIMULATION_STUDY
TRIALS = 1000
S = 0.005


def _lag_corr(x, k):
    x = x - x.mean()
    return float(np.dot(x[:-k], x[k:]) / np.dot(x, x))


def _fmt(r):
    return f"bias {r.bias:+.2e} std {r.std:.2e} {r.decision} (p={r.p_value:.2g})"


# ---------------------------------------------------------------------------
# 1-4: simulation tables


def test_table1_model1(criterion):
    cfg = SimConfig(ModelSpec(ModelKind.IID, s=S, sigma=annual_sigma_from_daily(0.03)), seed=1)
    rep = lab.run_experiment(cfg, ["s11", "roll", "cs"], TRIALS, STUDY)
    s11, roll, cs = rep["s11"], rep["roll"], rep["cs"]
    title = "model 1 (independent noise) bias table"
    ok = [
        criterion(1, title, abs(s11.bias) < 3e-5 and 1.4e-4 <= s11.std <= 2.2e-4, f"S11 {_fmt(s11)}"),
        criterion(1, title, abs(roll.bias) < 1e-4, f"Roll {_fmt(roll)}"),
        criterion(1, title, -4.5e-4 <= cs.bias <= -2.0e-4, f"CS {_fmt(cs)}"),
        criterion(1, title, s11.decision == "Accepted" and cs.decision == "Rejected", "decisions S11/CS"),
    ]
    assert all(ok)


def _fbm_cfg(h, seed):
    m = ModelSpec(ModelKind.FBM_PRICE, s=S, sigma=annual_sigma_from_daily(0.03, h), hurst=h)
    return SimConfig(m, seed=seed)


def test_table2_fbm_anti_persistent(criterion):
    rep = lab.run_experiment(_fbm_cfg(0.3, 2), ["s11", "s21"], TRIALS, STUDY)
    s11, s21 = rep["s11"], rep["s21"]
    title = "fBm mid price H=0.3 bias table"
    ok = [
        criterion(2, title, 1.5e-3 <= s11.bias <= 2.9e-3 and s11.decision == "Rejected", f"S11 {_fmt(s11)}"),
        criterion(2, title, abs(s21.bias) < 6e-4 and s21.decision == "Accepted", f"S21 {_fmt(s21)}"),
    ]
    assert all(ok)


def test_table3_fbm_persistent(criterion):
    rep = lab.run_experiment(_fbm_cfg(0.7, 3), ["s11", "s21"], TRIALS, STUDY)
    s11, s21 = rep["s11"], rep["s21"]
    title = "fBm mid price H=0.7 bias table"
    ok = [
        criterion(3, title, -8e-4 <= s21.bias <= 3e-4, f"S21 {_fmt(s21)}"),
        criterion(3, title, abs(s11.bias) < 2e-4, f"S11 {_fmt(s11)}"),
    ]
    assert all(ok)


def test_table4_binarized_ou(criterion):
    m = ModelSpec(ModelKind.OU_TRADES, s=S, sigma=annual_sigma_from_daily(0.03), theta_per_second=0.01)
    ids = ["cs", "ar", "roll", "agk1", "s11", "s31"]
    rep = lab.run_experiment(SimConfig(m, seed=4), ids, TRIALS, STUDY)
    title = "binarized OU trade signs bias table"
    ok = [criterion(4, title, rep[e].bias < 0, f"{e} {_fmt(rep[e])}") for e in ids[:-1]]
    s31 = rep["s31"]
    ok.append(criterion(4, title, -2e-4 <= s31.bias <= 9e-4 and s31.decision == "Accepted", f"S31 {_fmt(s31)}"))
    assert all(ok)


# ---------------------------------------------------------------------------
# 5: sign correlation of a binarized OU path


def test_ou_sign_correlation(criterion):
    y = gen_signs_ou(1_000_000, 0.01, seed=5)
    ok = []
    for lag in (1, 10, 35, 100):
        emp, ref = _lag_corr(y, lag), theory.ou_sign_correlation(0.01, lag)
        ok.append(criterion(5, "OU sign correlation", abs(emp - ref) < 0.01, f"lag {lag}s: {emp:.4f} vs {ref:.4f}"))
    emp35 = _lag_corr(y, 35)
    ok.append(criterion(5, "OU sign correlation", abs(emp35 - 0.4978) < 0.01 and abs(theory.ou_sign_correlation(0.01, 35) - 0.4978) < 5e-5))
    assert all(ok)


# ---------------------------------------------------------------------------
# 6: closed-form asymptotic variance, strictly disjoint increments


@pytest.mark.parametrize("s", [0.001, 0.005, 0.01])
def test_gamma_special_case(s, criterion):
    n, reps, sigma = 510, 20_000, 0.2
    tau = 1 / (260 * 510)
    rng = np.random.default_rng(6)
    g = theory.gamma_standard_special(1, 2, ModelSpec(ModelKind.IID, s=s, sigma=sigma, tau_years=tau))
    assert g.components["L_prime"] == 3
    est = np.empty(reps)
    for i in range(reps):
        mid = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n - 1))]) * (sigma * math.sqrt(tau))
        p = mid + 0.5 * s * np.where(rng.random(n) < 0.5, -1.0, 1.0)
        est[i] = spreads.s2_standard(p, 1, 3, 3).s_squared
    ref = math.sqrt(g.value / n)
    ratio = est.std() / ref
    assert criterion(6, "Gamma(1,3) special case", abs(ratio - 1) < 0.15, f"S={s}: MC std {est.std():.3e} vs {ref:.3e}")


# ---------------------------------------------------------------------------
# 7: exact inversion on theoretical variances


def test_exact_inversion(criterion):
    lags = range(1, 11)
    iid = ModelSpec(ModelKind.IID, s=S, sigma=0.2)
    fbm = ModelSpec(ModelKind.FBM_PRICE, s=S, sigma=0.2, hurst=0.3)
    ou = ModelSpec(ModelKind.OU_TRADES, s=S, sigma=0.2, lambda_years=2 * TAU)
    ci, cf, co = (theory.variance_curve(m, lags) for m in (iid, fbm, ou))
    cases = {
        "s11": spreads.s2_standard(ci, 1, 2),
        "s11 (1,5)": spreads.s2_standard(ci, 1, 5),
        "s1med": spreads.s2_standard_median(ci),
        "s21 known H": spreads.s2_fbm(cf, 1, 2, 1, 0.3),
        "s21 plug-in": spreads.s2_fbm_plugin(cf, 1, 2, 1),
        "s31 known rho": spreads.s2_ou(co, 1, 2, 1, ou.rho),
        "s31 plug-in L=1": spreads.s2_ou_plugin(co, 1),
        "s31 plug-in L=2": spreads.s2_ou_plugin(co, 2),
    }
    ok = []
    for name, est in cases.items():
        err = abs(est.s_squared / S**2 - 1)
        ok.append(criterion(7, "exact inversion", err < 1e-12, f"{name}: rel err {err:.1e}"))

    rng = np.random.default_rng(7)
    same = True
    for _ in range(200):
        x = np.cumsum(rng.standard_normal(300)) * 1e-3 + 2.5e-3 * np.sign(rng.standard_normal(300))
        L, Lp = sorted(rng.choice(np.arange(1, 8), 2, replace=False))
        v = int(rng.integers(1, 4))
        base = spreads.s2_standard(x, L, Lp, v).s_squared
        same &= spreads.s2_fbm(x, L, Lp, v, 0.5).s_squared == base
        same &= spreads.s2_ou(x, L, Lp, v, 0.0).s_squared == base
    ok.append(criterion(7, "exact inversion", same, "H=0.5 and rho=0 reductions bit-exact on 200 series"))
    assert all(ok)


# ---------------------------------------------------------------------------
# 8: sign chain and cokurtosis


def test_chain_correlation(criterion):
    y = gen_signs_chain(1_000_000, 0.5, seed=8)
    ok = []
    for k in range(1, 6):
        c = _lag_corr(y, k)
        ok.append(criterion(8, "sign chain and cokurtosis", abs(c - 0.5**k) < 0.01, f"lag {k}: {c:.4f} vs {0.5**k:.4f}"))
    assert all(ok)


def _cokurtosis_mc(rng, rho_g, g, r21, r32, r43, variant, n):
    z = rng.standard_normal((2, n))
    ga = math.sqrt(g) * z[0]
    gb = math.sqrt(g) * (rho_g * z[0] + math.sqrt(1 - rho_g**2) * z[1])
    flips = [np.where(rng.random(n) < 0.5 * (1 + r), 1.0, -1.0) for r in (r21, r32, r43)]
    y1 = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y2 = y1 * flips[0]
    y3 = y2 * flips[1]
    y4 = y3 * flips[2]
    if variant == "minus":
        w = (ga + y2 - y1) ** 2 * (gb + y4 - y3) ** 2
    else:
        w = (ga + y3 - y1) ** 2 * (gb + y4 - y2) ** 2
    return w.mean(), w.std() / math.sqrt(n)


def test_cokurtosis(criterion):
    rng = np.random.default_rng(88)
    ok = []
    for i in range(20):
        rho_g = rng.uniform(-0.95, 0.95)
        g = rng.uniform(0.05, 2.0)
        r = rng.uniform(-1, 1, 3)
        variant = ("minus", "plus")[i % 2]
        ref = theory.cokurtosis(rho_g, g, theory.chain_rhos(*r), variant)
        mc, se = _cokurtosis_mc(rng, rho_g, g, *r, variant, 400_000)
        ok.append(criterion(8, "sign chain and cokurtosis", abs(mc - ref) < 3 * se,
                            f"set {i:2d} {variant}: |MC - closed form| = {abs(mc - ref) / se:.2f} SE"))
    assert all(ok)


# ---------------------------------------------------------------------------
# 9: moments of the empirical variances


MOMENT_MODELS = {
    "model 1": ModelSpec(ModelKind.IID, s=S, sigma=annual_sigma_from_daily(0.03)),
    "model 2 H=0.3": ModelSpec(ModelKind.FBM_PRICE, s=S, sigma=annual_sigma_from_daily(0.03, 0.3), hurst=0.3),
    "model 3": ModelSpec(ModelKind.OU_TRADES, s=S, sigma=annual_sigma_from_daily(0.03), lambda_years=2 * TAU),
}


@pytest.mark.parametrize("name", list(MOMENT_MODELS))
def test_moment_consistency(name, criterion):
    model = MOMENT_MODELS[name]
    n, draws = 480, 10_000
    noise = "chain" if model.kind is ModelKind.OU_TRADES else None
    cfg = SimConfig(model, n_fine=n, bar_factor=1, seed=9, noise_kind=noise)
    lags = (1, 2, 4)
    vals = np.empty((draws, 3, 3))
    for t in range(draws):
        closes, _ = simkit.simulate_day(cfg, t)
        for a, L in enumerate(lags):
            for b, v in enumerate((1, 2, 3)):
                vals[t, a, b] = empirical_variance(closes, L, v).value
    ok = []
    for a, L in enumerate(lags):
        ref = theory.theoretical_variance(model, L)
        for b, v in enumerate((1, 2, 3)):
            x = vals[:, a, b]
            z = (x.mean() - ref) / (x.std(ddof=1) / math.sqrt(draws))
            ok.append(criterion(9, "moment consistency", abs(z) < 4, f"{name} L={L} v={v}: mean off by {z:+.2f} SE"))
        k2 = increment_count(n, L, 2)
        pred = theory.var_of_variance(model, L, 2) / k2
        ratio = vals[:, a, 1].var(ddof=1) / pred
        ok.append(criterion(9, "moment consistency", abs(ratio - 1) < 0.1, f"{name} L={L}: Var(V2) / theory = {ratio:.3f}"))
    assert all(ok)


# ---------------------------------------------------------------------------
# 10: fBm generator


@pytest.mark.parametrize("h", [0.3, 0.5, 0.7])
def test_fbm_generator(h, criterion):
    p = gen_fbm(1_000_001, h, 1.0, 1.0, seed=10)
    d1 = np.diff(p)
    ratio = np.var(p[4:] - p[:-4]) / np.var(d1)
    c1 = _lag_corr(d1, 1)
    ok = [
        criterion(10, "fBm generator", abs(ratio / 4 ** (2 * h) - 1) < 0.02, f"H={h}: variance ratio {ratio:.4f} vs {4 ** (2 * h):.4f}"),
        criterion(10, "fBm generator", abs(c1 - (2 ** (2 * h - 1) - 1)) < 0.01, f"H={h}: lag-1 corr {c1:+.4f} vs {2 ** (2 * h - 1) - 1:+.4f}"),
    ]
    assert all(ok)


# ---------------------------------------------------------------------------
# 11: infrequent trading


def test_infrequent_trading(criterion):
    s = 0.001
    cfg = SimConfig(ModelSpec(ModelKind.IID, s=s, sigma=annual_sigma_from_daily(0.03)), seed=11)
    df = lab.sweep_liquidity(cfg, ["s11", "cs"], [0.1, 0.4, 0.8, 1.0], 500, STUDY)
    t = df.set_index(["liquidity_prob", "estimator"])
    ok = []
    for pi in (0.1, 0.4, 0.8, 1.0):
        rel = t.loc[(pi, "s11"), "mean"] / s - 1
        ok.append(criterion(11, "infrequent trading", abs(rel) < 0.25, f"pi={pi}: S11 mean off by {rel:+.1%}"))
    e_cs = abs(t.loc[(0.1, "cs"), "mean"] - s)
    e_s11 = abs(t.loc[(0.1, "s11"), "mean"] - s)
    ok.append(criterion(11, "infrequent trading", e_cs >= 3 * e_s11, f"pi=0.1: CS error {e_cs:.2e} vs S11 {e_s11:.2e}"))
    assert all(ok)


# ---------------------------------------------------------------------------
# 12: derivative of the finite geometric sum


def test_f_prime(criterion):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-2, 2)
        while abs(x) < 0.05:
            x = rng.uniform(-2, 2)
        L = int(rng.integers(2, 30))
        h = 1e-4 * max(1.0, abs(x))
        # five-point central difference of the closed form
        fd = (-theory.f_closed(x + 2 * h, L) + 8 * theory.f_closed(x + h, L)
              - 8 * theory.f_closed(x - h, L) + theory.f_closed(x - 2 * h, L)) / (12 * h)
        worst = max(worst, abs(theory.f_sum_prime(x, L) / fd - 1))
    assert criterion(12, "derivative of the geometric sum", worst < 1e-8, f"worst relative gap {worst:.1e} over 100 points")


# ---------------------------------------------------------------------------
# 13: full fit on noiseless curves


def test_full_fit_recovery(criterion):
    ok = []
    for h in (0.3, 0.5, 0.7):
        for lam in (0.5, 5.0):
            for s in (0.0, 0.005):
                for sigma in (0.1, 0.3):
                    m = ModelSpec(ModelKind.FULL, s=s, sigma=sigma, hurst=h, lambda_years=lam * TAU)
                    fit = spreads.s2_full_fit(theory.variance_curve(m, range(1, 11)), 10, 1, FitOptions(tau=TAU))
                    err = abs(fit.s_squared - s * s)
                    ok.append(criterion(13, "full-fit recovery", err < 1e-8 and fit.objective < 1e-20,
                                        f"H={h} lambda={lam}tau S={s} sigma={sigma}: |dS2| {err:.1e} obj {fit.objective:.1e}"))
    assert all(ok)
