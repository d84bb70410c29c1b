"""Smoke test for the pybuzzcheck extension.

Build first, either with maturin (`maturin develop -m crates/py/Cargo.toml`)
or with cargo:

    cargo build -p pybuzzcheck --release --features extension-module
    cp target/release/libpybuzzcheck.so python/pybuzzcheck.so

then run `python python/smoke_test.py` from the repository root.
"""

import json
import math
import os
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

import pybuzzcheck as bz  # noqa: E402


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok  ", msg)


def main():
    check(abs(bz.implied_probability(1.25) - 0.8) < 1e-12, "implied probability of 1.25 is 0.8")
    check(bz.rank_distance(1, None) == -1.0, "rank distance against an unranked player")
    wb = bz.wikibuzz(39955, 26.5, 39, 27)
    check(abs(wb - 6.93) < 0.03, f"wikibuzz example {wb:.4f}")
    check(bz.kelly_fraction(0.4, 2.0) == 0.0, "no bet without an edge")
    f = bz.kelly_fraction(0.6, 2.0)
    check(abs(f - 0.2) < 1e-12, "kelly fraction at even odds")
    check(abs(bz.settle_bet(f, 2.0, True) - 0.2) < 1e-12, "winning bet profit")
    check(abs(bz.settle_bet(f, 2.0, False) + 0.2) < 1e-12, "losing bet loss")

    raw = bz.Dataset.synthetic(n_matches=1200, seed=3, anomaly_every=50)
    check(len(raw) == 1200, repr(raw))
    cleaned, checkpoints, sigma = raw.clean()
    check(checkpoints == sorted(checkpoints, reverse=True), f"cleaning checkpoints {checkpoints}")
    check(sigma is not None and sigma > 0, f"sigma {sigma}")
    check(len(cleaned) < len(raw), "cleaning removed anomalies")

    fit = bz.fit(cleaned, "2016-01-01", "2018-12-31")
    coefs = fit.coefficients()
    check({"z", "rank_dist", "wikibuzz", "const"} <= set(coefs), f"coefficients {sorted(coefs)}")
    check(all(se > 0 for se in fit.standard_errors().values()), "positive standard errors")
    check(all(0 <= p <= 1 for p in fit.p_values().values()), "p-values in [0, 1]")
    json.loads(fit.to_json())

    s = bz.backtest(cleaned, p_range="[0.2,0.8]", trials=500, seed=42)
    check(s.bets_placed <= s.n_odds, repr(s))
    if s.investment > 0:
        check(math.isclose(s.roi_pct / 100 * s.investment, s.absolute_return, rel_tol=1e-9, abs_tol=1e-12),
              "ROI times investment equals return")
        check(s.p_bs is not None and 0 <= s.p_bs <= 1, f"p_bs {s.p_bs}")
    s2 = bz.backtest(cleaned, p_range="[0.2,0.8]", trials=500, seed=42)
    check(s2.p_bs == s.p_bs and s2.absolute_return == s.absolute_return, "seeded runs are reproducible")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "corpus.csv")
        cleaned.save(path)
        again = bz.Dataset.load(path)
        check(again.fingerprint() == cleaned.fingerprint(), "canonical round trip keeps the fingerprint")

    try:
        bz.Dataset.load("/nonexistent/matches.csv")
    except bz.BuzzcheckError as e:
        check("nonexistent" in str(e), "missing file raises BuzzcheckError")
    else:
        raise AssertionError("loading a missing file should fail")

    print("smoke test passed")


if __name__ == "__main__":
    main()
