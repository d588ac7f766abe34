import csv
import random
from decimal import Decimal
from statistics import median

import pytest
from hypothesis import given, settings, strategies as st

from rtbcost.costs import (
    ArpuFactors,
    ModelRequired,
    OutOfWindow,
    TimeShiftCoefficient,
    UserCostLedger,
    UserCostReport,
    Window,
    accumulate,
    cohort_stats,
    compute_time_shift,
    extrapolate_arpu,
    from_micros,
    percentiles,
    report,
    time_shift,
    to_micros,
    write_cohort_csvs,
)
from rtbcost.nurl import Cleartext, Encrypted, PriceNotification


class FixedModel:
    def __init__(self, value=1.5):
        self.value = value

    def estimate(self, n, core):
        return self.value


class TokenModel:
    """Deterministic per-token estimate, stands in for a trained model."""

    def estimate(self, n, core):
        return [0.2, 0.6, 1.5, 4.0][sum(map(ord, n.price.token)) % 4]


def note(price, ts=0, uid="u", url=None):
    return PriceNotification(uid, ts, "x", price, url or f"http://x.com/?t={ts}")


def test_cleartext_example():
    led = UserCostLedger("u")
    accumulate(led, note(Cleartext(Decimal("0.95"))))
    assert report(led).C_u == Decimal("0.95")


def test_encrypted_uses_model():
    led = UserCostLedger("u")
    led.accumulate(note(Encrypted("abcdefgh")), FixedModel(1.5))
    assert report(led).E_u == Decimal("1.5")


def test_model_required():
    with pytest.raises(ModelRequired):
        UserCostLedger("u").accumulate(note(Encrypted("abcdefgh")))


def test_window_and_user_checks():
    led = UserCostLedger("u", Window(10, 20))
    with pytest.raises(OutOfWindow):
        led.accumulate(note(Cleartext(Decimal(1)), ts=21))
    led.accumulate(note(Cleartext(Decimal(1)), ts=20))
    with pytest.raises(ValueError):
        led.accumulate(note(Cleartext(Decimal(1)), ts=15, uid="v"))
    with pytest.raises(ValueError):
        Window(5, 1)


def test_duplicates_ignored():
    led = UserCostLedger("u")
    n = note(Cleartext(Decimal("2")))
    assert led.accumulate(n) and not led.accumulate(n)
    assert report(led).n_cleartext == 1


def _mixed(n=1000, seed=0):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        if rng.random() < 0.6:
            out.append(note(Cleartext(Decimal(rng.randint(1, 5_000_000)) / 10**6), ts=i))
        else:
            out.append(note(Encrypted("".join(rng.choice("abcdefXYZ019_-") for _ in range(16))), ts=i))
    return out


def test_partition_sum_oracle():
    notes = _mixed()
    model = TokenModel()
    led = UserCostLedger("u")
    for n in notes:
        led.accumulate(n, model)
    c = sum((n.price.cpm for n in notes if isinstance(n.price, Cleartext)), Decimal(0))
    e = sum((Decimal(str(model.estimate(n, None))) for n in notes if isinstance(n.price, Encrypted)), Decimal(0))
    r = report(led)
    assert (r.C_u, r.E_u, r.V_u) == (c, e, c + e)


@settings(max_examples=25, deadline=None)
@given(st.randoms(use_true_random=False))
def test_permutation_invariant(rnd):
    notes = _mixed(200, seed=1)
    base = UserCostLedger("u")
    for n in notes:
        base.accumulate(n, TokenModel())
    shuffled = list(notes)
    rnd.shuffle(shuffled)
    other = UserCostLedger("u")
    for n in shuffled:
        other.accumulate(n, TokenModel())
    assert report(other) == report(base)
    assert report(other).v_micros == report(other).c_micros + report(other).e_micros


def test_micros():
    assert to_micros("0.95") == 950_000
    assert to_micros(0.1 + 0.2) == 300_000
    assert to_micros(Decimal("0.0000005")) == 0  # half-even
    assert to_micros(Decimal("0.0000015")) == 2
    assert from_micros(1_500_000) == Decimal("1.5")


def test_single_user_report():
    r = UserCostReport("u", Window.unbounded(), 2_000_000, 1_000_000, 3, 1)
    assert r.V_u == Decimal(3) and r.usd_equivalent == Decimal("0.003")
    assert r.avg_cpm("cleartext") == pytest.approx(2 / 3)
    assert UserCostReport.from_dict(r.to_dict()) == r
    assert r.to_dict()["window"] is None


def test_time_shift_ratio():
    coeff = compute_time_shift([0.3, 0.4, 0.5], [0.45, 0.5, 0.7])
    assert coeff.ratio == pytest.approx(1.25)
    assert time_shift([1.0, 2.0], TimeShiftCoefficient(1.0)) == [1.0, 2.0]
    with pytest.raises(ValueError):
        TimeShiftCoefficient(0.0)


def test_time_shift_median_oracle():
    rng = random.Random(2)
    hist = [rng.lognormvariate(-1, 0.5) for _ in range(501)]
    ref = [rng.lognormvariate(-0.7, 0.5) for _ in range(301)]
    shifted = time_shift(hist, compute_time_shift(hist, ref))
    assert abs(median(shifted) - median(ref)) < 1e-9


def test_time_shift_ledger_flag():
    led = UserCostLedger("u")
    led.accumulate(note(Cleartext(Decimal("0.4")), ts=1))
    led.accumulate(note(Encrypted("abcdefgh"), ts=2), FixedModel(1.0))
    c = TimeShiftCoefficient(1.25)
    a = report(time_shift(led, c))
    assert (a.C_u, a.E_u) == (Decimal("0.5"), Decimal("1"))
    b = report(time_shift(led, c, include_encrypted=True))
    assert (b.C_u, b.E_u) == (Decimal("0.5"), Decimal("1.25"))
    assert report(led).C_u == Decimal("0.4")


def test_cohort_median_oracle():
    rng = random.Random(4)
    reps = [UserCostReport(f"u{i}", Window.unbounded(), rng.randint(0, 10**8), rng.randint(0, 10**8), 1, 1)
            for i in range(1001)]
    s = cohort_stats(reps)
    v = sorted(r.v_micros / 10**6 for r in reps)
    assert s.percentiles["V_u"]["p50"] == v[500]
    assert s.percentiles["V_u"]["p25"] == pytest.approx(v[250])
    assert s.users == 1001 and len(s.scatter) == 1001


def test_percentiles_match_sort_oracle():
    rng = random.Random(6)
    vals = [rng.random() for _ in range(100_001)]
    srt = sorted(vals)
    p = percentiles(vals)
    for q in (5, 10, 25, 50, 75, 90, 95):
        assert p[f"p{q}"] == pytest.approx(srt[q * 1000], abs=1e-12)


def test_empty_cohort(tmp_path):
    s = cohort_stats([])
    assert s.users == 0 and s.percentiles == {} and s.cdf == {}
    paths = write_cohort_csvs(s, tmp_path)
    assert [p.name for p in paths] == ["cohort.csv", "cohort_cdf.csv", "iab_prices.csv", "user_scatter.csv"]


def test_cohort_csvs(tmp_path):
    led = UserCostLedger("u")
    led.accumulate(note(Cleartext(Decimal("2")), ts=1))
    led.accumulate(note(Encrypted("abcdefgh"), ts=2), FixedModel(1.0))
    s = cohort_stats([report(led)], [led])
    write_cohort_csvs(s, tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "cohort.csv")))
    assert rows[0]["metric"] == "V_u" and float(rows[0]["p50"]) == 3.0
    iab = list(csv.DictReader(open(tmp_path / "iab_prices.csv")))
    assert iab[0]["iab"] == "other" and iab[0]["count"] == "2"


def test_arpu():
    f = ArpuFactors()
    assert f.product == pytest.approx(0.83 * 0.51 * 0.40 * 0.45 * 0.20)
    assert extrapolate_arpu(8) == pytest.approx(0.525, abs=1e-3)
    assert extrapolate_arpu(102) == pytest.approx(6.693, abs=1e-3)
    assert abs(extrapolate_arpu(8) / 0.54 - 1) <= 0.10
    assert abs(extrapolate_arpu(102) / 6.85 - 1) <= 0.10
    assert extrapolate_arpu(0) == 0
    with pytest.raises(ValueError):
        ArpuFactors(online_share=1.2)
    with pytest.raises(ValueError):
        extrapolate_arpu(-1)
