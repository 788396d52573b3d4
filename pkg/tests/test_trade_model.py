from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from oracles import pair_oracle
from repomech.generate import random_trades
from repomech.trade_model import (DuplicateTradeId, NonPositivePrice, NonPositiveQuantity, RepoTrade, SelfTrade,
                                  bilateral_net, book_to_csv, load_book, pair_residuals, parse_book_csv,
                                  parse_book_json, repo_rate, trade_key, validate_book)

D = Decimal


def trade(tid="1", lender="a", borrower="b", p1="1.00", p2="1.10", qty=1):
    return RepoTrade(tid, lender, borrower, D(p1), D(p2), qty)


def test_fixture_loads_eleven_trades(book):
    assert len(book) == 11
    assert book.agents == ("f", "g", "h", "i", "j", "k", "l")


@pytest.mark.parametrize("bad, exc", [
    (dict(lender="a", borrower="a"), SelfTrade),
    (dict(qty=0), NonPositiveQuantity),
    (dict(qty=-3), NonPositiveQuantity),
    (dict(p1="0"), NonPositivePrice),
    (dict(p2="-1"), NonPositivePrice),
])
def test_validation_rejects(bad, exc):
    with pytest.raises(exc) as info:
        validate_book([trade(**bad)])
    assert info.value.trade_id == "1"


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateTradeId):
        validate_book([trade("7"), trade("7", lender="c")])


def test_repo_rate_is_exact():
    assert repo_rate(trade(p1="4.90", p2="5.25")) == Fraction(35, 490)
    assert repo_rate(trade(p1="3.00", p2="3.00")) == 0


def test_trade_key_natural_order():
    assert sorted(["10", "9", "1", "2a", "2"], key=trade_key) == ["1", "2", "2a", "9", "10"]


def test_single_trade_nets_to_itself():
    (e,) = bilateral_net(validate_book([trade(qty=4, p1="2.00", p2="2.50")]))
    assert (e.source, e.target, e.qty, e.m2, e.m1) == ("a", "b", 4, D("10.00"), D("8.00"))


def test_reverse_trades_net_against_each_other():
    book = validate_book([trade("1", "a", "b", "2.00", "2.20", 5), trade("2", "b", "a", "3.00", "3.10", 2)])
    (e,) = bilateral_net(book)
    assert (e.source, e.target, e.qty) == ("a", "b", 3)
    assert e.m2 == 5 * D("2.20") - 2 * D("3.10")
    assert [a.qty for a in e.allocations] == [5, -2]


def test_fully_cancelling_pair_is_reported_as_residual():
    book = validate_book([trade("1", "a", "b", "2.00", "2.20", 2), trade("2", "b", "a", "2.00", "2.30", 2)])
    assert bilateral_net(book) == []
    (r,) = pair_residuals(book)
    assert (r.first, r.second, r.m2, r.m1) == ("a", "b", D("-0.20"), D("0.00"))


def test_csv_round_trip(book):
    again = validate_book(parse_book_csv(book_to_csv(book)))
    assert again == book


def test_csv_rejects_wrong_header():
    with pytest.raises(ValueError, match="header"):
        parse_book_csv("id,lender,borrower,p1,p2,q\n")


def test_csv_rejects_excess_precision():
    with pytest.raises(ValueError, match="4 decimal"):
        parse_book_csv("trade_id,lender,borrower,first_leg_price,second_leg_price,quantity\n1,a,b,1.00001,1,1\n")


def test_json_ingestion(tmp_path):
    p = tmp_path / "b.json"
    p.write_text('{"trades": [{"trade_id": 1, "lender": "a", "borrower": "b", '
                 '"first_leg_price": "1.5", "second_leg_price": 1.75, "quantity": 2}]}')
    (t,) = load_book(p)
    assert (t.trade_id, t.p1, t.p2, t.qty) == ("1", D("1.5000"), D("1.7500"), 2)
    assert parse_book_json("[]") == []


def test_empty_csv_is_an_empty_book():
    assert parse_book_csv("") == []
    assert bilateral_net(validate_book([])) == []


@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(0, 30))
def test_netting_matches_raw_pair_sums(seed, n_agents, n_trades):
    trades = random_trades(seed, n_agents, n_trades)
    edges = bilateral_net(validate_book(trades))
    assert {e.pair: (e.qty, e.m2, e.m1) for e in edges} == pair_oracle(trades)
    assert all(e.qty > 0 for e in edges)
    assert len({frozenset(e.pair) for e in edges}) == len(edges)
