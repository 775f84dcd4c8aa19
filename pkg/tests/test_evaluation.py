import csv
import itertools
import json
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qplanner.envs import SyntheticEnvironment, TaskSample, gen_synthetic, make_env
from qplanner.errors import ExecutorTimeout, LengthMismatch, NotAPermutation
from qplanner.evaluation import (
    FILTER_PRESETS,
    ComplexityFilter,
    FixedSequencePolicy,
    RandomPolicy,
    bac,
    cac,
    concordant_pairs,
    evaluate_policy,
    slot_f1,
    soc,
    write_report_csv,
    write_report_json,
)
from qplanner.executor import ScriptedExecutor
from qplanner.mdp import ActionSpace, StateRecord, TaskKind


def brute_force_concordant(pred, gold):
    """Count pairs (x, y) with x before y in both orders, straight from the definition."""
    pos_p = {x: i for i, x in enumerate(pred)}
    pos_g = {x: i for i, x in enumerate(gold)}
    return sum(1 for x in gold for y in gold
               if pos_g[x] < pos_g[y] and pos_p[x] < pos_p[y])


# -- slot F1 ----------------------------------------------------------------------------

def test_slot_f1_hand_counted():
    preds = [{"subject": "Maria", "object": "Porto"}, {"subject": "Ana"}]
    golds = [{"subject": "Maria", "object": "Lisbon"}, {"subject": "Ana", "object": "Braga"}]
    # TP=2 (Maria, Ana), FP=1 (Porto), FN=2 (Lisbon, Braga).
    p, r, f1 = slot_f1(preds, golds)
    assert Fraction(p).limit_denominator() == Fraction(2, 3)
    assert Fraction(r).limit_denominator() == Fraction(1, 2)
    assert f1 == 4 / 7


def test_slot_f1_requires_exact_match():
    assert slot_f1([{"subject": "maria"}], [{"subject": "Maria"}])[2] == 0.0
    assert slot_f1([{"subject": " Maria "}], [{"subject": "Maria"}])[2] == 1.0


def test_slot_f1_zero_denominators():
    assert slot_f1([{}], [{}]) == (0.0, 0.0, 0.0)
    assert slot_f1([{"subject": ""}], [{"subject": "x"}]) == (0.0, 0.0, 0.0)


def test_slot_f1_length_mismatch():
    with pytest.raises(LengthMismatch):
        slot_f1([{}], [])


# -- CAC / SOC / BAC -----------------------------------------------------------------

def test_cac_counts_exact_contexts():
    assert cac(["a b", "c"], ["a  b", "d"]) == 0.5
    assert cac([], []) == 0.0


def test_soc_identity_and_reversal():
    x = ["s1", "s2", "s3", "s4"]
    assert soc([x], [x]) == 1.0
    assert soc([x[::-1]], [x]) == 0.0


def test_soc_single_swap_of_four():
    # One adjacent swap breaks exactly one of six pairs.
    assert soc([[0, 2, 1, 3]], [[0, 1, 2, 3]]) == 5 / 6


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_concordant_pairs_match_brute_force_all_permutations(n):
    gold = list(range(n))
    for pred in itertools.permutations(gold):
        assert concordant_pairs(pred, gold) == brute_force_concordant(pred, gold)
        assert soc([list(pred)], [gold]) == brute_force_concordant(pred, gold) / comb(n, 2)


@given(st.permutations(list(range(6))))
def test_soc_is_one_minus_normalized_kendall_distance(pred):
    gold = list(range(6))
    discordant = sum(1 for i, j in itertools.combinations(range(6), 2) if pred[i] > pred[j])
    assert soc([list(pred)], [gold]) == pytest.approx(1 - discordant / 15)


@given(st.lists(st.permutations(list(range(4))), min_size=1, max_size=6), st.randoms())
def test_soc_invariant_to_sample_order(preds, rnd):
    golds = [list(range(4))] * len(preds)
    pairs = list(zip(preds, golds))
    rnd.shuffle(pairs)
    assert soc([list(p) for p, _ in pairs], [g for _, g in pairs]) == pytest.approx(
        soc([list(p) for p in preds], golds))


def test_soc_rejects_non_permutations():
    with pytest.raises(NotAPermutation):
        soc([[0, 1, 1]], [[0, 1, 2]])
    with pytest.raises(NotAPermutation):
        soc([[0]], [[0]])


def test_bac_micro_average():
    golds = [{1: "a", 2: "b", 3: "c", 4: "d", 5: "e"}, {1: "f", 2: "g", 3: "h", 4: "i", 5: "j"}]
    filled = [{1: "a", 2: "b", 3: "c", 4: "d", 5: "x"}, {1: "f", 2: "g", 3: "h", 4: "y", 5: "z"}]
    assert bac(filled, golds) == 7 / 10


def test_bac_zero_blanks():
    assert bac([{}], [{}]) == 0.0


# -- policies -------------------------------------------------------------------------------

def test_fixed_policy_respects_priority_then_id():
    space = ActionSpace.from_surfaces(["extract object", "extract subject", "other"])
    state = StateRecord("t", "")
    assert FixedSequencePolicy()(state, space).action_id == 0
    assert FixedSequencePolicy(["extract subject"])(state, space).surface == "extract subject"


def test_random_policy_stays_in_space():
    space = ActionSpace.from_surfaces(["a", "b", "c"])
    pol = RandomPolicy(3)
    assert all(pol(StateRecord("t", ""), space) in space for _ in range(50))


# -- evaluate_policy ---------------------------------------------------------------------------

DONE = ScriptedExecutor(default="Answer: done")


def test_random_policy_cac_near_one_over_k_factorial():
    data = gen_synthetic(3, 3000, seed=5)
    rep = evaluate_policy(RandomPolicy(0), data, SyntheticEnvironment(), DONE)
    p, n = 1 / 6, len(data)
    assert abs(rep.cac - p) <= 3 * np.sqrt(p * (1 - p) / n)


def _s2p(i, sentences):
    return TaskSample(f"s2p-{i}", TaskKind.STC_S2P, "", "", tuple(sentences),
                      {"order": list(sentences)})


def test_fixed_policy_on_unshuffled_s2p_is_perfect():
    data = [_s2p(i, [f"Sentence {j} of story {i}." for j in range(4)]) for i in range(5)]
    rep = evaluate_policy(FixedSequencePolicy(), data, make_env("stc_s2p"), None)
    assert rep.soc == 1.0 and rep.cac == 1.0
    assert "f1" not in rep.to_dict() and "bac" not in rep.to_dict()


def test_sfb_scoring_and_failed_count():
    sample = TaskSample("sfb-1", TaskKind.STC_SFB, "Start. [blank] Middle. [blank] End.", "",
                        ("First fill.", "Second fill."),
                        {"blanks": {1: "First fill.", 2: "Second fill."}})
    # Always answers blank 1: the first sentence lands, the second cannot.
    rep = evaluate_policy(FixedSequencePolicy(), [sample], make_env("stc_sfb"),
                          ScriptedExecutor(default="Answer: 1"))
    assert rep.bac == 0.5 and rep.cac == 0.0


def test_failed_samples_count_as_wrong(re_sample, re_oracle):
    def broken(prompt, kind=None):
        raise ExecutorTimeout("down")

    env = make_env("re_triple")
    good = evaluate_policy(FixedSequencePolicy(), [re_sample], env, re_oracle)
    assert good.f1 == 1.0
    bad = evaluate_policy(FixedSequencePolicy(), [re_sample], env, broken)
    assert bad.n_failed == 1 and bad.f1 == 0.0 and bad.zero_denominator


def test_complexity_filters():
    data = gen_synthetic(3, 4, seed=0) + gen_synthetic(6, 2, seed=0, prefix="big")
    rep = evaluate_policy(RandomPolicy(0), data, SyntheticEnvironment(), DONE,
                          FILTER_PRESETS["mrc_complex"])
    assert rep.n_samples == 2
    assert rep.filter == {"name": "mrc_complex", "min_candidates": 6}
    triples = ComplexityFilter("t", min_triples=11)
    s = TaskSample("x", TaskKind.RE_TRIPLE, "c", "r", ("subject", "object"), {},
                   meta={"triples_in_context": 12})
    assert triples.keep(s) and not triples.keep(TaskSample("y", TaskKind.RE_TRIPLE, "c", "r",
                                                           ("subject",), {}))


def test_report_writers(tmp_path):
    rep = evaluate_policy(RandomPolicy(1), gen_synthetic(3, 20, seed=1), SyntheticEnvironment(),
                          DONE, metadata={"policy": "random"})
    write_report_json(rep, tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["kind"] == "synthetic" and data["n_samples"] == 20
    assert 0 <= data["soc"] <= 1 and data["metadata"] == {"policy": "random"}
    write_report_csv([rep, rep], tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 2 and float(rows[0]["cac"]) == rep.cac and rows[0]["f1"] == ""
