#!/usr/bin/env python3
"""
실험 harness 테스트 - 결정성, 병합, worker 수 독립성, theorem check, martingale
"""
import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.core.errors import BadParameter, BarUnsupported, CDIRequired, ConfigError, ZeroReplicates
from app.services.experiments import (
    ExperimentSpec,
    martingale_diagnostic,
    merge_results,
    replicate_seed,
    run_experiment,
    summarize,
    theorem_check,
    with_offset,
)
from app.services.measures import validate_measure
from app.services.simulator import UntilTauStar

KINGMAN = validate_measure({"family": "kingman"})
BETA = validate_measure({"family": "beta", "alpha": 1.5})
BS = validate_measure({"family": "bolthausen_sznitman"})


def make_spec(**overrides):
    fields = dict(measure=BETA, n_grid=(10, 20), gamma=1.0, replicates=40, master_seed=42, statistic="mutations")
    fields.update(overrides)
    return ExperimentSpec(**fields)


def test_zero_replicates():
    with pytest.raises(ZeroReplicates):
        run_experiment(make_spec(replicates=0))


@pytest.mark.parametrize("overrides", [
    {"n_grid": ()},
    {"n_grid": (20, 10)},
    {"gamma": -1.0},
    {"statistic": "variance"},
    {"statistic": "spectrum_sites:0"},
])
def test_invalid_specs(overrides):
    with pytest.raises(BadParameter):
        make_spec(**overrides).validate()


def test_unknown_tolerance_key():
    with pytest.raises(ConfigError):
        make_spec(tolerances={"T3_bnd": 0.1}).validate()


def test_spec_document_round_trip():
    spec = make_spec(stop=UntilTauStar(), statistic="spectrum_alleles:2", tolerances={"T3_band": 0.2})
    assert ExperimentSpec.from_document(spec.to_document().model_dump()) == spec


def test_from_document_rejects_unknown_key():
    doc = make_spec().to_document().model_dump()
    doc["replicats"] = 3
    with pytest.raises(ConfigError, match="replicats"):
        ExperimentSpec.from_document(doc)


def test_replicate_seeds_are_distinct():
    seeds = {replicate_seed(7, n, i) for n in (10, 20) for i in range(100)}
    assert len(seeds) == 200


def test_identical_spec_identical_result():
    spec = make_spec()
    assert run_experiment(spec).values == run_experiment(spec).values


def test_split_runs_merge_to_single_run():
    spec = make_spec(replicates=30)
    whole = run_experiment(spec)
    first = run_experiment(with_offset(spec, 0, 12))
    second = run_experiment(with_offset(spec, 12, 18))
    merged = merge_results(second, first)
    assert merged.values == whole.values
    assert [s.estimate for s in merged.summary()] == [s.estimate for s in whole.summary()]


def test_overlapping_ranges_are_not_merged():
    spec = make_spec(replicates=10)
    with pytest.raises(BadParameter):
        merge_results(run_experiment(spec), run_experiment(with_offset(spec, 5, 10)))


def test_worker_count_does_not_change_results():
    spec = make_spec(replicates=16, n_grid=(15,))
    assert run_experiment(spec, workers=1).values == run_experiment(spec, workers=3).values


def test_standard_error_scales_with_replicates():
    """replicate 4배 -> 표준오차 절반 (20% 이내)"""
    small = run_experiment(make_spec(replicates=500, n_grid=(30,), statistic="tree_length"))
    large = run_experiment(make_spec(replicates=2000, n_grid=(30,), statistic="tree_length"))
    ratio = small.summary()[0].stderr / large.summary()[0].stderr
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_summary_ignores_nan():
    mean, stderr, median = summarize([1.0, math.nan, 3.0])
    assert mean == 2.0
    assert median == 2.0
    assert summarize([]) == (None, None, None)


def test_spectrum_statistic():
    result = run_experiment(make_spec(statistic="spectrum_sites:1", stop=UntilTauStar()))
    assert all(v >= 0 for per_rep in result.values.values() for v in per_rep.values())


def test_length_ratio_needs_mutations():
    with pytest.raises(BadParameter):
        run_experiment(make_spec(statistic="length_ratio", gamma=0.0))


def test_replicate_rows_carry_indices():
    result = run_experiment(make_spec(replicates=3, n_grid=(5,)))
    assert [row["replicate"] for row in result.replicate_rows()] == [0, 1, 2]


@pytest.mark.slow
def test_kingman_harmonic_length_ratio():
    spec = make_spec(measure=KINGMAN, n_grid=(1000,), gamma=0.5, replicates=10000, statistic="harmonic_length_ratio")
    row = run_experiment(spec).summary()[0]
    assert row.estimate == pytest.approx(1.0, abs=0.02)


def test_family_checks_need_cdi():
    with pytest.raises(CDIRequired):
        theorem_check(make_spec(measure=BS), "T3_family_counts")


def test_unknown_check():
    with pytest.raises(BadParameter):
        theorem_check(make_spec(), "T9_everything")


def test_gamma_zero_is_not_applicable():
    verdict = theorem_check(make_spec(gamma=0.0), "T1_closed_fraction")
    assert verdict.applicable is False
    assert verdict.passed is None


def test_partial_time_divergence_floor():
    # ell_t(10) = 2 ln 1.5 for Kingman at t = 0.1
    spec = make_spec(measure=KINGMAN, n_grid=(10,), t_sequence=(0.1,))
    with pytest.raises(BadParameter, match="divergence floor"):
        theorem_check(spec, "T4_partial_time")


def test_speed_envelope_runs_without_mutations():
    spec = make_spec(measure=KINGMAN, n_grid=(50,), gamma=0.0, replicates=20, s_grid=(0.001, 0.01))
    verdict = theorem_check(spec, "P2_speed_envelope")
    assert verdict.applicable
    assert len(verdict.estimates) == 2


def test_family_counts_report_quartiles():
    spec = make_spec(measure=KINGMAN, n_grid=(20, 40), replicates=30)
    verdict = theorem_check(spec, "T3_family_counts")
    assert [row["n"] for row in verdict.estimates] == [20, 40]
    assert set(verdict.estimates[0]["M_o/M"]) == {"median", "q1", "q3", "mean"}
    assert verdict.passed in (True, False)


@pytest.mark.slow
def test_beta_family_counts_converge():
    spec = make_spec(n_grid=(100, 1000, 10000), replicates=500)
    verdict = theorem_check(spec, "T3_family_counts")
    last = verdict.estimates[-1]
    for key in ("M/(gamma ell)", "M_o/(gamma ell)"):
        assert 0.75 <= last[key]["median"] <= 1.25
        gaps = [abs(row[key]["median"] - 1.0) for row in verdict.estimates]
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert last["M_o/M"]["median"] >= 0.9
    assert verdict.passed


@pytest.mark.slow
def test_beta_spectrum_matches_prediction():
    spec = make_spec(n_grid=(10000,), replicates=500, beta=0.5)
    verdict = theorem_check(spec, "C7_spectrum")
    observed = {row["r"]: row["observed"] for row in verdict.estimates}
    # beta Gamma(r - beta) / r! at beta = 1/2
    assert observed[1] == pytest.approx(0.5 * math.gamma(0.5), rel=0.25)
    assert observed[2] == pytest.approx(0.5 * math.gamma(1.5) / 2.0, rel=0.30)
    assert verdict.passed


@pytest.mark.slow
def test_beta_speed_envelope_exceedance():
    spec = make_spec(n_grid=(10000,), replicates=200, s_grid=(1e-4, 1e-3))
    verdict = theorem_check(spec, "P2_speed_envelope")
    freqs = {row["s"]: row["exceedance"] for row in verdict.estimates}
    assert freqs[1e-4] <= 0.1 and freqs[1e-3] <= 0.1
    assert freqs[1e-4] <= freqs[1e-3]


@pytest.mark.slow
def test_beta_closed_fraction_shrinks_with_time():
    spec = make_spec(n_grid=(10000,), replicates=200, t_grid=(0.001, 0.01, 0.1))
    verdict = theorem_check(spec, "T1_closed_fraction")
    ratios = [row["closed_ratio_mean"] for row in sorted(verdict.estimates, key=lambda row: row["t"])]
    assert all(a <= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[0] <= 0.15


def test_martingale_at_zero_time():
    result = martingale_diagnostic(BETA, 20, 0.0, 10, 1)
    assert result.mean == 0.0


def test_martingale_needs_lambda_measure():
    xi = validate_measure({"family": "xi_atoms", "atoms": [[[0.5, 0.5], 1.0]]})
    with pytest.raises(BarUnsupported):
        martingale_diagnostic(xi, 20, 1.0, 10, 1)


def test_kingman_martingale_is_centred():
    result = martingale_diagnostic(KINGMAN, 50, 0.5, 4000, 2718)
    assert abs(result.mean) <= 3 * result.stderr


@pytest.mark.slow
def test_bolthausen_sznitman_martingale_is_centred():
    result = martingale_diagnostic(BS, 500, 1.0, 10000, 99)
    assert abs(result.mean) <= 3 * result.stderr
