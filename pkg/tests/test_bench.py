from __future__ import annotations

import json
import random
import re
from fractions import Fraction

import pytest

from confloc.anomaly import token_present
from confloc.bench import (
    DEFAULT_TEMPLATE_POOL,
    EvalResult,
    GroundTruth,
    MutateType,
    MutationStrategy,
    SymptomProfile,
    ValueType,
    accuracy,
    eval_case,
    eval_cases,
    fp_rate,
    gen_case,
    gen_synthetic_logs,
    make_mutated_case,
    metrics_to_json,
    mutate_value,
    settings_to_xml,
)
from confloc.configs import ConfigSettings, EntrySource, PropertyCatalog, load_settings, segment_name
from confloc.errors import EmptyDenominatorError, NotApplicableError, UniverseTooSmallError
from confloc.reporting import Flow
from conftest import DATA_DIR

BASE = load_settings(DATA_DIR / "bench" / "base_settings.xml")
CATALOG = PropertyCatalog.from_json(DATA_DIR / "bench" / "catalog.json")


class TestMutateValue:
    def test_zero_is_literal_zero(self):
        assert mutate_value(MutationStrategy.of(ValueType.ZERO), random.Random(1)) == "0"

    def test_empty_is_empty(self):
        assert mutate_value(MutationStrategy.of(ValueType.EMPTY), random.Random(1)) == ""

    def test_string_violation_shape(self):
        value = mutate_value(MutationStrategy.of(ValueType.STRING_VIOLATION), random.Random(1))
        assert len(value) == 5
        assert value.isalpha() and value.islower()

    def test_seed_determinism(self):
        a = mutate_value(MutationStrategy.of(ValueType.POSITIVE), random.Random(42))
        b = mutate_value(MutationStrategy.of(ValueType.POSITIVE), random.Random(42))
        assert a == b

    def test_compliance_ranges(self):
        rng = random.Random(7)
        for _ in range(200):
            positive = float(mutate_value(MutationStrategy.of(ValueType.POSITIVE), rng))
            negative = float(mutate_value(MutationStrategy.of(ValueType.NEGATIVE), rng))
            assert 0 < positive < 3.4e38
            assert -3.4e38 < negative < 0

    def test_violation_values_never_parse_as_numbers(self):
        rng = random.Random(9)
        for _ in range(200):
            value = mutate_value(MutationStrategy.of(ValueType.STRING_VIOLATION), rng)
            with pytest.raises(ValueError):
                float(value)
        with pytest.raises(ValueError):
            float(mutate_value(MutationStrategy.of(ValueType.EMPTY), rng))

    def test_strategy_type_pairing_enforced(self):
        with pytest.raises(ValueError):
            MutationStrategy(mutate_type=MutateType.COMPLIANCE, value_type=ValueType.EMPTY)
        with pytest.raises(ValueError):
            MutationStrategy(mutate_type=MutateType.VIOLATION, value_type=ValueType.ZERO)
        assert MutationStrategy.of(ValueType.ZERO).mutate_type is MutateType.COMPLIANCE
        assert MutationStrategy.of(ValueType.EMPTY).mutate_type is MutateType.VIOLATION


class TestMakeMutatedCase:
    def test_universe_of_ten_forces_all_others_as_decoys(self):
        universe = PropertyCatalog(universe=tuple(f"ns.prop{i}.knob{i}" for i in range(10)))
        base = ConfigSettings(entries=())
        mutated, decoys, truth = make_mutated_case(base, universe, random.Random(5))
        assert len(truth.decoys) == 9
        assert {d.property for d in truth.decoys} == set(universe.universe) - {truth.trigger.property}

    def test_too_small_universe_rejected(self):
        universe = PropertyCatalog(universe=tuple(f"ns.p{i}" for i in range(9)))
        with pytest.raises(UniverseTooSmallError):
            make_mutated_case(ConfigSettings(entries=()), universe, random.Random(1))

    def test_seed_determinism(self):
        one = make_mutated_case(BASE, CATALOG, random.Random(42))
        two = make_mutated_case(BASE, CATALOG, random.Random(42))
        assert one == two

    def test_trigger_never_among_decoys_and_decoys_distinct(self):
        for seed in range(300):
            _, _, truth = make_mutated_case(BASE, CATALOG, random.Random(seed))
            names = [d.property for d in truth.decoys]
            assert truth.trigger.property not in names
            assert len(set(names)) == 9

    def test_trigger_replaces_base_value_or_is_appended(self):
        for seed in range(50):
            mutated, _, truth = make_mutated_case(BASE, CATALOG, random.Random(seed))
            assert mutated.lookup(truth.trigger.property).value == truth.trigger.value
            base_names = {e.property for e in BASE.entries}
            if truth.trigger.property in base_names:
                assert len(mutated.entries) == len(BASE.entries)
            else:
                assert len(mutated.entries) == len(BASE.entries) + 1

    def test_decoys_are_fabricated_source(self):
        _, decoys, _ = make_mutated_case(BASE, CATALOG, random.Random(3))
        assert all(e.source is EntrySource.FABRICATED for e in decoys.entries)


def truth_of(seed: int) -> GroundTruth:
    _, _, truth = make_mutated_case(BASE, CATALOG, random.Random(seed))
    return truth


class TestGenSyntheticLogs:
    def test_clean_emits_only_pool_shapes(self):
        text = gen_synthetic_logs(None, SymptomProfile.CLEAN, DEFAULT_TEMPLATE_POOL, random.Random(1))
        assert "ERROR" not in text
        first_words = {
            pattern.split()[0] for _, pattern in DEFAULT_TEMPLATE_POOL
        }
        for line in text.splitlines():
            message = line.split(": ", 1)[1]
            assert message.split()[0] in first_words

    def test_direct_names_trigger_and_value_with_anomaly_token(self):
        truth = truth_of(11)
        text = gen_synthetic_logs(truth, SymptomProfile.DIRECT, DEFAULT_TEMPLATE_POOL, random.Random(11))
        anomalous = [l for l in text.splitlines() if " ERROR " in l]
        assert anomalous
        joined = " ".join(anomalous)
        assert token_present(joined.lower(), "error")
        assert truth.trigger.property in joined
        if truth.trigger.value:
            assert truth.trigger.value in joined

    def test_indirect_has_stack_and_no_trigger_trace(self):
        header = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2} \w+ \S+: ")
        for seed in range(40):
            truth = truth_of(seed)
            text = gen_synthetic_logs(
                truth, SymptomProfile.INDIRECT, DEFAULT_TEMPLATE_POOL, random.Random(seed)
            )
            lines = text.splitlines()
            assert any(re.match(r"^\s+at\s", l) for l in lines)
            assert any(l.startswith("Caused by:") for l in lines)
            # oracle scan over the content matching ever sees: the anomalous
            # message bodies plus stack lines (headers are never matched)
            anomalous_block = "\n".join(
                header.sub("", l)
                for l in lines
                if " ERROR " in l or re.match(r"^\s", l) or l.startswith("Caused")
            )
            for segment in segment_name(truth.trigger.property):
                assert not token_present(anomalous_block.lower(), segment.lower())
            if truth.trigger.value.strip():
                assert truth.trigger.value not in anomalous_block

    def test_symptom_profiles_require_truth(self):
        with pytest.raises(ValueError):
            gen_synthetic_logs(None, SymptomProfile.DIRECT, DEFAULT_TEMPLATE_POOL, random.Random(1))

    def test_thousand_clean_corpora_stay_fault_free(self):
        from confloc.anomaly import VerdictKind, WeightedTokenSet, classify
        from confloc.parsing import ParserConfig
        from confloc.store import TemplateStore
        from conftest import parse_text

        config = ParserConfig()
        tokens = WeightedTokenSet.default()
        for seed in range(1000):
            faultfree = gen_synthetic_logs(
                None, SymptomProfile.CLEAN, DEFAULT_TEMPLATE_POOL, random.Random(f"{seed}:ff")
            )
            corpus = gen_synthetic_logs(
                None, SymptomProfile.CLEAN, DEFAULT_TEMPLATE_POOL, random.Random(f"{seed}:c")
            )
            store = TemplateStore(parser_config_fingerprint=config.fingerprint())
            store.ingest(parse_text(faultfree, file_id="ff"))
            verdict = classify(parse_text(corpus, file_id="c"), store, tokens)
            assert verdict.kind is VerdictKind.FAULT_FREE, seed

    def test_thousand_direct_corpora_match_their_trigger(self):
        from confloc.anomaly import VerdictKind, WeightedTokenSet, classify
        from confloc.configs import build_hot_filter
        from confloc.matching import run_direct
        from confloc.parsing import ParserConfig
        from confloc.store import TemplateStore
        from conftest import parse_text

        config = ParserConfig()
        tokens = WeightedTokenSet.default()
        hot = build_hot_filter(CATALOG)
        for seed in range(1000):
            mutated, decoys, truth = make_mutated_case(BASE, CATALOG, random.Random(f"{seed}:m"))
            faultfree = gen_synthetic_logs(
                None, SymptomProfile.CLEAN, DEFAULT_TEMPLATE_POOL, random.Random(f"{seed}:ff")
            )
            corpus = gen_synthetic_logs(
                truth, SymptomProfile.DIRECT, DEFAULT_TEMPLATE_POOL, random.Random(f"{seed}:l")
            )
            store = TemplateStore(parser_config_fingerprint=config.fingerprint())
            store.ingest(parse_text(faultfree, file_id="ff"))
            verdict = classify(parse_text(corpus, file_id="l"), store, tokens)
            assert verdict.kind is VerdictKind.ANOMALOUS, seed
            match_set = run_direct(list(verdict.key_messages), mutated.merged_with(decoys), hot)
            assert truth.trigger.property in match_set.properties(), seed

    def test_seed_determinism(self):
        truth = truth_of(4)
        a = gen_synthetic_logs(truth, SymptomProfile.DIRECT, DEFAULT_TEMPLATE_POOL, random.Random(4))
        b = gen_synthetic_logs(truth, SymptomProfile.DIRECT, DEFAULT_TEMPLATE_POOL, random.Random(4))
        assert a == b


class TestMetricsFormulas:
    def make_results(self, n_entered: int, n_correct: int) -> list[EvalResult]:
        results = []
        for i in range(n_entered):
            results.append(
                EvalResult(
                    case_id=f"c{i}",
                    stage1_correct=True,
                    stage2_correct=i < n_correct,
                    suspect_count=1,
                    flow=Flow.FAST,
                )
            )
        return results

    def test_twelve_of_thirteen(self):
        results = self.make_results(13, 12)
        assert accuracy(results, "stage2") == Fraction(12, 13)
        assert abs(float(accuracy(results, "stage2")) - 0.9231) < 1e-4

    def test_all_correct_is_one(self):
        assert accuracy(self.make_results(5, 5), "stage2") == 1

    def test_empty_denominator(self):
        clean_only = [
            EvalResult(case_id="c", stage1_correct=True, stage2_correct=True,
                       suspect_count=0, flow=Flow.NONE)
        ]
        with pytest.raises(EmptyDenominatorError):
            accuracy(clean_only, "stage2")
        with pytest.raises(EmptyDenominatorError):
            accuracy([], "stage1")

    def test_phase_selectors_partition_by_flow(self):
        results = [
            EvalResult("a", True, True, 1, Flow.FAST),
            EvalResult("b", True, False, 1, Flow.COMPLETE),
            EvalResult("c", True, True, 1, Flow.DIRECT),
            EvalResult("d", True, True, 0, Flow.NONE),
        ]
        assert accuracy(results, "stage1") == 1
        assert accuracy(results, "stage2") == Fraction(2, 3)
        assert accuracy(results, "direct") == Fraction(1, 2)
        assert accuracy(results, "indirect") == Fraction(1, 2)

    def test_unknown_selector(self):
        with pytest.raises(ValueError):
            accuracy([], "stage3")

    def test_fp_rate_formula(self):
        assert fp_rate(3) == Fraction(2, 3)
        assert abs(float(fp_rate(3)) - 0.667) < 1e-3
        assert fp_rate(1) == 0
        assert fp_rate(12) == Fraction(11, 12)

    def test_fp_rate_requires_truth_present(self):
        with pytest.raises(NotApplicableError):
            fp_rate(3, contains_truth=False)
        with pytest.raises(ValueError):
            fp_rate(0)


class TestCaseDirectories:
    def test_gen_is_byte_deterministic(self, tmp_path):
        dir_a = gen_case(BASE, CATALOG, 42, SymptomProfile.DIRECT, tmp_path / "a")
        dir_b = gen_case(BASE, CATALOG, 42, SymptomProfile.DIRECT, tmp_path / "b")
        files_a = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(dir_b) for p in dir_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (dir_a / rel).read_bytes() == (dir_b / rel).read_bytes(), rel

    def test_case_dir_contents(self, tmp_path):
        case_dir = gen_case(BASE, CATALOG, 7, SymptomProfile.DIRECT, tmp_path)
        for name in ("logs.txt", "faultfree.txt", "mutated.xml", "decoys.xml", "truth.json", "catalog.json"):
            assert (case_dir / name).exists()
        truth = json.loads((case_dir / "truth.json").read_text())
        assert truth["profile"] == "direct"
        assert len(truth["decoys"]) == 9

    def test_settings_xml_round_trips_through_loader(self, tmp_path):
        mutated, _, _ = make_mutated_case(BASE, CATALOG, random.Random(21))
        path = tmp_path / "m.xml"
        path.write_text(settings_to_xml(mutated))
        loaded = load_settings(path)
        assert [(e.property, e.value) for e in loaded.entries] == [
            (e.property, e.value) for e in mutated.entries
        ]

    def test_direct_case_evaluates_correct_with_fast_flow(self, tmp_path):
        case_dir = gen_case(BASE, CATALOG, 100, SymptomProfile.DIRECT, tmp_path)
        outcome = eval_case(case_dir)
        assert outcome.result.stage1_correct and outcome.result.stage2_correct
        assert outcome.result.flow == Flow.FAST
        assert outcome.result.fp_verified == 0

    def test_clean_case_evaluates_fault_free(self, tmp_path):
        case_dir = gen_case(BASE, CATALOG, 101, SymptomProfile.CLEAN, tmp_path)
        outcome = eval_case(case_dir)
        assert outcome.result.stage1_correct
        assert outcome.result.flow == Flow.NONE
        assert outcome.result.suspect_count == 0

    def test_indirect_case_reaches_indirect_inference(self, tmp_path):
        case_dir = gen_case(BASE, CATALOG, 102, SymptomProfile.INDIRECT, tmp_path)
        outcome = eval_case(case_dir)
        assert outcome.result.stage1_correct and outcome.result.stage2_correct
        assert outcome.result.flow in (Flow.DIRECT, Flow.COMPLETE)

    def test_eval_cases_ordering_and_metrics(self, tmp_path):
        for seed, profile in [(3, SymptomProfile.DIRECT), (1, SymptomProfile.CLEAN), (2, SymptomProfile.INDIRECT)]:
            gen_case(BASE, CATALOG, seed, profile, tmp_path)
        outcomes = eval_cases(tmp_path)
        assert [o.result.case_id for o in outcomes] == sorted(o.result.case_id for o in outcomes)
        metrics = json.loads(metrics_to_json(outcomes))
        assert metrics["summary"]["accuracy"]["stage1"] == 1.0
        assert len(metrics["cases"]) == 3

    def test_eval_cases_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            eval_cases(tmp_path / "void")
