from __future__ import annotations

from confloc.anomaly import AnomalyDegree, KeyLogMessage
from confloc.configs import ConfigEntry, ConfigSettings, EntrySource, HotTermFilter
from confloc.matching import NameHit, ValueHit, match_names, match_values, run_direct
from confloc.parsing import Header, LogRecord


def key_message(message: str, line_no: int = 1, stack: tuple[str, ...] = ()) -> KeyLogMessage:
    record = LogRecord(
        header=Header("2023-08-01 12:00:01", "ERROR", "X"),
        message=message,
        stack_lines=stack,
        template_id=1,
        variables=(),
        origin=("test.log", line_no),
    )
    return KeyLogMessage(
        record=record, template_degree=AnomalyDegree(100_000), variable_degree=AnomalyDegree(0)
    )


def settings_of(*pairs: tuple[str, str]) -> ConfigSettings:
    return ConfigSettings(
        entries=tuple(ConfigEntry(p, v, EntrySource.USER_DEFINED) for p, v in pairs)
    )


NO_HOT = HotTermFilter.empty()


class TestMatchNames:
    def test_full_dotted_name_hit(self):
        msgs = [key_message("Deleting mapred.local.dir contents now")]
        matches = match_names(msgs, settings_of(("mapred.local.dir", "/tmp/x")), NO_HOT)
        assert len(matches) == 1
        kind = matches[0].kind
        assert isinstance(kind, NameHit)
        assert kind.full_name_hit
        assert kind.matched_segments == ("mapred", "local", "dir")

    def test_partial_fragments_with_hot_filter(self):
        msgs = [key_message("path name.key has no mount entry configured")]
        hot = HotTermFilter(terms=frozenset({"fs", "default", "viewfs", "mounttable"}), k=4)
        matches = match_names(
            msgs, settings_of(("fs.viewfs.mounttable.default.name.key", "")), hot
        )
        assert len(matches) == 1
        kind = matches[0].kind
        assert not kind.full_name_hit
        assert kind.matched_segments == ("name", "key")

    def test_no_match_without_shared_tokens(self):
        msgs = [key_message("job completed")]
        assert match_names(msgs, settings_of(("any.property.here", "1")), NO_HOT) == []

    def test_hot_segments_never_match(self):
        msgs = [key_message("the hadoop subsystem restarted")]
        hot = HotTermFilter(terms=frozenset({"hadoop"}), k=1)
        assert match_names(msgs, settings_of(("hadoop.tmp.area", "x")), hot) == []

    def test_all_hot_name_is_skipped_even_on_full_hit(self):
        msgs = [key_message("touched a.b today")]
        hot = HotTermFilter(terms=frozenset({"a", "b"}), k=2)
        assert match_names(msgs, settings_of(("a.b", "x")), hot) == []

    def test_matching_is_token_bounded(self):
        msgs = [key_message("superlocalizer engaged")]
        assert match_names(msgs, settings_of(("grid.local.dir", "x")), NO_HOT) == []

    def test_stack_lines_are_excluded(self):
        msgs = [key_message("plain text", stack=("\tat grid.local.dir.Helper(x.java:1)",))]
        assert match_names(msgs, settings_of(("grid.local.dir", "x")), NO_HOT) == []

    def test_case_insensitive_segments(self):
        msgs = [key_message("LOCAL storage exhausted")]
        matches = match_names(msgs, settings_of(("grid.local.dir", "x")), NO_HOT)
        assert len(matches) == 1
        assert matches[0].kind.matched_segments == ("local",)


class TestMatchValues:
    def test_zero_matches_inside_address_noise(self):
        msgs = [key_message("could not reach [kry1040/72.30.116.100:50020] endpoint")]
        matches = match_values(msgs, settings_of(("dfs.datanode.du.reserved.pct", "0")))
        assert len(matches) == 1
        assert isinstance(matches[0].kind, ValueHit)

    def test_empty_value_never_matches(self):
        msgs = [key_message("anything at all")]
        assert match_values(msgs, settings_of(("some.flag", ""))) == []
        assert match_values(msgs, settings_of(("some.flag", "   "))) == []

    def test_span_points_at_first_occurrence(self):
        message = "buffer set to 8192 bytes (8192 max)"
        msgs = [key_message(message)]
        matches = match_values(msgs, settings_of(("io.sort.mb", "8192")))
        assert len(matches) == 1
        start, end = matches[0].kind.matched_span
        assert (start, end) == (message.index("8192"), message.index("8192") + 4)
        assert message[start:end] == "8192"

    def test_value_matching_is_raw_and_case_sensitive(self):
        msgs = [key_message("state moved to Active")]
        assert match_values(msgs, settings_of(("ha.state", "active"))) == []
        assert len(match_values(msgs, settings_of(("ha.state", "Active")))) == 1

    def test_stack_lines_are_excluded(self):
        msgs = [key_message("no digits here", stack=("\tat x(y.java:8192)",))]
        assert match_values(msgs, settings_of(("io.sort.mb", "8192"))) == []


class TestRunDirect:
    def test_name_and_value_hits_for_same_pair_stay_distinct(self):
        msgs = [key_message("grid.local.dir is /data and /data is full")]
        settings = settings_of(("grid.local.dir", "/data"))
        match_set = run_direct(msgs, settings, NO_HOT)
        kinds = [m.kind.kind_label for m in match_set]
        assert kinds == ["name", "value"]

    def test_empty_messages_make_empty_matchset(self):
        match_set = run_direct([], settings_of(("a.b", "1")), NO_HOT)
        assert not match_set
        assert len(match_set) == 0

    def test_one_name_and_two_value_hits(self):
        msgs = [key_message("grid.local.dir rejected; retry in 30s window 7700")]
        settings = settings_of(
            ("grid.local.dir", "/data"), ("x.wait", "30"), ("y.high", "7700")
        )
        match_set = run_direct(msgs, settings, NO_HOT)
        assert len(match_set) == 3
        assert match_set.properties() == ["grid.local.dir", "x.wait", "y.high"]
        assert [m.kind.kind_label for m in match_set] == ["name", "value", "value"]

    def test_deterministic_ordering(self):
        msgs = [key_message("b.prop and a.prop both named, code 55", line_no=2),
                key_message("another 55 here", line_no=1)]
        settings = settings_of(("b.prop", "55"), ("a.prop", "none"))
        first = run_direct(msgs, settings, NO_HOT)
        second = run_direct(list(reversed(msgs)), settings, NO_HOT)
        assert [m.identity() for m in first.matches] == [m.identity() for m in second.matches]
        origins = [m.key_message.record.origin for m in first.matches]
        assert origins == sorted(origins)

    def test_adding_a_property_never_removes_matches(self):
        msgs = [key_message("grid.local.dir rejected with code 55")]
        small = settings_of(("grid.local.dir", "/data"))
        large = settings_of(("grid.local.dir", "/data"), ("extra.code", "55"))
        small_ids = {m.identity() for m in run_direct(msgs, small, NO_HOT)}
        large_ids = {m.identity() for m in run_direct(msgs, large, NO_HOT)}
        assert small_ids <= large_ids

    def test_toggles_disable_each_strategy(self):
        msgs = [key_message("grid.local.dir rejected with code 55")]
        settings = settings_of(("grid.local.dir", "55"))
        only_values = run_direct(msgs, settings, NO_HOT, use_names=False)
        only_names = run_direct(msgs, settings, NO_HOT, use_values=False)
        assert [m.kind.kind_label for m in only_values] == ["value"]
        assert [m.kind.kind_label for m in only_names] == ["name"]

    def test_full_name_hit_lists_all_non_hot_segments(self):
        msgs = [key_message("grid.local.dir mentioned verbatim")]
        hot = HotTermFilter(terms=frozenset({"grid"}), k=1)
        match_set = run_direct(msgs, settings_of(("grid.local.dir", "x")), hot, use_values=False)
        (match,) = match_set.matches
        assert match.kind.full_name_hit
        assert match.kind.matched_segments == ("local", "dir")
