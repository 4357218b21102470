"""Mock social provider: tokens, graph semantics, change feed.

The derived expectations are recomputed by the replay oracle in
tests/oracles.py, never by the provider's own code paths.
"""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import GraphReplay, expand_from_raw
from peershare.model import SharingPolicy
from peershare.provider import (
    DuplicateUserError,
    ListNotOwnedError,
    MockProvider,
    UnknownListError,
    UnknownUserError,
)


@pytest.fixture
def graph():
    p = MockProvider()
    for user in ("alice", "bob", "carol"):
        p.add_user(user, user.title())
    return p


class TestTokens:
    def test_issue_then_verify_round_trip(self, graph):
        token = graph.issue_token("alice", "peershare-app")
        assert graph.verify_token(token.token) == ("alice", "peershare-app", True)

    def test_issue_then_revoke(self, graph):
        token = graph.issue_token("alice", "peershare-app")
        graph.revoke_token(token.token)
        user, app, valid = graph.verify_token(token.token)
        assert (user, app, valid) == ("alice", "peershare-app", False)

    def test_zero_ttl_expires_immediately(self, graph):
        token = graph.issue_token("alice", "peershare-app", ttl=0)
        assert graph.verify_token(token.token)[2] is False

    def test_garbage_token_is_just_invalid(self, graph):
        assert graph.verify_token("complete garbage")[2] is False
        assert graph.verify_token("")[2] is False

    def test_provider_reports_foreign_app_claims_honestly(self, graph):
        # Rejecting the wrong app id is the relying server's job.
        token = graph.issue_token("alice", "evil-app")
        assert graph.verify_token(token.token) == ("alice", "evil-app", True)

    def test_unknown_user_cannot_get_token(self, graph):
        with pytest.raises(UnknownUserError):
            graph.issue_token("nobody", "peershare-app")

    def test_verify_is_consistent_between_calls(self, graph):
        token = graph.issue_token("alice", "peershare-app")
        assert graph.verify_token(token.token) == graph.verify_token(token.token)

    def test_tokens_are_unguessable_strings(self, graph):
        seen = {graph.issue_token("alice", "peershare-app").token for _ in range(64)}
        assert len(seen) == 64
        assert all(len(t) >= 32 for t in seen)


class TestFriendGraph:
    def test_friendship_is_symmetric(self, graph):
        graph.add_friendship("alice", "bob")
        assert "bob" in graph.get_friends("alice")
        assert "alice" in graph.get_friends("bob")

    def test_new_user_has_no_friends(self, graph):
        graph.add_user("dave")
        assert graph.get_friends("dave") == set()

    def test_unfriend_removes_both_sides(self, graph):
        # Oracle: replay the same mutation log into plain sets.
        log = [
            {"op": "add_friendship", "a": "alice", "b": "bob"},
            {"op": "add_friendship", "a": "alice", "b": "carol"},
            {"op": "remove_friendship", "a": "bob", "b": "alice"},
        ]
        oracle = GraphReplay()
        for user in ("alice", "bob", "carol"):
            oracle.apply({"op": "add_user", "social_id": user})
        for command in log:
            graph.mutate_graph(command)
            oracle.apply(command)
        for user in ("alice", "bob", "carol"):
            assert graph.get_friends(user) == oracle.adjacency[user]

    def test_duplicate_user_rejected(self, graph):
        with pytest.raises(DuplicateUserError):
            graph.add_user("alice")

    def test_duplicate_friendship_is_noop_with_one_event(self, graph):
        graph.add_friendship("alice", "bob")
        graph.add_friendship("alice", "bob")
        events = graph.poll_changes(0)
        assert len(events) == 1

    def test_remove_friendship_of_non_friends_is_noop_no_event(self, graph):
        graph.remove_friendship("alice", "carol")
        assert graph.poll_changes(0) == []


class TestLists:
    def test_lists_returned_to_owner(self, graph):
        graph.create_list("alice", "Close Friends", "close")
        graph.add_to_list("close", "bob")
        refs = graph.get_custom_lists("alice")
        assert [(r.list_id, r.display_name) for r in refs] == [("close", "Close Friends")]

    def test_no_lists_is_empty(self, graph):
        assert graph.get_custom_lists("bob") == []

    def test_created_then_deleted_list_is_absent(self, graph):
        # Replay oracle over the same log.
        log = [
            {"op": "create_list", "owner": "alice", "list_id": "close"},
            {"op": "add_to_list", "list_id": "close", "social_id": "bob"},
            {"op": "delete_list", "list_id": "close"},
        ]
        oracle = GraphReplay()
        for command in log:
            graph.mutate_graph(command)
            oracle.apply(command)
        assert {r.list_id for r in graph.get_custom_lists("alice")} == set(oracle.lists)


class TestExpandPolicy:
    def test_all_friends_is_the_friend_set(self, graph):
        graph.add_friendship("alice", "bob")
        graph.add_friendship("alice", "carol")
        assert graph.expand_policy("alice", SharingPolicy.all_friends()) == {"bob", "carol"}

    def test_named_list_is_its_members(self, graph):
        graph.create_list("alice", "Close", "close")
        graph.add_to_list("close", "bob")
        assert graph.expand_policy("alice", SharingPolicy.named_list("close")) == {"bob"}

    def test_list_keeps_ex_friends(self, graph):
        # Expansion uses membership as-is; friendship is not intersected.
        graph.add_friendship("alice", "bob")
        graph.create_list("alice", "Close", "close")
        graph.add_to_list("close", "bob")
        graph.remove_friendship("alice", "bob")
        assert graph.expand_policy("alice", SharingPolicy.named_list("close")) == {"bob"}

    def test_errors(self, graph):
        with pytest.raises(UnknownUserError):
            graph.expand_policy("nobody", SharingPolicy.all_friends())
        with pytest.raises(UnknownListError):
            graph.expand_policy("alice", SharingPolicy.named_list("nope"))
        graph.create_list("bob", "Bob's", "bobs")
        with pytest.raises(ListNotOwnedError):
            graph.expand_policy("alice", SharingPolicy.named_list("bobs"))

    @given(seed=st.integers(min_value=0, max_value=10**9))
    @settings(max_examples=40, deadline=None)
    def test_expansion_matches_raw_table_recomputation(self, seed):
        # Brute-force oracle over a randomized graph.
        rng = random.Random(seed)
        p = MockProvider()
        users = [f"u{i}" for i in range(rng.randint(2, 8))]
        for user in users:
            p.add_user(user)
        lists = []
        for _ in range(rng.randint(0, 20)):
            kind = rng.randint(0, 4)
            if kind == 0:
                p.add_friendship(rng.choice(users), rng.choice(users))
            elif kind == 1:
                p.remove_friendship(rng.choice(users), rng.choice(users))
            elif kind == 2:
                lid = f"l{len(lists)}"
                p.create_list(rng.choice(users), lid.upper(), lid)
                lists.append(lid)
            elif kind == 3 and lists:
                p.add_to_list(rng.choice(lists), rng.choice(users))
            elif kind == 4 and lists:
                p.remove_from_list(rng.choice(lists), rng.choice(users))
        raw = p.raw_state()
        for owner in users:
            expected = expand_from_raw(raw, owner, {"kind": "all_friends"})
            assert p.expand_policy(owner, SharingPolicy.all_friends()) == expected
            assert owner not in p.expand_policy(owner, SharingPolicy.all_friends())
        for lid, entry in raw["lists"].items():
            expected = expand_from_raw(raw, entry["owner"], {"kind": "list", "list_ref": lid})
            assert p.expand_policy(entry["owner"], SharingPolicy.named_list(lid)) == expected


class TestChangeFeed:
    def test_no_mutations_no_events(self, graph):
        assert graph.poll_changes(0) == []

    def test_list_add_emits_one_event(self, graph):
        graph.create_list("alice", "Close", "close")
        before = graph.poll_changes(0)[-1].change_seq
        graph.add_to_list("close", "bob")
        events = graph.poll_changes(before)
        assert len(events) == 1
        assert events[0].owner_social_id == "alice"
        assert events[0].list_id == "close"
        assert events[0].change_seq == before + 1

    def test_friendship_event_carries_all_friends_marker(self, graph):
        graph.add_friendship("alice", "bob")
        (event,) = graph.poll_changes(0)
        assert event.list_id is None

    def test_interleaved_mutations_yield_ordered_events(self, graph):
        # Replay-log oracle: every effective mutation appends one event.
        log = [
            {"op": "add_friendship", "a": "alice", "b": "bob"},
            {"op": "create_list", "owner": "alice", "list_id": "close"},
            {"op": "add_to_list", "list_id": "close", "social_id": "bob"},
            {"op": "remove_friendship", "a": "alice", "b": "bob"},
            {"op": "add_to_list", "list_id": "close", "social_id": "carol"},
        ]
        for command in log:
            graph.mutate_graph(command)
        events = graph.poll_changes(0)
        assert len(events) == len(log)
        seqs = [e.change_seq for e in events]
        assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)

    def test_poll_after_seq_filters(self, graph):
        graph.add_friendship("alice", "bob")
        graph.add_friendship("alice", "carol")
        all_events = graph.poll_changes(0)
        assert graph.poll_changes(all_events[0].change_seq) == all_events[1:]

    def test_subscribe_delivers_each_event_exactly_once(self, graph):
        seen_one, seen_two = [], []
        graph.subscribe(seen_one.append)
        graph.subscribe(seen_two.append)
        graph.add_friendship("alice", "bob")
        graph.add_friendship("alice", "bob")  # no-op, no event
        graph.create_list("alice", "Close", "close")
        assert [e.change_seq for e in seen_one] == [1, 2]
        assert seen_one == seen_two


class TestRandomizedReplay:
    @given(seed=st.integers(min_value=0, max_value=10**9))
    @settings(max_examples=30, deadline=None)
    def test_final_graph_equals_oracle_replay(self, seed):
        rng = random.Random(seed)
        p = MockProvider()
        oracle = GraphReplay()
        users = [f"u{i}" for i in range(5)]
        lists: list[str] = []
        next_list = 0
        for user in users:
            command = {"op": "add_user", "social_id": user}
            p.mutate_graph(command)
            oracle.apply(command)
        for _ in range(40):
            choice = rng.randint(0, 5)
            if choice == 0:
                command = {"op": "add_friendship", "a": rng.choice(users), "b": rng.choice(users)}
                if command["a"] == command["b"]:
                    continue
            elif choice == 1:
                command = {"op": "remove_friendship", "a": rng.choice(users), "b": rng.choice(users)}
            elif choice == 2:
                lid = f"l{next_list}"
                next_list += 1
                command = {"op": "create_list", "owner": rng.choice(users), "list_id": lid}
                lists.append(lid)
            elif choice == 3 and lists:
                command = {"op": "add_to_list", "list_id": rng.choice(lists), "social_id": rng.choice(users)}
            elif choice == 4 and lists:
                command = {"op": "remove_from_list", "list_id": rng.choice(lists), "social_id": rng.choice(users)}
            elif choice == 5 and lists:
                lid = rng.choice(lists)
                lists.remove(lid)
                command = {"op": "delete_list", "list_id": lid}
            else:
                continue
            p.mutate_graph(command)
            oracle.apply(command)
        raw = p.raw_state()
        assert set(raw["users"]) == oracle.users
        for user in users:
            assert raw["friends"][user] == oracle.adjacency.get(user, set())
        assert set(raw["lists"]) == set(oracle.lists)
        for lid, entry in oracle.lists.items():
            assert raw["lists"][lid]["members"] == entry["members"]
            assert raw["lists"][lid]["owner"] == entry["owner"]


def test_persistence_round_trip(tmp_path):
    path = tmp_path / "provider.json"
    p = MockProvider(state_path=path)
    p.add_user("alice")
    p.add_user("bob")
    p.add_friendship("alice", "bob")
    p.create_list("alice", "Close", "close")
    token = p.issue_token("alice", "peershare-app")

    reloaded = MockProvider(state_path=path)
    assert reloaded.get_friends("alice") == {"bob"}
    assert [r.list_id for r in reloaded.get_custom_lists("alice")] == ["close"]
    assert reloaded.verify_token(token.token) == ("alice", "peershare-app", True)
    assert reloaded.poll_changes(0) == p.poll_changes(0)
