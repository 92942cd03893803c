import itertools
import math
from dataclasses import dataclass

import numpy as np
import pytest

from src.errors import SimulationError
from src.messages import Message, MessageBuffer
from src.routing import (
    EpidemicRouter,
    MaxPropRouter,
    MeetingProbabilities,
    Router,
    buffer_make_room,
    epidemic_on_connection_up,
    maxprop_costs,
    maxprop_path_cost,
    maxprop_queue_order,
    maxprop_update_probs,
    next_message,
    on_connection_up,
    propagate_acks,
    transfer_queue,
)


@dataclass
class Node:
    id: str
    buffer: MessageBuffer
    router: Router


def _message(seq, source="a", destination="z", size=500_000, path=None, created_at=None, received_at=0.0):
    return Message(
        id=f"M{seq}",
        seq=seq,
        source=source,
        destination=destination,
        size=size,
        created_at=float(seq) if created_at is None else created_at,
        path=path or (source,),
        received_at=received_at,
    )


def _epidemic_node(name, address=0, capacity=30_000_000):
    return Node(name, MessageBuffer(capacity=capacity), EpidemicRouter(address))


def _maxprop_nodes(names, capacity=30_000_000, hop_threshold=3):
    address_of = {name: i for i, name in enumerate(names)}
    return [
        Node(name, MessageBuffer(capacity=capacity), MaxPropRouter(i, len(names), address_of, hop_threshold))
        for name, i in address_of.items()
    ]


class TestMeetingProbabilities:

    def test_uniform_start(self):
        f = MeetingProbabilities.uniform(0, 4)
        assert f[0] == 0.0
        assert [f[i] for i in (1, 2, 3)] == pytest.approx([1 / 3] * 3)

    def test_single_host(self):
        assert MeetingProbabilities.uniform(0, 1).values.tolist() == [0.0]

    def test_update_sequence(self):
        f = MeetingProbabilities(owner=0, values=np.array([0.0, 0.5, 0.5]))
        maxprop_update_probs(f, 1)
        assert f.values.tolist() == pytest.approx([0.0, 0.75, 0.25], abs=1e-12)
        maxprop_update_probs(f, 1)
        assert f.values.tolist() == pytest.approx([0.0, 0.875, 0.125], abs=1e-12)

    def test_sum_stays_one(self):
        rng = np.random.default_rng(5)
        f = MeetingProbabilities.uniform(2, 10)
        for met in rng.integers(0, 10, size=500):
            if met == 2:
                continue
            maxprop_update_probs(f, int(met))
            assert f.values.sum() == pytest.approx(1.0, abs=1e-12)
            assert f[2] == 0.0
            assert (f.values >= 0).all()

    def test_meeting_self_is_rejected(self):
        with pytest.raises(ValueError):
            maxprop_update_probs(MeetingProbabilities.uniform(0, 3), 0)


class TestPathCost:

    def test_direct_certain_meeting_costs_nothing(self):
        assert maxprop_path_cost({"a": {"b": 1.0}}, "a", "b") == 0.0

    def test_unknown_target(self):
        assert maxprop_path_cost({"a": {"b": 1.0}}, "a", "c") == math.inf

    def test_self(self):
        assert maxprop_path_cost({}, "a", "a") == 0.0

    def test_cheaper_relay(self):
        tables = {
            "a": {"b": 0.9, "c": 0.1},
            "b": {"a": 0.1, "c": 0.9},
        }
        assert maxprop_path_cost(tables, "a", "c") == pytest.approx(0.2)

    def test_host_without_table_cannot_relay(self):
        tables = {"a": {"b": 0.9}, "c": {"d": 1.0}}
        assert maxprop_path_cost(tables, "a", "d") == math.inf

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        hosts = list(range(5))
        known = [h for h in hosts if h == 0 or rng.random() < 0.7]
        tables = {}
        for h in known:
            values = rng.random(5)
            values[h] = 0.0
            tables[h] = {v: float(values[v]) for v in hosts if v != h}

        for target in hosts[1:]:
            best = math.inf
            relays = [h for h in known if h not in (0, target)]
            for r in range(len(relays) + 1):
                for middle in itertools.permutations(relays, r):
                    route = (0, *middle, target)
                    cost = sum(1.0 - tables[u][v] for u, v in zip(route, route[1:]))
                    best = min(best, cost)
            assert maxprop_path_cost(tables, 0, target) == pytest.approx(best, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_vectorized_costs_match_reference(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 8
        tables = {}
        for h in range(n):
            if h != 0 and rng.random() < 0.4:
                continue
            values = rng.random(n)
            values[h] = 0.0
            tables[h] = values / values.sum()
        costs = maxprop_costs(0, tables, n)
        as_dicts = {h: {v: float(p) for v, p in enumerate(values) if v != h} for h, values in tables.items()}
        for target in range(n):
            assert costs[target] == pytest.approx(maxprop_path_cost(as_dicts, 0, target), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_targeted_costs_are_exact_at_targets(self, seed):
        rng = np.random.default_rng(300 + seed)
        n = 12
        tables = {}
        for h in range(n):
            if h != 0 and rng.random() < 0.3:
                continue
            values = rng.random(n)
            values[h] = 0.0
            tables[h] = values / values.sum()
        full = maxprop_costs(0, tables, n)
        targets = sorted(rng.choice(n, size=3, replace=False).tolist())
        partial = maxprop_costs(0, tables, n, targets)
        assert partial[targets].tolist() == full[targets].tolist()
        assert (partial >= full).all()


class TestQueueOrder:

    def test_pure_cost_order(self):
        copies = [_message(1), _message(2), _message(3)]
        costs = {"M1": 0.9, "M2": 0.1, "M3": 0.5}
        ordered = maxprop_queue_order(copies, 0, costs)
        assert [m.id for m in ordered] == ["M2", "M3", "M1"]

    def test_low_hop_copies_first(self):
        young = _message(1)
        old = _message(2, path=("a", "b", "c", "d", "e", "f"))
        ordered = maxprop_queue_order([old, young], 3, {"M1": 0.9, "M2": 0.1})
        assert ordered == [young, old]

    def test_hop_count_then_creation_order(self):
        two_hops = _message(1, path=("a", "b", "c"))
        zero_a = _message(3)
        zero_b = _message(2)
        ordered = maxprop_queue_order([two_hops, zero_a, zero_b], 3, {})
        assert [m.id for m in ordered] == ["M2", "M3", "M1"]

    def test_equal_cost_falls_back_to_creation_order(self):
        copies = [_message(5), _message(4)]
        ordered = maxprop_queue_order(copies, 0, {"M4": 0.5, "M5": 0.5})
        assert [m.id for m in ordered] == ["M4", "M5"]


class TestBufferMakeRoom:

    def _full_buffer(self):
        buffer = MessageBuffer(capacity=30_000_000)
        for seq in range(1, 61):
            buffer.add(_message(seq))
        return buffer

    def test_evicts_first_in_order(self):
        buffer = self._full_buffer()
        victims = buffer_make_room(buffer, _message(61), list(buffer))
        assert [m.id for m in victims] == ["M1"]
        assert buffer.free == 500_000

    def test_oversized_incoming_evicts_nothing(self):
        buffer = self._full_buffer()
        assert buffer_make_room(buffer, _message(61, size=31_000_000), list(buffer)) is None
        assert len(buffer) == 60

    def test_protected_copies_are_skipped(self):
        buffer = self._full_buffer()
        victims = buffer_make_room(buffer, _message(61), list(buffer), {"M1"})
        assert [m.id for m in victims] == ["M2"]
        assert "M1" in buffer

    def test_not_enough_evictable_leaves_buffer_alone(self):
        buffer = MessageBuffer(capacity=1_000_000)
        buffer.add(_message(1))
        buffer.add(_message(2))
        assert buffer_make_room(buffer, _message(3, size=1_000_000), list(buffer), {"M1"}) is None
        assert buffer.ids() == {"M1", "M2"}

    def test_room_already_free(self):
        buffer = MessageBuffer(capacity=1_000_000)
        assert buffer_make_room(buffer, _message(1), []) == []

    def test_buffer_rejects_overflow(self):
        buffer = MessageBuffer(capacity=400_000)
        with pytest.raises(SimulationError):
            buffer.add(_message(1))


class TestEpidemic:

    def test_identical_buffers_exchange_nothing(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        for node in (a, b):
            node.buffer.add(_message(1))
        assert epidemic_on_connection_up(a, b) == {"a": [], "b": []}

    def test_one_sided_buffer(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        message = _message(1)
        a.buffer.add(message)
        assert epidemic_on_connection_up(a, b) == {"a": [message], "b": []}
        assert "M1" in a.buffer

    def test_order_is_creation_time(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        a.buffer.add(_message(2, created_at=20.0))
        a.buffer.add(_message(1, created_at=10.0))
        assert [m.id for m in transfer_queue(a, b)] == ["M1", "M2"]

    def test_eviction_is_receive_order(self):
        a = _epidemic_node("a")
        a.buffer.add(_message(2))
        a.buffer.add(_message(1))
        assert [m.id for m in a.router.eviction_order(a.buffer)] == ["M2", "M1"]

    def test_message_for_peer_goes_first(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        a.buffer.add(_message(1, destination="z"))
        a.buffer.add(_message(2, destination="b"))
        assert next_message(a, b).id == "M2"

    def test_delivered_message_is_not_offered_again(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        a.buffer.add(_message(1, destination="b"))
        b.router.mark_delivered("M1")
        assert next_message(a, b) is None

    def test_chain_hop_counts(self):
        nodes = [_epidemic_node(name, i) for i, name in enumerate("abc")]
        a, b, c = nodes
        a.buffer.add(_message(1, destination="c"))
        b.buffer.add(next_message(a, b).replicate("b", 1.0))
        c.buffer.add(next_message(b, c).replicate("c", 2.0))
        copy = c.buffer.get("M1")
        assert copy.hop_count == 2
        assert copy.path == ("a", "b", "c")
        assert copy.received_at == 2.0
        assert a.buffer.get("M1").hop_count == 0

    def test_no_state_change_on_contact(self):
        a, b = _epidemic_node("a", 0), _epidemic_node("b", 1)
        a.buffer.add(_message(1))
        assert on_connection_up(a, b) == []
        assert "M1" in a.buffer


class TestMaxProp:

    def test_contact_updates_both_sides(self):
        a, b, c = _maxprop_nodes(["a", "b", "c"])
        assert on_connection_up(a, b) == []
        assert a.router.probs.values.tolist() == pytest.approx([0.0, 0.75, 0.25])
        assert b.router.probs.values.tolist() == pytest.approx([0.75, 0.0, 0.25])
        assert 1 in a.router.peer_tables and 0 in b.router.peer_tables

    def test_learned_table_drives_cost(self):
        a, b, c = _maxprop_nodes(["a", "b", "c"])
        on_connection_up(b, c)
        on_connection_up(b, c)
        on_connection_up(a, b)
        direct = 1.0 - a.router.probs[2]
        via_b = (1.0 - a.router.probs[1]) + (1.0 - b.router.probs[2])
        assert a.router.cost_to("c") == pytest.approx(min(direct, via_b))

    def test_never_sends_back_along_path(self):
        a, b = _maxprop_nodes(["a", "b"])
        a.buffer.add(_message(1, source="b", destination="z", path=("b", "a")))
        assert next_message(a, b) is None

    def test_acks_remove_copies(self):
        a, b = _maxprop_nodes(["a", "b"])
        a.buffer.add(_message(1))
        a.buffer.add(_message(2))
        b.router.add_acks({"M1"})
        removals = propagate_acks(a, b)
        assert [(holder.id, m.id) for holder, m in removals] == [("a", "M1")]
        assert a.buffer.ids() == {"M2"}
        assert "M1" in a.router.acks

    def test_disjoint_acks_remove_nothing(self):
        a, b = _maxprop_nodes(["a", "b"])
        a.buffer.add(_message(1))
        b.router.add_acks({"M9"})
        assert propagate_acks(a, b) == []
        assert a.router.acks == {"M9"}

    def test_acked_copies_are_evicted_first(self):
        (a,) = _maxprop_nodes(["a"])
        a.buffer.add(_message(1))
        a.buffer.add(_message(2))
        a.router.acks.add("M2")
        order = a.router.eviction_order(a.buffer)
        assert [m.id for m in order] == ["M2", "M1"]

    def test_eviction_reverses_transmission_order(self):
        (a,) = _maxprop_nodes(["a"])
        for seq in (1, 2, 3):
            a.buffer.add(_message(seq))
        assert [m.id for m in a.router.eviction_order(a.buffer)] == ["M3", "M2", "M1"]

    def test_delivery_acks_and_removes(self):
        a, b = _maxprop_nodes(["a", "b"])
        message = _message(1, destination="b")
        assert a.router.remove_after_delivery(message)
        assert a.router.knows("M1")
        b.router.mark_delivered("M1")
        assert "M1" in b.router.acks

    def test_order_cache_follows_cost_changes(self):
        a, b, c = _maxprop_nodes(["a", "b", "c"], hop_threshold=0)
        a.buffer.add(_message(1, destination="b"))
        a.buffer.add(_message(2, destination="c"))
        on_connection_up(a, c)
        assert [m.id for m in a.router.transmission_order(a.buffer)] == ["M2", "M1"]
        on_connection_up(a, b)
        on_connection_up(a, b)
        assert [m.id for m in a.router.transmission_order(a.buffer)] == ["M1", "M2"]


class TestNextMessage:

    def _populate(self, rng, nodes, count=30):
        for seq in range(1, count + 1):
            source, destination = rng.choice(len(nodes), size=2, replace=False)
            hops = int(rng.integers(0, 4))
            path = (nodes[source].id, *(f"r{k}" for k in range(hops)))
            message = _message(seq, source=path[0], destination=nodes[destination].id, path=path)
            for node in nodes:
                if rng.random() < 0.4:
                    node.buffer.add(message)
        for node in nodes:
            for seq in range(1, count + 1):
                if rng.random() < 0.1:
                    node.router.mark_delivered(f"M{seq}")

    @pytest.mark.parametrize("seed", range(15))
    def test_epidemic_matches_full_queue(self, seed):
        rng = np.random.default_rng(seed)
        nodes = [_epidemic_node(name, i) for i, name in enumerate("abcd")]
        self._populate(rng, nodes)
        skip = {f"M{k}" for k in range(1, 31) if rng.random() < 0.1}
        for sender, receiver in itertools.permutations(nodes, 2):
            queue = transfer_queue(sender, receiver, skip)
            expected = queue[0] if queue else None
            assert next_message(sender, receiver, skip) is expected

    @pytest.mark.parametrize("seed", range(15))
    def test_maxprop_matches_full_queue(self, seed):
        rng = np.random.default_rng(50 + seed)
        nodes = _maxprop_nodes(list("abcd"), hop_threshold=2)
        self._populate(rng, nodes)
        for a, b in itertools.combinations(nodes, 2):
            if rng.random() < 0.6:
                on_connection_up(a, b)
        for sender, receiver in itertools.permutations(nodes, 2):
            queue = transfer_queue(sender, receiver)
            expected = queue[0] if queue else None
            assert next_message(sender, receiver) is expected

    def test_nothing_new_to_offer(self):
        a, b = _epidemic_node("a"), _epidemic_node("b", 1)
        message = _message(1)
        a.buffer.add(message)
        b.buffer.add(message)
        assert next_message(a, b) is None
        assert next_message(a, _epidemic_node("c", 2), skip={"M1"}) is None
