import pytest

from hiddenmac.medium import Medium, SimConfig
from hiddenmac.topology import parse_topology


def drive(medium, script):
    """Run a column-per-slot intent script; returns the slot records."""
    return [medium.step(list(col)) for col in script]


def make(spec="{A|B}", **kw):
    cfg = SimConfig(**kw)
    return Medium(parse_topology(spec), cfg, initial_idle_streak=cfg.difs), cfg


def test_lone_transmission_acks_at_window_end():
    medium, cfg = make()
    records = drive(medium, [(1, 0)] + [(0, 0)] * 5)
    acks = [f for r in records for f in r.feedback]
    assert len(acks) == 1
    assert acks[0].kind == "ack"
    assert acks[0].terminal == 0
    assert acks[0].packet_start == 0
    assert acks[0].slot == cfg.packet_len - 1


def test_hidden_overlap_collides_both():
    # A transmits 0-4, B transmits 2-6; both windows fail
    medium, _ = make("{A|B}")
    script = [(1, 0), (0, 0), (0, 1), (0, 0), (0, 0), (0, 0), (0, 0)]
    records = drive(medium, script)
    events = {(f.terminal, f.kind) for r in records for f in r.feedback}
    assert events == {(0, "nack"), (1, "nack")}
    assert medium.ledger.failures == 2


def test_txop_commitment_ignores_intent():
    # once started, the next D-1 intent bits are irrelevant
    medium, cfg = make()
    drive(medium, [(1, 0)])
    for _ in range(cfg.packet_len - 1):
        rec = medium.step([0, 0])
        assert rec.actions[0] == 1
    assert medium.remaining[0] == 0


def test_lbt_coerces_busy_start():
    medium, _ = make("{A,B}")
    drive(medium, [(1, 0)])
    rec = medium.step([1, 1])     # B senses A busy, start is coerced
    assert rec.actions[1] == 0
    assert rec.coerced[1] is True
    assert rec.coerced[0] is False


def test_hidden_terminal_not_coerced():
    medium, _ = make("{A|B}")
    drive(medium, [(1, 0)])
    rec = medium.step([1, 1])     # B cannot hear A, so its start is legal
    assert rec.actions[1] == 1
    assert rec.coerced[1] is False


def test_difs_required_after_busy():
    medium, cfg = make("{A,B}")
    drive(medium, [(1, 0)] + [(0, 0)] * (cfg.packet_len - 1))
    rec = medium.step([0, 1])     # first idle slot: streak still 0
    assert rec.actions[1] == 0
    rec = medium.step([0, 1])     # one full idle slot elapsed
    assert rec.actions[1] == 1


def test_sense_is_one_hop_only():
    medium, _ = make("{A,B|C}")
    rec = medium.step([1, 0, 0])
    assert rec.senses[0] is None          # transmitting, no reading
    assert rec.senses[1] == 1             # hears A
    assert rec.senses[2] == 0             # hidden from A


def test_mid_packet_and_eligible():
    medium, cfg = make()
    assert medium.eligible(0)
    drive(medium, [(1, 0)])
    assert medium.mid_packet(0)
    assert not medium.eligible(0)


def test_success_flag_incomplete_window_is_none():
    medium, cfg = make()
    drive(medium, [(1, 0), (0, 0)])
    assert medium.success_flag(0, 0) is None
    drive(medium, [(0, 0)] * (cfg.packet_len - 2))
    assert medium.success_flag(0, 0) == 1
    assert medium.success_flag(1, 0) == 0


def test_ledger_counts():
    medium, _ = make("{A|B}")
    drive(medium, [(1, 1)] + [(0, 0)] * 6)
    assert medium.ledger.attempts == 2
    assert medium.ledger.failures == 2
    assert medium.ledger.success_counts(0, 7) == [0, 0]


def test_global_state_zero_padded_before_start():
    cfg = SimConfig()
    medium = Medium(parse_topology("{A|B}"), cfg, start_slot=40,
                    initial_idle_streak=40)
    medium.step([1, 0])
    state = medium.global_state(41)
    assert state.shape == (2, cfg.lookback)
    assert state[0, -1] == 1.0
    assert state.sum() == 1.0


def test_global_state_matches_actions():
    medium, cfg = make("{A|B}")
    script = [(1, 0), (0, 0), (0, 1), (0, 0), (0, 0), (0, 0), (0, 0)]
    drive(medium, script)
    state = medium.global_state(7)
    # column k of the W-wide window covers slot 7-W+k
    for s in range(7):
        col = cfg.lookback - 7 + s
        assert state[0, col] == medium.actions_at(s)[0]
        assert state[1, col] == medium.actions_at(s)[1]


def test_initial_idle_streak_gates_first_slot():
    cfg = SimConfig()
    cold = Medium(parse_topology("{A}"), cfg, initial_idle_streak=0)
    rec = cold.step([1])
    assert rec.actions[0] == 0 and rec.coerced[0]


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(packet_len=0)
    with pytest.raises(ValueError):
        SimConfig(lookback=5, packet_len=5)
    with pytest.raises(ValueError):
        SimConfig(difs=0)


def test_drop_deadline_slots():
    assert SimConfig().drop_deadline_slots == 11111


def test_slot_record_json_round_trip():
    import json

    medium, _ = make("{A|B}")
    rec = medium.step([1, 0])
    data = json.loads(rec.to_json())
    assert data["slot"] == 0
    assert data["actions"] == [1, 0]
    assert data["senses"] == [-1, 0]
