"""Per-terminal partial observations: ternary history rows plus look-back revision.

Each terminal keeps a 3 x W buffer: its own actions, the consolidated one-hop
row and the consolidated two-hop row.  Entries are 0, 1, or UNK.  Carrier
sensing fills the one-hop row while the terminal is idle; revision on ACK
resolves the two-hop row (and the one-hop row during own transmissions).
"""

from __future__ import annotations

import numpy as np

UNK = 2  # sentinel entry; self row never holds it

# Network input encoding for ternary entries.  0.5 for UNK keeps the input a
# dense real 3 x W matrix; the exact embedding is a free design choice.
_ENCODE = np.array([0.0, 1.0, 0.5])


class Observation:
    """Sliding 3 x W ternary history for one terminal.

    Column k covers slot t-W+k where t is the next decision slot; index W-1 is
    the most recent slot.
    """

    def __init__(self, width, packet_len):
        if width <= packet_len:
            raise ValueError("window must exceed packet length")
        self.width = width
        self.packet_len = packet_len
        self.self_row = np.zeros(width, dtype=np.int8)
        self.oh_row = np.zeros(width, dtype=np.int8)
        self.th_row = np.full(width, UNK, dtype=np.int8)

    def reset_idle(self):
        """All-idle warm history: own and sensed rows 0, two-hop row unknown."""
        self.self_row[:] = 0
        self.oh_row[:] = 0
        self.th_row[:] = UNK

    def push(self, own_action, sense):
        """Append the column for the slot just finished; drops the oldest.

        ``sense`` must be None iff ``own_action`` is 1 (cannot sense while
        transmitting).
        """
        if own_action:
            if sense is not None:
                raise ValueError("transmitting terminal has no sense reading")
            oh = UNK
        else:
            if sense not in (0, 1):
                raise ValueError("idle terminal needs a 0/1 sense reading")
            oh = sense
        for row, val in ((self.self_row, own_action), (self.oh_row, oh),
                         (self.th_row, UNK)):
            row[:-1] = row[1:]
            row[-1] = val
        return self

    def revise_on_ack(self):
        """Look-back revision over the last D columns after an ACK.

        Cases (all quantified over the whole revision window):
          1. own row all 1  -> one-hop and two-hop rows := 0
          2. own row all 0, one-hop row all 0 -> two-hop row := 1
          3. own row all 0, one-hop row all 1 -> two-hop row := 0
        Mixed windows carry no safe inference and are left untouched.
        """
        d = self.packet_len
        own = self.self_row[-d:]
        oh = self.oh_row[-d:]
        if np.all(own == 1):
            self.oh_row[-d:] = 0
            self.th_row[-d:] = 0
        elif np.all(own == 0):
            if np.all(oh == 0):
                self.th_row[-d:] = 1
            elif np.all(oh == 1):
                self.th_row[-d:] = 0
        return self

    def unknown_fraction(self):
        """Share of UNK entries among the 2W inferable (OH + TH) entries."""
        unk = int(np.count_nonzero(self.oh_row == UNK)) \
            + int(np.count_nonzero(self.th_row == UNK))
        return unk / (2 * self.width)

    def encode(self):
        """3 x W float matrix for the policy network (UNK -> 0.5)."""
        return np.stack([
            _ENCODE[self.self_row],
            _ENCODE[self.oh_row],
            _ENCODE[self.th_row],
        ])

    def to_dict(self):
        return {
            "self": self.self_row.tolist(),
            "oh": self.oh_row.tolist(),
            "th": self.th_row.tolist(),
        }

    @classmethod
    def from_dict(cls, data, packet_len):
        obs = cls(len(data["self"]), packet_len)
        obs.self_row[:] = data["self"]
        obs.oh_row[:] = data["oh"]
        obs.th_row[:] = data["th"]
        return obs


class AltObservation:
    """Ablation layout: own actions, sensed one-hop row, and raw ACK bits.

    No look-back revision; the third row simply records whether an ACK was
    delivered for the window ending at each slot.
    """

    def __init__(self, width, packet_len):
        self.width = width
        self.packet_len = packet_len
        self.self_row = np.zeros(width, dtype=np.int8)
        self.oh_row = np.zeros(width, dtype=np.int8)
        self.ack_row = np.zeros(width, dtype=np.int8)

    def reset_idle(self):
        self.self_row[:] = 0
        self.oh_row[:] = 0
        self.ack_row[:] = 0

    def push(self, own_action, sense, ack):
        oh = UNK if own_action else sense
        for row, val in ((self.self_row, own_action), (self.oh_row, oh),
                         (self.ack_row, 1 if ack else 0)):
            row[:-1] = row[1:]
            row[-1] = val
        return self

    def revise_on_ack(self):
        return self  # ACKs are already explicit in the third row

    def unknown_fraction(self):
        unk = int(np.count_nonzero(self.oh_row == UNK))
        return unk / (2 * self.width)

    def encode(self):
        return np.stack([
            _ENCODE[self.self_row],
            _ENCODE[self.oh_row],
            self.ack_row.astype(np.float64),
        ])
