#!/usr/bin/env python3
"""Generate the shipped single-phase IEEE 123-bus feeder description.

Conversion conventions (documented here and in the feeder JSON "notes"):

* The three-phase feeder is collapsed to a single-phase equivalent: per-bus
  spot loads are summed over phases, line impedances use a per-configuration
  positive-sequence-style ohms-per-mile catalog, and the voltage regulators
  and the 61-610 transformer are removed (the 610 load, if any, is ignored).
* Bus 149 becomes the substation (id 0); buses named 1..114 keep their
  number as id; the remaining junction buses are renumbered contiguously.
* Every otherwise-unloaded bus carries a 20 kW + 10 kvar service-drop
  equivalent so that all line flows are observable.
* Six switches define the reconfiguration structure.  Four of them chain the
  five switch-separated areas C-A-B-D-E (A holds the substation); the other
  two are alternate express ties from area C into area E.  The nine feasible
  radial patterns are exactly the published configuration table: any four
  switches closed except the combinations closing both ties at once.
* The backup corridor 60-160 (switch s6) is a long rural tie, so moving
  areas D/E onto it (configuration 3) depresses their voltages -- the
  reconfiguration stress case the control studies rely on.
* A global demand scale calibrates nominal loading to light conditions
  (about 1.1 MW) so the linearized model tracks the nonlinear feeder
  closely under the nominal configuration.

Run from the repository root:  python3 tools/build_ieee123.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "gridsense" / "data" / "ieee123.json"

BASE_MVA = 5.0
BASE_KV = 4.16
Z_BASE = BASE_KV**2 / BASE_MVA  # ohms

# global demand calibration (applied to all loads, including floors); the
# DER-hosting edge areas D/E (buses beyond switches s4/s6) run lighter
LOAD_SCALE = 0.28
D_SCALE = 0.3
E_SCALE = 0.75
D_AREA = set(range(67, 101)) | {160, 450}
E_AREA = set(range(101, 115)) | {197, 300}
FLOOR_KW, FLOOR_KVAR = 20.0, 10.0

# ohms per mile by conductor configuration code (single-phase equivalent)
IMPEDANCE = {
    1: (0.3060, 0.6270),
    2: (0.3100, 0.6300),
    3: (0.3120, 0.6350),
    4: (0.3150, 0.6400),
    5: (0.3180, 0.6450),
    6: (0.3200, 0.6500),
    7: (0.4013, 0.7000),
    8: (0.4100, 0.7100),
    9: (1.1280, 1.3430),
    10: (1.1280, 1.3430),
    11: (1.1280, 1.3430),
    12: (0.5181, 0.2149),
    13: (2.4000, 0.8000),   # small-conductor rural tie
}

# (from, to, length ft, config); 44-45-46 upgraded to three-phase (alternate
# tie corridor), 51-151 added to reach the express-tie take-off point
LINES = [
    (1, 2, 175, 10), (1, 3, 250, 11), (1, 7, 300, 1), (3, 4, 200, 11),
    (3, 5, 325, 11), (5, 6, 250, 11), (7, 8, 200, 1), (8, 12, 225, 10),
    (8, 9, 225, 9), (8, 13, 300, 1), (9, 14, 425, 9), (13, 34, 150, 11),
    (13, 18, 825, 2), (14, 11, 250, 9), (14, 10, 250, 9), (15, 16, 375, 11),
    (15, 17, 350, 11), (18, 19, 250, 9), (18, 21, 300, 2), (19, 20, 325, 9),
    (21, 22, 525, 10), (21, 23, 250, 2), (23, 24, 550, 11), (23, 25, 275, 2),
    (25, 26, 350, 7), (25, 28, 200, 2), (26, 27, 275, 7), (26, 31, 225, 11),
    (27, 33, 500, 9), (28, 29, 300, 2), (29, 30, 350, 2), (30, 250, 200, 2),
    (31, 32, 300, 11), (34, 15, 100, 11), (35, 36, 650, 8), (35, 40, 250, 1),
    (36, 37, 300, 9), (36, 38, 250, 10), (38, 39, 325, 10), (40, 41, 325, 11),
    (40, 42, 250, 1), (42, 43, 500, 10), (42, 44, 200, 1), (44, 45, 200, 2),
    (44, 47, 250, 1), (45, 46, 300, 2), (47, 48, 150, 4), (47, 49, 2000, 9),
    (49, 50, 2000, 9), (50, 51, 2000, 9), (52, 53, 200, 1), (53, 54, 125, 1),
    (54, 55, 275, 1), (54, 57, 350, 3), (55, 56, 275, 1), (57, 58, 250, 10),
    (57, 60, 750, 3), (58, 59, 250, 10), (60, 61, 550, 5), (60, 62, 250, 12),
    (62, 63, 175, 12), (63, 64, 350, 12), (64, 65, 425, 12), (65, 66, 325, 12),
    (67, 68, 200, 9), (67, 72, 275, 3), (67, 97, 250, 3), (68, 69, 275, 9),
    (69, 70, 325, 9), (70, 71, 275, 9), (72, 73, 275, 11), (72, 76, 200, 3),
    (73, 74, 350, 11), (74, 75, 400, 11), (76, 77, 400, 6), (76, 86, 700, 3),
    (77, 78, 100, 6), (78, 79, 225, 6), (78, 80, 475, 6), (80, 81, 475, 6),
    (81, 82, 250, 6), (81, 84, 675, 11), (82, 83, 250, 6), (84, 85, 475, 11),
    (86, 87, 450, 6), (87, 88, 175, 11), (87, 89, 275, 6), (89, 90, 225, 10),
    (89, 91, 225, 6), (91, 92, 300, 11), (91, 93, 225, 6), (93, 94, 275, 9),
    (93, 95, 300, 6), (95, 96, 200, 10), (97, 98, 275, 3), (98, 99, 550, 3),
    (99, 100, 300, 3), (100, 450, 800, 3), (101, 102, 225, 11),
    (101, 105, 275, 3), (102, 103, 325, 11), (103, 104, 700, 11),
    (105, 106, 225, 10), (105, 108, 325, 3), (106, 107, 575, 10),
    (108, 109, 450, 9), (108, 300, 1000, 3), (109, 110, 300, 9),
    (110, 111, 575, 9), (110, 112, 125, 9), (112, 113, 525, 9),
    (113, 114, 325, 9), (135, 35, 375, 4), (149, 1, 400, 1),
    (152, 52, 400, 1), (160, 67, 350, 6), (197, 101, 250, 3),
    (51, 151, 1200, 9),
]

# (name, from, to, length ft, config)
SWITCHES = [
    ("s1", 13, 152, 300, 1),     # area A - area B
    ("s2", 18, 135, 150, 2),     # area A - area C
    ("s3", 35, 300, 400, 1),     # express tie, area C head - area E
    ("s4", 97, 197, 150, 3),     # area D - area E
    ("s5", 151, 104, 2000, 12),  # alternate tie (cable), area C end - area E end
    ("s6", 60, 160, 7000, 13),   # thin backup corridor, area B - area D
]

# switch status per feasible configuration
CONFIGS = {
    "0": {"s1": 1, "s2": 1, "s3": 1, "s4": 1, "s5": 0, "s6": 0},
    "1": {"s1": 1, "s2": 1, "s3": 0, "s4": 1, "s5": 1, "s6": 0},
    "2": {"s1": 1, "s2": 1, "s3": 1, "s4": 0, "s5": 0, "s6": 1},
    "3": {"s1": 1, "s2": 1, "s3": 0, "s4": 1, "s5": 0, "s6": 1},
    "4": {"s1": 1, "s2": 0, "s3": 1, "s4": 1, "s5": 0, "s6": 1},
    "5": {"s1": 0, "s2": 1, "s3": 1, "s4": 1, "s5": 0, "s6": 1},
    "6": {"s1": 1, "s2": 1, "s3": 0, "s4": 0, "s5": 1, "s6": 1},
    "7": {"s1": 1, "s2": 0, "s3": 0, "s4": 1, "s5": 1, "s6": 1},
    "8": {"s1": 0, "s2": 1, "s3": 0, "s4": 1, "s5": 1, "s6": 1},
}

# spot loads (kW, kvar), three-phase totals of the published feeder
SPOT_LOADS = {
    1: (40, 20), 2: (20, 10), 4: (40, 20), 5: (20, 10), 6: (40, 20),
    7: (20, 10), 9: (40, 20), 10: (20, 10), 11: (40, 20), 12: (20, 10),
    16: (40, 20), 17: (20, 10), 19: (40, 20), 20: (40, 20), 22: (40, 20),
    24: (40, 20), 28: (40, 20), 29: (40, 20), 30: (40, 20), 31: (20, 10),
    32: (20, 10), 33: (40, 20), 34: (40, 20), 35: (40, 20), 37: (40, 20),
    38: (20, 10), 39: (20, 10), 41: (20, 10), 42: (20, 10), 43: (40, 20),
    45: (20, 10), 46: (20, 10), 47: (105, 75), 48: (210, 150), 49: (140, 100),
    50: (40, 20), 51: (20, 10), 52: (40, 20), 53: (40, 20), 55: (20, 10),
    56: (20, 10), 58: (20, 10), 59: (20, 10), 60: (20, 10), 62: (40, 20),
    63: (40, 20), 64: (75, 35), 65: (140, 100), 66: (75, 35), 68: (20, 10),
    69: (40, 20), 70: (20, 10), 71: (40, 20), 73: (40, 20), 74: (40, 20),
    75: (40, 20), 76: (245, 180), 77: (40, 20), 79: (40, 20), 80: (40, 20),
    82: (40, 20), 83: (20, 10), 84: (20, 10), 85: (40, 20), 86: (20, 10),
    87: (40, 20), 88: (40, 20), 90: (40, 20), 92: (40, 20), 94: (40, 20),
    95: (20, 10), 96: (20, 10), 98: (40, 20), 99: (40, 20), 100: (40, 20),
    102: (20, 10), 103: (40, 20), 104: (40, 20), 106: (40, 20), 107: (40, 20),
    109: (40, 20), 111: (20, 10), 112: (20, 10), 113: (40, 20), 114: (20, 10),
}

ROOT_NAME = 149
RENAMED = {135: 115, 151: 116, 152: 117, 160: 118, 197: 119,
           250: 120, 300: 121, 450: 122}


def bus_id(name: int) -> int:
    if name == ROOT_NAME:
        return 0
    return RENAMED.get(name, name)


def per_unit(length_ft: float, cfg: int):
    r_mi, x_mi = IMPEDANCE[cfg]
    miles = length_ft / 5280.0
    return r_mi * miles / Z_BASE, x_mi * miles / Z_BASE


def main():
    names = {ROOT_NAME} | set(RENAMED)
    for a, b, _, _ in LINES:
        names.add(a)
        names.add(b)
    for _, a, b, _, _ in SWITCHES:
        names.add(a)
        names.add(b)
    ids = sorted(bus_id(n) for n in names)
    assert ids == list(range(len(ids))), "bus ids must be contiguous"

    buses = []
    for name in sorted(names, key=bus_id):
        bid = bus_id(name)
        entry = {"id": bid, "name": str(name)}
        if bid != 0:
            kw, kvar = SPOT_LOADS.get(name, (FLOOR_KW, FLOOR_KVAR))
            s = LOAD_SCALE
            if name in D_AREA:
                s *= D_SCALE
            elif name in E_AREA:
                s *= E_SCALE
            entry["pd"] = round(kw * s / (BASE_MVA * 1000), 8)
            entry["qd"] = round(kvar * s / (BASE_MVA * 1000), 8)
        buses.append(entry)

    lines = []
    lid = 0
    for a, b, length, cfg in LINES:
        lid += 1
        r, x = per_unit(length, cfg)
        lines.append({"id": lid, "from": bus_id(a), "to": bus_id(b),
                      "r": round(r, 8), "x": round(x, 8)})
    for sname, a, b, length, cfg in SWITCHES:
        lid += 1
        r, x = per_unit(length, cfg)
        lines.append({"id": lid, "name": sname, "from": bus_id(a), "to": bus_id(b),
                      "r": round(r, 8), "x": round(x, 8), "switch": True})

    configurations = [
        {"name": name, "switch_states": {k: bool(v) for k, v in states.items()}}
        for name, states in CONFIGS.items()
    ]

    doc = {
        "name": "ieee123-single-phase",
        "base": {"mva": BASE_MVA, "kv": BASE_KV},
        "notes": (
            "Single-phase equivalent of the IEEE 123-bus test feeder with six "
            "reconfiguration switches (nine feasible radial configurations). "
            "Spot loads are phase totals scaled by {:.2f}; junction buses carry "
            "a {:.0f} kW + {:.0f} kvar service-drop equivalent. Substation bus "
            "149 is id 0; buses 135/151/152/160/197/250/300/450 are ids "
            "115-122. Impedances are per-unit on {:.0f} MVA / {:.2f} kV."
        ).format(LOAD_SCALE, FLOOR_KW, FLOOR_KVAR, BASE_MVA, BASE_KV),
        "buses": buses,
        "lines": lines,
        "configurations": configurations,
    }
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {OUT} ({len(buses)} buses, {len(lines)} lines)")


if __name__ == "__main__":
    main()
