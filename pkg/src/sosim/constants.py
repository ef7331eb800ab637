"""
Numbers behind the two reference networks.

Reconstructed, not published: apart from the A2 technology matrix and the consumer
demand vectors, these networks are only known qualitatively
(who supplies what, that commercial links are cheaper per unit than consumer
links, that producers form a loop). The values below were chosen to honour those
statements; results are read as orderings and shapes, never as these constants.
"""

# ---------------------------------------------------------------------------
# 3-agent validation network
# ---------------------------------------------------------------------------

VALIDATION_RESOURCES = ("R1", "R2", "R3")
VALIDATION_AGENTS = ("A1", "A2", "A3")

# {agent: {output: {input: coefficient}}}
VALIDATION_COLUMNS = {
    "A1": {"R3": {"R1": 0.5, "R2": 0.5}},
    "A2": {"R2": {"R1": 0.8}},
    "A3": {"R3": {"R1": 0.3, "R2": 0.6}},
}
VALIDATION_PROVIDERS = {"A1": {"R1": 1.0, "R2": 5.0}}
"""R2 straight from the provider is the expensive option"""
VALIDATION_DEMAND = {"A3": {"R3": 10.0}}

# (name, source, target, per-resource transport cost, priority)
VALIDATION_LINKS = (
    ("T1", "A1", "A2", (0.2, 0.2, 0.2), 1),
    ("T2", "A2", "A3", (0.3, 0.1, 0.1), 1),
    ("T3", "A1", "A3", (0.3, 0.3, 0.3), 2),
)

# ---------------------------------------------------------------------------
# 14-agent urban block
# ---------------------------------------------------------------------------

BLOCK_RESOURCES = ("power", "water", "gas", "petrol", "capital", "consumer")
BLOCK_AGENTS = tuple(f"A{i}" for i in range(14))
BLOCK_CONSUMERS = tuple(f"A{i}" for i in range(5, 14))

BLOCK_PROVIDERS = {
    "A0": {"petrol": 0.5, "capital": 0.5},
    "A1": {"power": 3.0, "water": 0.6, "gas": 0.4},
}

# Published technical coefficients of producing agent A2: power, water and consumer goods.
A2_MATRIX = (
    (0.18, 0.90, 0.0, 0.0, 0.0, 0.20),
    (0.30, 0.10, 0.0, 0.0, 0.0, 0.30),
    (0.76, 0.10, 0.0, 0.0, 0.0, 0.40),
    (0.30, 0.08, 0.0, 0.0, 0.0, 0.30),
    (0.14, 0.05, 0.0, 0.0, 0.0, 0.20),
    (0.10, 0.05, 0.0, 0.0, 0.0, 0.00),
)

_HOUSEHOLD = {"consumer": {"capital": 0.9, "power": 0.3, "water": 0.3, "gas": 0.3, "petrol": 0.3}}
"""A5 is the one household that can make consumer goods for itself; the rest buy everything."""

# One dominant input per column, smaller amounts of the rest.
BLOCK_COLUMNS = {
    "A1": {"power": {"gas": 0.6, "water": 0.1, "petrol": 0.1, "capital": 0.1, "consumer": 0.05}},
    "A3": {"consumer": {"capital": 0.7, "power": 0.2, "water": 0.1, "gas": 0.1, "petrol": 0.2}},
    "A4": {"consumer": {"petrol": 0.6, "power": 0.2, "water": 0.2, "gas": 0.1, "capital": 0.2}},
    "A5": _HOUSEHOLD,
}

# Published consumer demand vectors over BLOCK_RESOURCES.
BLOCK_DEMAND = {
    "A5": (9.75, 9.75, 12.75, 13.75, 17.75, 19.75),
    "A6": (10.75, 9.75, 11.75, 9.75, 9.75, 17.75),
    "A7": (9.75, 9.75, 9.75, 9.75, 9.75, 10.75),
    "A8": (9.75, 9.75, 9.75, 9.75, 9.75, 10.75),
    "A9": (9.75, 9.75, 9.75, 9.75, 9.75, 10.75),
    "A10": (9.75, 9.75, 9.75, 9.75, 9.75, 9.75),
    "A11": (9.75, 9.75, 9.75, 9.75, 9.75, 10.75),
    "A12": (9.75, 10.75, 9.75, 9.75, 9.75, 10.75),
    "A13": (9.75, 9.75, 9.75, 9.75, 10.75, 10.75),
}

COMMERCIAL_COST = 0.05
CONSUMER_COST = 0.1
CONSUMER_CAPACITY = 200.0

# Link ids follow this order. A0 -> A3, A0 -> A4 and A2 -> A1 must exist for the
# disruption scenarios; the producer loop closes through A1 <-> A2.
BLOCK_COMMERCIAL_LINKS = (
    ("A0", "A1"),
    ("A1", "A2"),
    ("A2", "A1"),
    ("A0", "A3"),
    ("A0", "A4"),
    ("A2", "A3"),
    ("A3", "A4"),
)
BLOCK_CONSUMER_LINKS = (
    ("A2", "A5"),
    ("A2", "A6"),
    ("A3", "A7"),
    ("A3", "A8"),
    ("A3", "A9"),
    ("A4", "A10"),
    ("A4", "A11"),
    ("A4", "A12"),
    ("A1", "A13"),
)

BROKEN_IN_INFRASTRUCTURE_SCENARIOS = (("A0", "A3"), ("A0", "A4"))
COSTLIER_IN_HEAVY_INFRASTRUCTURE = ("A2", "A1")
DISRUPTED_PRODUCERS = ("A1", "A2", "A3", "A4", "A5")
