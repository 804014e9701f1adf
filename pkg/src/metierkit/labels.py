"""Metier label universe and reference counts for the Azores landings corpus."""

METIERS = (
    "FPO-CRU",
    "FPO-PB",
    "GNS-PB",
    "LHP-CEF",
    "LHP-PB",
    "LHP-PBC",
    "LHP-TUN",
    "LLD-GPP",
    "LLD-PP",
    "LLS-DEEP",
    "LLS-PD",
    "PS-PB",
    "PS-PPP",
)

# landings per metier, 2010-2017
LANDING_COUNTS = {
    "FPO-CRU": 2,
    "FPO-PB": 46,
    "GNS-PB": 365,
    "LHP-CEF": 3316,
    "LHP-PB": 4532,
    "LHP-PBC": 22,
    "LHP-TUN": 1019,
    "LLD-GPP": 31,
    "LLD-PP": 109,
    "LLS-DEEP": 231,
    "LLS-PD": 2732,
    "PS-PB": 43,
    "PS-PPP": 1507,
}

# designation change at the start of 2017
RENAMES = {"LHM-CEF": "LHP-CEF", "LHM-PB": "LHP-PB"}

MAJORITY = ("LLS-PD", "LHP-CEF", "LHP-PB")
MINORITY = ("FPO-PB", "LHP-PBC", "LLS-DEEP", "PS-PB")


def class_proportions(classes=METIERS):
    """Landing share of each class in ``classes`` under the reference counts."""
    total = sum(LANDING_COUNTS[c] for c in classes)
    return {c: LANDING_COUNTS[c] / total for c in classes}


def label_index(classes=METIERS):
    return {c: i for i, c in enumerate(classes)}
