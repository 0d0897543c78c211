"""The fixed 4-class label vocabulary.

Order is alphabetical and is part of the external contract: class index
0 is deterioration, 1 mould, 2 normal, 3 stain. Every confusion matrix,
report row and probability printout follows this order.
"""

LABEL_NAMES = ("deterioration", "mould", "normal", "stain")

LABEL_INDEX = {name: i for i, name in enumerate(LABEL_NAMES)}


def label_index(name: str) -> int:
    try:
        return LABEL_INDEX[name]
    except KeyError:
        raise ValueError(
            f"unknown label {name!r}; expected one of {', '.join(LABEL_NAMES)}"
        ) from None
