"""Conversion of the public benchmark files into plain comma-separated tables.

Neither file is downloaded here; fetch them manually from the UCI repository
(see README) and run ``prepare_student`` / ``prepare_crime`` once.
"""

from __future__ import annotations

import re
from pathlib import Path

import pandas as pd

from .errors import DataError

CRIME_FEATURES = (
    "PctIlleg", "PctKids2Par", "PctFam2Par", "racePctWhite", "PctYoungKids2Par",
    "PctTeen2Par", "racepctblack", "PctPersDenseHous", "pctWPubAsst",
    "FemalePctDiv", "TotalPctDiv",
)
CRIME_RESPONSE = "ViolentCrimesPerPop"
BLACK_THRESHOLD = 0.5


def prepare_student(src, dst):
    """``student-mat.csv`` (semicolon separated) to a comma-separated copy."""
    frame = pd.read_csv(src, sep=";", dtype=str, keep_default_na=False)
    if "G3" not in frame.columns or "sex" not in frame.columns:
        raise DataError(f"{src} does not look like the student performance table")
    frame.to_csv(dst, index=False, lineterminator="\n")
    return len(frame)


def crime_attribute_names(names_path):
    text = Path(names_path).read_text(encoding="latin-1")
    names = re.findall(r"^@attribute\s+(\S+)", text, flags=re.MULTILINE)
    if not names:
        raise DataError(f"no @attribute lines in {names_path}")
    return names


def prepare_crime(data_path, names_path, dst, features=CRIME_FEATURES):
    """Select the configured predictors and the response from the crime table
    and add a ``black_community`` column (1 when the black population share
    exceeds 0.5, else 0).

    ``data_path`` is either the raw headerless ``communities.data`` (with
    ``names_path`` pointing at ``communities.names``) or, when ``names_path``
    is None, any CSV with a header using the same attribute names.
    """
    if names_path is None:
        frame = pd.read_csv(data_path, dtype=str, keep_default_na=False)
    else:
        names = crime_attribute_names(names_path)
        frame = pd.read_csv(data_path, header=None, names=names, dtype=str,
                            keep_default_na=False)
    cols = list(features) + [CRIME_RESPONSE]
    missing = [c for c in cols if c not in frame.columns]
    if missing:
        raise DataError(f"columns missing from crime data: {missing}")
    out = frame[cols].apply(lambda c: c.str.strip())
    if (out == "?").any().any():
        raise DataError("selected crime columns contain missing values")
    share = out["racepctblack"].astype(float)
    out.insert(len(features), "black_community",
               (share > BLACK_THRESHOLD).astype(int).astype(str))
    out.to_csv(dst, index=False, lineterminator="\n")
    return len(out)
