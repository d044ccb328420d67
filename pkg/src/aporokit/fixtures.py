"""Synthetic corpora.

Two generators live here. reference_stats_rows() rebuilds a dataset whose
class x region x country x split counts equal the published reference
statistics exactly (1,816 rows; 520/723/573 by class; 347/494/389 train and
173/229/184 test by class), with synthetic texts, so dataset-bookkeeping and
split logic can be verified without redistributing any real posts.
synthetic_corpus() emits a raw 500-record collection file, noise included,
that drives the full pipeline end to end.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

TOPIC_IDS = [5, 6, 10, 14, 38, 49, 56, 67, 88, 91, 96, 100, 106, 118, 139]

# (region, country, direct, reporting, none); None country means no location
REFERENCE_COUNTRY_COUNTS = [
    ("Africa", "Ghana", 4, 6, 2),
    ("Africa", "Kenya", 7, 22, 11),
    ("Africa", "Nigeria", 17, 26, 27),
    ("Africa", "South Africa", 34, 50, 47),
    ("Africa", "Uganda", 4, 5, 6),
    ("Europe", "France", 1, 1, 3),
    ("Europe", "Germany", 3, 3, 0),
    ("Europe", "Ireland", 9, 17, 6),
    ("Europe", "United Kingdom", 86, 138, 94),
    ("NorthAmerica", "Canada", 5, 16, 8),
    ("NorthAmerica", "United States", 124, 120, 104),
    ("Oceania", "Australia", 49, 68, 63),
    ("Oceania", "New Zealand", 9, 21, 19),
    ("SouthAsia", "India", 28, 56, 50),
    ("SouthAsia", "Pakistan", 5, 28, 17),
    ("SouthAsia", "Philippines", 3, 10, 5),
    ("Other", None, 132, 136, 111),
]

REFERENCE_CLASS_TOTALS = {"Direct": 520, "Reporting": 723, "None": 573}
REFERENCE_TRAIN_COUNTS = {"Direct": 347, "Reporting": 494, "None": 389}
REFERENCE_TEST_COUNTS = {"Direct": 173, "Reporting": 229, "None": 184}
REFERENCE_CUT = "2022-11-01T00:00:00Z"

_CLASS_TEXTS = {
    "Direct": [
        "the homeless are lazy and just want another handout",
        "keep them away from the station, poor people are ruining this street",
        "another junkie camp, tell the poor to get a job already",
        "welfare is a scam, low-income folks milk it while we pay",
        "this homeless invasion makes it dangerous to walk home",
    ],
    "Reporting": [
        "the minister keeps blaming the poor for the budget hole",
        "report says police unfairly targets homeless people downtown",
        "it is wrong how the press mocked low-income families again",
        "one rule for the rich, another for the poor, as the court case shows",
        "they accused welfare recipients of fraud with zero evidence, stop demonizing them",
    ],
    "None": [
        "the new shelter offers job training for homeless residents",
        "city report maps rent increases across every district",
        "volunteers cooked hundreds of meals for low-income families",
        "library hours extended so the poor can access computers later",
        "grant funds health checkups for underprivileged kids",
    ],
}


def reference_stats_rows() -> list[dict]:
    """Rows carrying the exact reference class/region/country/split counts."""
    rng = random.Random(20220825)
    per_class_rows: dict[str, list[dict]] = {"Direct": [], "Reporting": [], "None": []}
    counter = 0
    for region, country, n_direct, n_reporting, n_none in REFERENCE_COUNTRY_COUNTS:
        for label, count in (("Direct", n_direct), ("Reporting", n_reporting), ("None", n_none)):
            for _ in range(count):
                counter += 1
                base = _CLASS_TEXTS[label][counter % len(_CLASS_TEXTS[label])]
                per_class_rows[label].append(
                    {
                        "id": f"ref{counter:05d}",
                        "text": f"{base} (case {counter})",
                        "region": region,
                        "country": country or "",
                        "topic_id": TOPIC_IDS[counter % len(TOPIC_IDS)],
                        "label": label,
                    }
                )
    rows: list[dict] = []
    for label, class_rows in per_class_rows.items():
        assert len(class_rows) == REFERENCE_CLASS_TOTALS[label]
        rng.shuffle(class_rows)
        n_train = REFERENCE_TRAIN_COUNTS[label]
        for idx, row in enumerate(class_rows):
            if idx < n_train:
                month = "2022-09" if idx % 2 == 0 else "2022-10"
            else:
                month = "2022-11"
            day = (idx % 27) + 1
            row["month"] = month
            row["created_at"] = f"{month}-{day:02d}T{idx % 24:02d}:00:00Z"
            rows.append(row)
    rows.sort(key=lambda r: r["id"])
    return rows


def write_reference_dataset(path: str | Path) -> list[dict]:
    """Write the reference-statistics dataset in the export CSV schema
    (plus country and created_at columns)."""
    rows = reference_stats_rows()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["id", "text", "region", "topic_id", "month", "label", "country", "created_at"],
        )
        writer.writeheader()
        writer.writerows(rows)
    return rows


# -- raw synthetic collection -----------------------------------------------------

_LOCATIONS = [
    ("Austin, TX", None),
    ("Seattle, WA", None),
    ("Toronto", None),
    (None, "United States"),
    ("London", None),
    ("Manchester, England", None),
    (None, "Ireland"),
    ("Lagos, Nigeria", None),
    ("Nairobi, Kenya", None),
    (None, "South Africa"),
    ("Mumbai, India", None),
    ("Karachi, Pakistan", None),
    ("Sydney, Australia", None),
    (None, "New Zealand"),
    ("somewhere on earth", None),
    ("", None),
    ("the moon", None),
]

_THEME_TEMPLATES = [
    (
        "crime",
        [
            "police arrested {noun} near the {place}, crime and the poor again",
            "the courts keep blaming the poor for every theft at the {place}",
            "another break-in and of course they say poor people did it",
            "prison is packed because the law unfairly targets low-income men",
        ],
    ),
    (
        "addiction",
        [
            "saw a junkie camp by the {place}, homeless addicts everywhere",
            "they are homeless because of drugs, leave the {place} clean",
            "stop demonizing homeless people as addicts, most are not",
            "clinic at the {place} now treats addiction among the poor for free",
        ],
    ),
    (
        "shelter",
        [
            "the new shelter near the {place} offers beds and job training for the homeless",
            "volunteers cooked meals for low-income families at the {place}",
            "donations keep the {place} shelter open all winter",
            "grant program funds housing for underprivileged youth near the {place}",
        ],
    ),
    (
        "blame",
        [
            "the mayor keeps blaming welfare recipients for the deficit",
            "easier to blame the poor than tax the rich, says the op-ed",
            "poor people are lazy and want another handout, claims the pundit",
            "welfare is a scam and the poor are milking it, he said on air",
        ],
    ),
    (
        "housing",
        [
            "rent near the {place} is up again, squeezing low-income tenants",
            "study maps evictions across the city, the poor hit hardest",
            "housing report counts how many poor families left the {place} district",
            "new towers replace cheap flats, pushing the poor out of the {place}",
        ],
    ),
    (
        "encampment",
        [
            "the encampment by the {place} makes it dangerous to walk at night",
            "clear the tents, the homeless invasion is ruining the {place}",
            "residents say the {place} camp smells and want the homeless gone",
            "council reported for bulldozing the homeless camp at the {place} unfairly",
        ],
    ),
]

_PLACES = ["park", "station", "market", "library", "bridge", "mall", "river", "depot"]
_NOUNS = ["a man", "two men", "a group", "someone"]


def synthetic_corpus(n: int = 500, seed: int = 7) -> list[dict]:
    """Raw collection records, noise included: retweets, duplicates, URL posts,
    hashtag-heavy posts, and bot-named accounts for the filters to reject."""
    rng = random.Random(seed)
    rows: list[dict] = []
    months = ["2022-09", "2022-10", "2022-11"]
    for i in range(n):
        theme, templates = _THEME_TEMPLATES[i % len(_THEME_TEMPLATES)]
        template = rng.choice(templates)
        text = template.format(place=rng.choice(_PLACES), noun=rng.choice(_NOUNS))
        text = f"{text} [{theme[:2]}{i}]"
        month = months[rng.randrange(3)]
        day = rng.randrange(1, 28)
        location, country = _LOCATIONS[rng.randrange(len(_LOCATIONS))]
        row = {
            "id": f"syn{i:05d}",
            "text": text,
            "created_at": f"{month}-{day:02d}T{rng.randrange(24):02d}:{rng.randrange(60):02d}:00Z",
            "place_country": country,
            "user_location_raw": location,
            "user_name": f"user {i}",
            "screen_name": f"user_{i}",
            "is_retweet": False,
        }
        noise = rng.random()
        if noise < 0.03:
            row["is_retweet"] = True
        elif noise < 0.06 and rows:
            row["text"] = rows[rng.randrange(len(rows))]["text"].upper()
        elif noise < 0.09:
            row["text"] += " https://example.com/post"
        elif noise < 0.11:
            row["text"] += " #a #b #c #d #e #f"
        elif noise < 0.13:
            row["screen_name"] = f"newsbot_{i}"
        rows.append(row)
    return rows


def write_raw_corpus(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
