"""Writes the pageview fixture cache under fixtures/pageviews/.

Days 15-30 March 2018 carry the published Miami Open counts. The rest of the
trailing-year window is synthetic filler, drawn so that the 366-day median
before the 30 March semi-final is 26.5 (Collins) and 27 (Ostapenko).
"""
import csv
import datetime as dt
import json
import os
import random

ROOT = os.path.join(os.path.dirname(__file__), "..", "fixtures", "pageviews")
MATCH = dt.date(2018, 3, 30)
WINDOW = [MATCH - dt.timedelta(days=k) for k in range(366, 0, -1)]

KNOWN = {
    "Danielle_Collins": [212, 111, 86, 66, 188, 246, 565, 380, 1023, 827, 2097,
                         2485, 7779, 12208, 39955, 21777],
    "Jelena_Ostapenko": [27, 57, 55, 38, 28, 43, 23, 19, 35, 20, 39, 36, 44, 54,
                         39, 180],
}


def filler(name, rng):
    if name == "Danielle_Collins":
        lows = [26] + [rng.randint(8, 26) for _ in range(182)]
        highs = [27] + [rng.randint(27, 70) for _ in range(167)]
        vals = lows + highs
    else:
        lows = [rng.randint(6, 26) for _ in range(170)]
        highs = [rng.randint(28, 90) for _ in range(169)]
        vals = lows + [27] * 12 + highs
    rng.shuffle(vals)
    return vals


def main():
    rng = random.Random(20180330)
    index = {"profiles": {}}
    for name, known in KNOWN.items():
        counts = {}
        days = [dt.date(2018, 3, 15) + dt.timedelta(days=k) for k in range(16)]
        for d, v in zip(days, known):
            counts[d] = v
        fill_days = [d for d in WINDOW if d not in counts]
        for d, v in zip(fill_days, filler(name, rng)):
            counts[d] = v
        months = {}
        for d, v in sorted(counts.items()):
            months.setdefault(d.strftime("%Y-%m"), []).append((d, v))
        os.makedirs(os.path.join(ROOT, name), exist_ok=True)
        for month, rows in months.items():
            with open(os.path.join(ROOT, name, month + ".csv"), "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["date", "views"])
                for d, v in rows:
                    w.writerow([d.isoformat(), v])
        index["profiles"][name] = {
            "first_available": "2015-07-01",
            "months": sorted(months),
        }
    index["profiles"]["Emma_Raducanu"] = {"first_available": "2021-06-05", "months": []}
    with open(os.path.join(ROOT, "index.json"), "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
