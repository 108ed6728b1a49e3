"""Generate the small end-to-end corpus shipped under data/toy_corpus.

Three databases: two in a shared "media" cluster (one with domain
statements, one without) and a held-out "transport" database with
statements, plus four questions each with gold SQL. Run from the repo root:

    python3 scripts/build_toy_corpus.py
"""

from pathlib import Path

from dbrouter.schema import write_manifest

OUT = Path(__file__).resolve().parents[1] / "src" / "dbrouter" / "data" / "toy_corpus"


def col(name, type_, primary=False, foreign=False):
    out = {"name": name, "type": type_}
    if primary:
        out["primary"] = True
    if foreign:
        out["foreign"] = True
    return out


DATABASES = [
    {
        "db_id": "chinook_music",
        "partition": "train",
        "cluster": "media",
        "tables": [
            {
                "name": "albums",
                "columns": [
                    col("album id", "INTEGER", primary=True),
                    col("title", "TEXT"),
                    col("artist name", "TEXT"),
                ],
            },
            {
                "name": "tracks",
                "columns": [
                    col("track id", "INTEGER", primary=True),
                    col("name", "TEXT"),
                    col("album id", "INTEGER", foreign=True),
                    col("milliseconds", "INTEGER"),
                ],
            },
        ],
        "metadata": [
            {"id": "chinook_music-s0001", "text": "Track length is stored in milliseconds."},
            {"id": "chinook_music-s0002", "text": "Every track belongs to exactly one album."},
        ],
    },
    {
        "db_id": "concert_hall",
        "partition": "train",
        "cluster": "media",
        "tables": [
            {
                "name": "venues",
                "columns": [
                    col("venue id", "INTEGER", primary=True),
                    col("name", "TEXT"),
                    col("capacity", "INTEGER"),
                ],
            },
            {
                "name": "events",
                "columns": [
                    col("event id", "INTEGER", primary=True),
                    col("venue id", "INTEGER", foreign=True),
                    col("title", "TEXT"),
                    col("attendance", "INTEGER"),
                ],
            },
        ],
        "metadata": [],
    },
    {
        "db_id": "flight_ops",
        "partition": "holdout",
        "cluster": "transport",
        "tables": [
            {
                "name": "aircraft",
                "columns": [
                    col("aircraft id", "INTEGER", primary=True),
                    col("model", "TEXT"),
                    col("range km", "REAL"),
                ],
            },
            {
                "name": "flights",
                "columns": [
                    col("flight id", "INTEGER", primary=True),
                    col("aircraft id", "INTEGER", foreign=True),
                    col("origin", "TEXT"),
                    col("destination", "TEXT"),
                ],
            },
        ],
        "metadata": [
            {"id": "flight_ops-s0001", "text": "Aircraft range is measured in kilometres."},
            {"id": "flight_ops-s0002", "text": "Each flight is operated by a single aircraft."},
        ],
    },
]

SAMPLES = [
    {
        "question_id": "toy-q0001",
        "text": "How many albums are there?",
        "gold_db_id": "chinook_music",
        "sql": "SELECT count(*) FROM albums",
    },
    {
        "question_id": "toy-q0002",
        "text": "List the names of tracks longer than five minutes.",
        "gold_db_id": "chinook_music",
        "sql": "SELECT name FROM tracks WHERE milliseconds > 300000",
        "evidence_ids": ["chinook_music-s0001"],
    },
    {
        "question_id": "toy-q0003",
        "text": "Which album has the most tracks?",
        "gold_db_id": "chinook_music",
        "sql": (
            "SELECT albums.title FROM albums JOIN tracks ON albums.'album id' = "
            "tracks.'album id' GROUP BY albums.title ORDER BY count(*) DESC LIMIT 1"
        ),
        "evidence_ids": ["chinook_music-s0002"],
    },
    {
        "question_id": "toy-q0004",
        "text": "What is the average track length per artist?",
        "gold_db_id": "chinook_music",
        "sql": (
            "SELECT albums.'artist name', avg(tracks.milliseconds) FROM albums JOIN "
            "tracks ON albums.'album id' = tracks.'album id' GROUP BY albums.'artist name'"
        ),
        "evidence_ids": ["chinook_music-s0001"],
    },
    {
        "question_id": "toy-q0005",
        "text": "How many venues can seat more than a thousand people?",
        "gold_db_id": "concert_hall",
        "sql": "SELECT count(*) FROM venues WHERE capacity > 1000",
    },
    {
        "question_id": "toy-q0006",
        "text": "Show the titles of events held this season.",
        "gold_db_id": "concert_hall",
        "sql": "SELECT title FROM events",
    },
    {
        "question_id": "toy-q0007",
        "text": "Which venue hosted the best attended event?",
        "gold_db_id": "concert_hall",
        "sql": (
            "SELECT venues.name FROM venues JOIN events ON venues.'venue id' = "
            "events.'venue id' ORDER BY events.attendance DESC LIMIT 1"
        ),
    },
    {
        "question_id": "toy-q0008",
        "text": "What is the total attendance per venue?",
        "gold_db_id": "concert_hall",
        "sql": (
            "SELECT venues.name, sum(events.attendance) FROM venues JOIN events ON "
            "venues.'venue id' = events.'venue id' GROUP BY venues.name"
        ),
    },
    {
        "question_id": "toy-q0009",
        "text": "How many flights depart from Geneva?",
        "gold_db_id": "flight_ops",
        "sql": "SELECT count(*) FROM flights WHERE origin = 'Geneva'",
    },
    {
        "question_id": "toy-q0010",
        "text": "Which aircraft model has the longest range?",
        "gold_db_id": "flight_ops",
        "sql": "SELECT model FROM aircraft ORDER BY 'range km' DESC LIMIT 1",
        "evidence_ids": ["flight_ops-s0001"],
    },
    {
        "question_id": "toy-q0011",
        "text": "List destinations served by wide body aircraft.",
        "gold_db_id": "flight_ops",
        "sql": (
            "SELECT flights.destination FROM flights JOIN aircraft ON "
            "flights.'aircraft id' = aircraft.'aircraft id' WHERE aircraft.model = 'A330'"
        ),
        "evidence_ids": ["flight_ops-s0002"],
    },
    {
        "question_id": "toy-q0012",
        "text": "How many flights does each aircraft operate?",
        "gold_db_id": "flight_ops",
        "sql": (
            "SELECT aircraft.model, count(*) FROM aircraft JOIN flights ON "
            "aircraft.'aircraft id' = flights.'aircraft id' GROUP BY aircraft.model"
        ),
        "evidence_ids": ["flight_ops-s0002"],
    },
]


def main():
    write_manifest(OUT, DATABASES, SAMPLES)
    print(f"wrote {OUT}/databases.json and samples.json")


if __name__ == "__main__":
    main()
