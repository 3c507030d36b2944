"""
MovieLens-1M conversion.

Turns the ``::``-separated ratings/movies/users files into the TSV event-log
format, split chronologically into pre-training, downstream-training and
downstream-test logs. A rating counts as a click when it reaches
``click_threshold``.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from pcfgnn.errors import ContractError
from pcfgnn.ingest.events import RelationSchema

logger = logging.getLogger(__name__)

SPLITS = ("pretrain", "train", "test")


@dataclass
class MovieLensResult:
    """Paths and sizes of a conversion run."""

    output_dir: Path
    schema_path: Path
    log_paths: dict[str, Path]
    rows: dict[str, int]
    click_rate: float


def _read_dat(path: Path, columns: list[str]) -> pd.DataFrame:
    return pd.read_csv(
        path,
        sep="::",
        engine="python",
        names=columns,
        dtype=str,
        encoding="latin-1",
    )


def load_movielens(source_dir: str | Path, include_user_profile: bool = False) -> pd.DataFrame:
    """
    Join ratings with movie genres (and optionally user age/occupation).

    Returns one row per rating with columns ``rating``, ``timestamp``,
    ``user_id``, ``movie_id``, ``genres`` [, ``age``, ``occupation``].
    """
    source_dir = Path(source_dir)
    ratings = _read_dat(source_dir / "ratings.dat", ["user_id", "movie_id", "rating", "timestamp"])
    movies = _read_dat(source_dir / "movies.dat", ["movie_id", "title", "genres"])
    frame = ratings.merge(movies[["movie_id", "genres"]], on="movie_id", how="left")
    frame["genres"] = frame["genres"].fillna("unknown")

    if include_user_profile:
        users = _read_dat(
            source_dir / "users.dat", ["user_id", "gender", "age", "occupation", "zip"]
        )
        frame = frame.merge(users[["user_id", "age", "occupation"]], on="user_id", how="left")

    frame["rating"] = frame["rating"].astype(int)
    frame["timestamp"] = frame["timestamp"].astype(int)
    return frame


def movielens_schema(include_user_profile: bool = False) -> RelationSchema:
    """The public-data graph: User_id x Genres."""
    fields = ["user_id", "movie_id", "genres"]
    if include_user_profile:
        fields += ["age", "occupation"]
    return RelationSchema(fields=tuple(fields), relations=(("user_id", "genres"),))


def convert_movielens(
    source_dir: str | Path,
    output_dir: str | Path,
    click_threshold: int = 4,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    include_user_profile: bool = False,
) -> MovieLensResult:
    """
    Write ``pretrain.tsv``, ``train.tsv``, ``test.tsv`` and ``schema.conf``.

    Ratings are ordered by timestamp (ties by user and movie id) before the
    split, so later logs only contain later interactions.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f <= 0 for f in fractions):
        raise ContractError(f"split fractions must be positive and sum to 1, got {fractions}")

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    schema = movielens_schema(include_user_profile)

    frame = load_movielens(source_dir, include_user_profile)
    frame = frame.sort_values(["timestamp", "user_id", "movie_id"], kind="mergesort")
    frame["label"] = (frame["rating"] >= click_threshold).astype(int)

    n = len(frame)
    first = int(round(n * fractions[0]))
    second = first + int(round(n * fractions[1]))
    bounds = {"pretrain": (0, first), "train": (first, second), "test": (second, n)}

    columns = ["label", *schema.fields]
    log_paths: dict[str, Path] = {}
    rows: dict[str, int] = {}
    for split in SPLITS:
        start, stop = bounds[split]
        part = frame.iloc[start:stop][columns]
        path = output_dir / f"{split}.tsv"
        part.to_csv(path, sep="\t", index=False, lineterminator="\n")
        log_paths[split] = path
        rows[split] = len(part)
        logger.info("wrote %d %s events to %s", len(part), split, path)

    schema_path = output_dir / "schema.conf"
    schema_path.write_text(schema.to_config_text(), encoding="utf-8")

    return MovieLensResult(
        output_dir=output_dir,
        schema_path=schema_path,
        log_paths=log_paths,
        rows=rows,
        click_rate=float(frame["label"].mean()) if n else 0.0,
    )
