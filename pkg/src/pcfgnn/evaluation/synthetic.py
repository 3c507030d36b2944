"""
Planted-factor synthetic click logs.

Every user and item gets a latent vector; a record's click probability is

    sigmoid(logit_scale * (<z_user, z_item> - latent_dim * latent_mean**2) / sqrt(latent_dim)
            + bias + noise * N(0, 1))

with a fresh noise draw per record. Latent entries are drawn from
N(latent_mean, latent_std**2); the centering term is the expected inner
product, so ``bias`` is the logit of an average pair. With a mean well above
the spread, a pair's logit is mostly a user effect plus an item effect, with
a smaller user-item interaction on top. Users and items are drawn with Zipf-like
popularity, so a pre-training log covers the popular pairs densely and the
tail sparsely. The downstream test log mixes in a controlled fraction of
pairs that never occur in the pre-training log but whose user and item both do.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from pcfgnn.errors import ContractError
from pcfgnn.ingest.events import EventRecord, FeatureRef, RelationSchema, write_event_log
from pcfgnn.rng import stream

logger = logging.getLogger(__name__)

USER_FIELD = "user"
ITEM_FIELD = "item"


class SyntheticSpec(BaseModel):
    """Generator settings (``synthetic.*`` keys)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_users: int = Field(200, ge=1)
    num_items: int = Field(100, ge=1)
    latent_dim: int = Field(4, ge=1)
    noise: float = Field(0.1, ge=0)
    pretrain_samples: int = Field(50_000, ge=1)
    train_samples: int = Field(20_000, ge=1)
    test_samples: int = Field(10_000, ge=1)
    new_fraction: float = Field(0.2, ge=0, le=1)
    logit_scale: float = 3.0
    bias: float = -1.0
    latent_mean: float = 2.0
    latent_std: float = Field(0.2, ge=0)
    popularity_exponent: float = Field(1.0, ge=0)
    seed: int = 0


def synthetic_schema() -> RelationSchema:
    return RelationSchema(fields=(USER_FIELD, ITEM_FIELD), relations=((USER_FIELD, ITEM_FIELD),))


@dataclass
class SyntheticData:
    """Generated logs plus the planted model behind them."""

    spec: SyntheticSpec
    schema: RelationSchema
    pretrain: list[EventRecord]
    train: list[EventRecord]
    test: list[EventRecord]
    user_latents: np.ndarray
    item_latents: np.ndarray

    def planted_logit(self, user: int, item: int) -> float:
        dot = float(self.user_latents[user] @ self.item_latents[item])
        return float(_logits(np.array([dot]), self.spec)[0])

    def planted_probability(self, user: int, item: int) -> float:
        """Noise-free click probability of a pair."""
        return 1.0 / (1.0 + math.exp(-self.planted_logit(user, item)))

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write ``pretrain.tsv``, ``train.tsv``, ``test.tsv`` and ``schema.conf``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, records in (("pretrain", self.pretrain), ("train", self.train), ("test", self.test)):
            paths[name] = directory / f"{name}.tsv"
            write_event_log(paths[name], records, self.schema)
        paths["schema"] = directory / "schema.conf"
        paths["schema"].write_text(self.schema.to_config_text(), encoding="utf-8")
        return paths


def _logits(dots: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    centered = dots - spec.latent_dim * spec.latent_mean**2
    return spec.logit_scale * centered / math.sqrt(spec.latent_dim) + spec.bias


def _popularity(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    weights = weights[rng.permutation(n)]
    return weights / weights.sum()


def _records(
    users: np.ndarray, items: np.ndarray, data: SyntheticData, rng: np.random.Generator
) -> list[EventRecord]:
    spec = data.spec
    dots = np.einsum("ij,ij->i", data.user_latents[users], data.item_latents[items])
    logits = _logits(dots, spec) + spec.noise * rng.standard_normal(len(users))
    clicks = rng.random(len(users)) < 1.0 / (1.0 + np.exp(-logits))
    return [
        EventRecord(
            label=int(c),
            features=(FeatureRef(USER_FIELD, f"u{u}"), FeatureRef(ITEM_FIELD, f"i{i}")),
        )
        for u, i, c in zip(users.tolist(), items.tolist(), clicks.tolist(), strict=True)
    ]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """
    Draw the three logs; identical specs give identical records.

    Raises:
        ContractError: New pairs were requested but every pair of
            pre-training users and items was already observed.
    """
    latent_rng = stream(spec.seed, "synthetic", "latents")
    user_latents = spec.latent_mean + spec.latent_std * latent_rng.standard_normal(
        (spec.num_users, spec.latent_dim)
    )
    item_latents = spec.latent_mean + spec.latent_std * latent_rng.standard_normal(
        (spec.num_items, spec.latent_dim)
    )
    user_pop = _popularity(spec.num_users, spec.popularity_exponent, latent_rng)
    item_pop = _popularity(spec.num_items, spec.popularity_exponent, latent_rng)

    data = SyntheticData(
        spec=spec,
        schema=synthetic_schema(),
        pretrain=[],
        train=[],
        test=[],
        user_latents=user_latents,
        item_latents=item_latents,
    )

    def draw(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        return rng.choice(spec.num_users, size=n, p=user_pop), rng.choice(spec.num_items, size=n, p=item_pop)

    rng = stream(spec.seed, "synthetic", "pretrain")
    pre_users, pre_items = draw(spec.pretrain_samples, rng)
    data.pretrain = _records(pre_users, pre_items, data, rng)

    rng = stream(spec.seed, "synthetic", "train")
    data.train = _records(*draw(spec.train_samples, rng), data, rng)

    rng = stream(spec.seed, "synthetic", "test")
    n_new = int(round(spec.new_fraction * spec.test_samples))
    users, items = draw(spec.test_samples - n_new, rng)
    if n_new:
        seen = np.zeros((spec.num_users, spec.num_items), dtype=bool)
        seen[pre_users, pre_items] = True
        known = np.zeros_like(seen)
        known[np.ix_(np.unique(pre_users), np.unique(pre_items))] = True
        candidates = np.flatnonzero(known & ~seen)
        if len(candidates) == 0:
            raise ContractError("no unseen pair of known user and item is left to build New test samples")
        picked = rng.choice(candidates, size=n_new)
        users = np.concatenate([users, picked // spec.num_items])
        items = np.concatenate([items, picked % spec.num_items])
        order = rng.permutation(spec.test_samples)
        users, items = users[order], items[order]
    data.test = _records(users, items, data, rng)

    logger.info(
        "generated synthetic logs: %d pretrain, %d train, %d test (%d forced New)",
        len(data.pretrain),
        len(data.train),
        len(data.test),
        n_new,
    )
    return data
