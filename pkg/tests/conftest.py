import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kpnet.corpus import (
    Argument,
    KeyPoint,
    Label,
    MatchAnnotation,
    Stance,
    Topic,
    make_corpus,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def tiny_corpus():
    """One topic, both stances, two pro arguments and one pro key point."""
    topics = [Topic("t0", "Cities should ban cars from their centers")]
    arguments = [
        Argument("a1", "t0", Stance.PRO, "Walking through downtown is finally pleasant without traffic."),
        Argument("a2", "t0", Stance.PRO, "Shops see more visitors on pedestrian streets."),
        Argument("a3", "t0", Stance.CON, "Deliveries become a nightmare without street access."),
    ]
    key_points = [
        KeyPoint("k1", "t0", Stance.PRO, "Car-free centers improve quality of life"),
        KeyPoint("k2", "t0", Stance.CON, "Businesses depend on street access"),
    ]
    annotations = [
        MatchAnnotation("a1", "k1", Label.MATCH),
        MatchAnnotation("a2", "k1", Label.NO_MATCH),
        MatchAnnotation("a3", "k2", Label.MATCH),
    ]
    return make_corpus(topics, arguments, key_points, annotations)


def random_corpus(rng, n_topics=2, n_args=4, n_kps=2, annotate_fraction=0.7):
    """Randomized small corpus for round-trip and property tests."""
    topics = [Topic(f"t{t}", f"Randomized debate topic number {t}") for t in range(n_topics)]
    arguments, key_points, annotations = [], [], []
    for t in range(n_topics):
        for stance in (Stance.PRO, Stance.CON):
            tag = f"{t}{stance.value[0]}"
            for i in range(n_args):
                arguments.append(
                    Argument(f"a{tag}{i}", f"t{t}", stance,
                             f"Argument {i} with flavor {rng.integers(0, 1000)} for slice {tag}.")
                )
            for j in range(n_kps):
                key_points.append(
                    KeyPoint(f"k{tag}{j}", f"t{t}", stance,
                             f"Key point {j} of slice {tag}")
                )
            for i in range(n_args):
                for j in range(n_kps):
                    if rng.random() < annotate_fraction:
                        label = Label.MATCH if rng.random() < 0.4 else Label.NO_MATCH
                        annotations.append(MatchAnnotation(f"a{tag}{i}", f"k{tag}{j}", label))
    return make_corpus(topics, arguments, key_points, annotations)


@pytest.fixture
def mini_corpus_dir():
    return FIXTURES / "mini_corpus"


@pytest.fixture
def mini_config_path():
    return FIXTURES / "mini.toml"
