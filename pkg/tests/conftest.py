import numpy as np
import pytest

from clockauction.engine import ProcessingRule
from clockauction.generate import generate_matched_instances
from clockauction.harness import (
    tiny_rules,
    tiny_sampling,
    two_bidder_rules,
    two_bidder_sampling,
)
from clockauction.policy import Policy
from clockauction.tree import compile_game


@pytest.fixture(scope="session")
def s0_rules():
    """Stock two-bidder auction under drop-by-bidder."""
    return two_bidder_rules(ProcessingRule.DROP_BY_BIDDER)


@pytest.fixture(scope="session")
def s0_rules_license():
    return two_bidder_rules(ProcessingRule.DROP_BY_LICENSE)


@pytest.fixture(scope="session")
def one_type_pair():
    """A matched 1-type instance pair (shared values, both rules)."""
    return generate_matched_instances(
        two_bidder_sampling(1, seed=0),
        [two_bidder_rules(ProcessingRule.DROP_BY_BIDDER),
         two_bidder_rules(ProcessingRule.DROP_BY_LICENSE)],
    )


@pytest.fixture(scope="session")
def three_type_instance():
    return generate_matched_instances(
        two_bidder_sampling(3, seed=3),
        [two_bidder_rules(ProcessingRule.DROP_BY_LICENSE)],
    )[0]


@pytest.fixture(scope="session")
def tiny_instance():
    return generate_matched_instances(
        tiny_sampling(seed=0),
        [tiny_rules(ProcessingRule.DROP_BY_LICENSE)],
    )[0]


@pytest.fixture(scope="session")
def tiny_compiled(tiny_instance):
    return compile_game(tiny_instance)


def random_policy(cg, rng: np.random.Generator) -> Policy:
    pol = Policy()
    for s in cg.infosets:
        pol.actions[s.key] = s.actions
        pol[s.key] = rng.dirichlet(np.ones(len(s.actions)))
    return pol
