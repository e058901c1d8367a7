import pytest

from retrocode.corpus import build_corpus
from retrocode.synth import generate_programs


@pytest.fixture(scope="session")
def programs() -> list[str]:
    return generate_programs(200, seed=11)


@pytest.fixture(scope="session")
def small_corpus(programs):
    return build_corpus([(f"f{i:03d}.py", p) for i, p in enumerate(programs[:20])], fragment_length=32)
