"""Regenerate the packaged grid fixtures under src/lvsurrogate/data/."""
import os

from lvsurrogate.grid_model import FIXTURE_NOTES, FixtureKind, build_fixture, serialize_grid

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "src", "lvsurrogate", "data")

if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    for kind in FixtureKind:
        path = os.path.join(DATA, f"{kind.value}.json")
        with open(path, "w") as fh:
            fh.write(serialize_grid(build_fixture(kind), comment=FIXTURE_NOTES[kind]) + "\n")
        print(path)
