from pathlib import Path

import pytest

import vwa

DATA_DIR = Path(vwa.__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


def load_model_text(name: str) -> str:
    return (DATA_DIR / f"{name}.model").read_text()
