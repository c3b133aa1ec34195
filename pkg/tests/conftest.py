import numpy as np
import pytest

from app.models.schemas import GridSpec
from app.services.canonical_service import CanonicalService
from app.services.comparison_service import ComparisonService
from app.services.decomposition_service import DecompositionService
from app.services.estimator_service import EstimatorService
from app.services.spectral_service import SpectralService
from app.services.symbol_service import SymbolService


@pytest.fixture(autouse=True)
def lab_environment(monkeypatch, tmp_path):
    """Keep every run folder inside the test's temporary directory"""
    monkeypatch.setenv("LAB_OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("LAB_THREADS", "1")
    monkeypatch.setenv("LAB_SPHERE_SAMPLES", "2000")
    monkeypatch.setenv("LAB_ENSEMBLE_SIZE", "8")
    return tmp_path


@pytest.fixture
def spectral():
    return SpectralService(workers=1)


@pytest.fixture
def estimator(spectral):
    return EstimatorService(spectral, workers=1)


@pytest.fixture
def symbols():
    return SymbolService()


@pytest.fixture
def comparison(spectral, estimator):
    return ComparisonService(spectral, estimator)


@pytest.fixture
def decomposition(spectral, estimator):
    return DecompositionService(spectral, estimator)


@pytest.fixture
def canonical(spectral, estimator):
    return CanonicalService(spectral, estimator)


@pytest.fixture
def torus_grid():
    """2 pi periodic grid, so the lattice is the integers"""
    return GridSpec.uniform(1, 2 * np.pi, 16)


@pytest.fixture
def line_grid():
    return GridSpec.uniform(1, 40.0, 256)
