"""Transport-domain content: GTFS input, NeTEx output and the bundled vocabulary."""
from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"
MAPPINGS_DIR = DATA_DIR / "mappings"
TEMPLATES_DIR = DATA_DIR / "templates"
PIPELINES_DIR = DATA_DIR / "pipelines"
FIXTURES_DIR = DATA_DIR / "fixtures"
ONTOLOGY_PATH = DATA_DIR / "ontology" / "mini-transmodel.nt"

OT = "http://example.org/ontology/mini-transmodel#"
DATA_NS = "http://example.org/data/"


def pipeline_path(name: str) -> Path:
    """Path of a bundled pipeline config, e.g. ``pipeline_path("madrid")``."""
    return PIPELINES_DIR / f"{name}.json"
