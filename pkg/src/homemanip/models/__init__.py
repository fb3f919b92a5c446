"""Stock robot descriptions shipped as JSON."""
from importlib import resources

STOCK_MODELS = ("single_arm", "dual_arm")


def model_json(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.json").read_text()
