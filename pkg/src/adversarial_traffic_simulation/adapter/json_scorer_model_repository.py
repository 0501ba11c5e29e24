from pathlib import Path

from aws_lambda_powertools import Logger
from pydantic import ValidationError

from adversarial_traffic_simulation.errors import ConfigurationError
from adversarial_traffic_simulation.model import ScorerModel, SCORER_SCHEMA_VERSION
from adversarial_traffic_simulation.services import ScorerModelRepository


class JsonScorerModelRepository(ScorerModelRepository):
    def __init__(self, logger: Logger):
        self.logger = logger

    def load_model(self, path: Path) -> ScorerModel:
        if not path.is_file():
            self.logger.error(f"Scorer model file {path} does not exist")
            raise ConfigurationError(f"scorer model file {path} does not exist")

        try:
            model = ScorerModel.model_validate_json(path.read_text(encoding='utf-8'))
        except ValidationError as e:
            self.logger.error(f"Failed to parse scorer model {path}")

            raise ConfigurationError(f"invalid scorer model {path}: {e.errors()[0]['msg']}") from e
        except UnicodeDecodeError as e:
            self.logger.error(f"Scorer model {path} is not UTF-8")

            raise ConfigurationError(f"scorer model {path} is not UTF-8: {e}") from e

        if model.schema_version != SCORER_SCHEMA_VERSION:
            raise ConfigurationError(f"scorer model {path} has schema version {model.schema_version}, "
                                     f"expected {SCORER_SCHEMA_VERSION}")

        return model

    def save_model(self, model: ScorerModel, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.model_dump_json(indent=1), encoding='utf-8')

        self.logger.info(f"scorer model written to {path}")
