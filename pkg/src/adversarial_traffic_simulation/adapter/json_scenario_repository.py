import json
from pathlib import Path

from aws_lambda_powertools import Logger
from pydantic import ValidationError

from adversarial_traffic_simulation.errors import ScenarioParseError, ScenarioValidationError, ConfigurationError, \
    EmptyCorpusError
from adversarial_traffic_simulation.model import Scenario
from adversarial_traffic_simulation.services import ScenarioRepository


def _field_path(location: tuple) -> str:
    return '.'.join(str(part) for part in location) or '$'


class JsonScenarioRepository(ScenarioRepository):
    """One scenario per JSON file; a corpus is a directory of such files, loaded in file name order."""

    def __init__(self, logger: Logger):
        self.logger = logger

    def load_scenario(self, path: Path) -> Scenario:
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError:
            self.logger.error(f"Scenario file {path} does not exist")
            raise ConfigurationError(f"scenario file {path} does not exist")
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            self.logger.error(f"Failed to parse scenario {path}: {e}")
            raise ScenarioParseError('$', str(e)) from e

        if isinstance(data, dict) and data.get('id') is None and data.get('scenario_id') is None:
            data = {**data, 'id': path.stem}

        try:
            return Scenario.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            field = _field_path(error['loc'])
            self.logger.error(f"Failed to parse scenario {path}: field {field}: {error['msg']}")

            raise ScenarioParseError(field, error['msg']) from e
        except ScenarioValidationError as e:
            self.logger.error(f"Invalid scenario {path}: {e}")

            raise e

    def save_scenario(self, scenario: Scenario, path: Path):
        """An id-less scenario is written without `id` and reloads with the file stem as its id."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(scenario.model_dump_json(by_alias=True, exclude_none=True, indent=1), encoding='utf-8')

    def load_corpus(self, path: Path) -> list[Scenario]:
        if not path.exists():
            raise ConfigurationError(f"corpus path {path} does not exist")

        files = sorted(path.glob('*.json')) if path.is_dir() else [path]
        if not files:
            raise EmptyCorpusError(f"corpus {path} contains no scenario files")

        corpus = [self.load_scenario(file) for file in files]
        self.logger.info(f"loaded {len(corpus)} scenarios from {path}")

        return corpus
