import csv
import hashlib
import json
from pathlib import Path

from aws_lambda_powertools import Logger
from pydantic import BaseModel, ValidationError

from adversarial_traffic_simulation.errors import ConfigurationError, ScenarioParseError
from adversarial_traffic_simulation.model import EpisodeResult, RunArtifact, InteractionLabel, EfficiencyReport, \
    NaturalnessReport
from adversarial_traffic_simulation.services import EpisodeResultWriter

EPISODE_COLUMNS = (
    'scenario_id',
    'status',
    'termination',
    'seed',
    'opponent_id',
    'collision',
    'collision_time',
    'relative_speed',
    'contact_agent_id',
    'with_opponent',
    'replans',
    'plan_exhausted',
    'config_digest',
)

REPORT_COLUMNS = (
    'collision_rate',
    'mean_collision_time',
    'mean_relative_speed',
    'mean_generation_time',
    'episodes',
    'valid_episodes',
    'invalid_episodes',
    'failed_episodes',
    'collisions',
    'kl_divergence',
    'wasserstein_distance',
    'sspd',
    'hausdorff',
    'scenarios_compared',
    'seed',
    'config_digest',
)


def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_json(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + '\n', encoding='utf-8')


class FileResultWriter(EpisodeResultWriter):
    """
    Writes run artifacts below an output directory. Every JSON artifact is wrapped in a RunArtifact envelope carrying
    the resolved run configuration and seed; CSVs carry the seed and a digest of the simulation configuration.
    """

    def __init__(self, run_config: dict, logger: Logger):
        self.run_config = run_config
        self.logger = logger

    @property
    def seed(self) -> int:
        return int(self.run_config.get('sim', {}).get('seed', 0))

    @property
    def config_digest(self) -> str:
        """Digest of the settings that determine results; paths and parallelism are left out."""
        relevant = {key: self.run_config.get(key) for key in ('sim', 'scorer', 'histogram')}
        canonical = json.dumps(relevant, sort_keys=True, separators=(',', ':'))

        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]

    def artifact(self, payload: BaseModel | dict) -> dict:
        data = payload.model_dump(mode='json') if isinstance(payload, BaseModel) else payload
        return RunArtifact(seed=self.seed, config=self.run_config, payload=data).model_dump(mode='json')

    def write_run_config(self, out: Path):
        _write_json(out / 'run_config.json', self.run_config)

    def write_episodes(self, results: list[EpisodeResult], out: Path):
        out.mkdir(parents=True, exist_ok=True)

        for result in results:
            _write_json(out / 'episodes' / f"{result.scenario_id}.json", self.artifact(result))

        with open(out / 'episodes.csv', 'w', newline='', encoding='utf-8') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(EPISODE_COLUMNS)

            for result in results:
                writer.writerow([_cell(value) for value in (
                    result.scenario_id,
                    result.status.value,
                    result.termination.value,
                    result.seed,
                    result.opponent_id,
                    result.collision.occurred,
                    result.collision_time_since_start,
                    result.collision.relative_speed,
                    result.collision.agent_id,
                    result.collision.with_opponent,
                    len(result.replans),
                    result.plan_exhausted,
                    self.config_digest,
                )])

        self.logger.info(f"{len(results)} episode results written to {out}")

    def read_episodes(self, path: Path) -> list[EpisodeResult]:
        directory = path / 'episodes' if (path / 'episodes').is_dir() else path
        if not directory.exists():
            raise ConfigurationError(f"results path {path} does not exist")

        files = sorted(directory.glob('*.json')) if directory.is_dir() else [directory]
        results = []

        for file in files:
            try:
                artifact = RunArtifact.model_validate_json(file.read_text(encoding='utf-8'))
                results.append(EpisodeResult.model_validate(artifact.payload))
            except ValidationError as e:
                self.logger.error(f"Failed to parse episode result {file}")

                raise ScenarioParseError(str(file), e.errors()[0]['msg']) from e
            except UnicodeDecodeError as e:
                self.logger.error(f"Episode result {file} is not UTF-8")

                raise ScenarioParseError(str(file), str(e)) from e

        return results

    def write_labels(self, labels: dict[str, list[InteractionLabel]], failures: dict[str, str], path: Path):
        """One JSON line per scenario with its labels; scenarios that could not be labelled go to a sidecar."""
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, 'w', encoding='utf-8') as file:
            for scenario_id, scenario_labels in labels.items():
                group = {
                    'scenario_id': scenario_id,
                    'labels': [{'agent_id': label.agent_id, 'positive': label.positive} for label in scenario_labels],
                }
                file.write(json.dumps(group, sort_keys=True) + '\n')

        _write_json(path.with_name(path.stem + '.failures.json'),
                    [{'scenario_id': scenario_id, 'error': error} for scenario_id, error in failures.items()])

        self.logger.info(f"labels of {len(labels)} scenarios written to {path}, {len(failures)} failures")

    def read_labels(self, path: Path) -> dict[str, list[InteractionLabel]]:
        if not path.is_file():
            raise ConfigurationError(f"label file {path} does not exist")

        try:
            lines = path.read_text(encoding='utf-8').splitlines()
        except UnicodeDecodeError as e:
            self.logger.error(f"Label file {path} is not UTF-8")

            raise ScenarioParseError('$', str(e)) from e

        labels = {}
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                group = json.loads(line)
                labels[group['scenario_id']] = [
                    InteractionLabel(scenario_id=group['scenario_id'], agent_id=label['agent_id'],
                                     positive=label['positive'])
                    for label in group['labels']
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
                self.logger.error(f"Failed to parse line {number} of label file {path}")

                raise ScenarioParseError(f"line {number}", str(e)) from e

        return labels

    def write_training_metrics(self, metrics: BaseModel, path: Path):
        _write_json(path, self.artifact(metrics))

    def write_reports(self, efficiency: EfficiencyReport, naturalness: NaturalnessReport, out: Path):
        _write_json(out / 'report.json', self.artifact({
            'efficiency': efficiency.model_dump(mode='json'),
            'naturalness': naturalness.model_dump(mode='json'),
        }))

        row = {
            **efficiency.model_dump(),
            **naturalness.model_dump(exclude={'histogram'}),
            'seed': self.seed,
            'config_digest': self.config_digest,
        }

        with open(out / 'report.csv', 'w', newline='', encoding='utf-8') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(REPORT_COLUMNS)
            writer.writerow([_cell(row[column]) for column in REPORT_COLUMNS])

        self.logger.info(f"reports written to {out}")
