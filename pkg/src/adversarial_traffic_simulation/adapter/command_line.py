import argparse
import sys
from pathlib import Path

from aws_lambda_powertools import Logger
from dependency_injector.wiring import inject, Provide
from pydantic import ValidationError

from adversarial_traffic_simulation.adapter.command_line_model import CommandLineArguments, Command, log_level
from adversarial_traffic_simulation.adapter.container import Container
from adversarial_traffic_simulation.adapter.file_result_writer import FileResultWriter
from adversarial_traffic_simulation.adapter.svg_plotter import SvgPlotter
from adversarial_traffic_simulation.configuration import RunConfig, SimulationMode, PlannerKind, SelectionMode, \
    OpponentPolicy
from adversarial_traffic_simulation.errors import AdvSimError, ConfigurationError, EmptyCorpusError
from adversarial_traffic_simulation.metrics import evaluate_batch
from adversarial_traffic_simulation.model import ScorerModel, Scenario, InteractionLabel
from adversarial_traffic_simulation.opponent import generate_labels, fit_scorer, training_examples
from adversarial_traffic_simulation.services import ScenarioRepository, ScorerModelRepository
from adversarial_traffic_simulation.simulation_application import AdversarialSimulationApplication
from adversarial_traffic_simulation.synthetic import fixture_corpus


_HELP = {
    Command.SYNTHESIZE: 'write the synthetic fixture corpus as scenario files',
    Command.LABEL: 'pseudo-label every surrounding vehicle of a corpus',
    Command.TRAIN: 'train the opponent scorer from labels',
    Command.GENERATE: 'run adversarial episodes over a corpus',
    Command.REPLAY: 'run the null-adversary baseline, the opponent replays its log',
    Command.EVALUATE: 'compute efficiency and naturalness reports',
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='advsim', description='Closed-loop adversarial traffic scenario simulation')
    commands = parser.add_subparsers(dest='command', required=True)

    def add(command: Command, *flags: str) -> argparse.ArgumentParser:
        subparser = commands.add_parser(command.value, help=_HELP[command])
        for flag in flags:
            subparser.add_argument(f"--{flag}", type=Path, required=flag in ('out',))
        subparser.add_argument('--config', type=Path)
        subparser.add_argument('--seed', type=int)
        return subparser

    synthesize = add(Command.SYNTHESIZE, 'out')
    synthesize.add_argument('--count', type=int, default=20)

    add(Command.LABEL, 'corpus', 'out')
    add(Command.TRAIN, 'corpus', 'labels', 'out')
    add(Command.EVALUATE, 'corpus', 'results', 'out')

    for command in (Command.GENERATE, Command.REPLAY):
        subparser = add(command, 'corpus', 'out', 'model')
        subparser.add_argument('--mode', choices=[mode.value for mode in SimulationMode])
        subparser.add_argument('--update-cycle', dest='update_cycle', type=float)
        subparser.add_argument('--planner', choices=[kind.value for kind in PlannerKind])
        subparser.add_argument('--n1', type=int)
        subparser.add_argument('--n2', type=int)
        subparser.add_argument('--lambda', dest='reaction_sensitivity', type=float)
        subparser.add_argument('--temperature', type=float)
        subparser.add_argument('--select', choices=[mode.value for mode in SelectionMode])
        subparser.add_argument('--jobs', type=int)
        if command == Command.GENERATE:
            subparser.add_argument('--policy', choices=[OpponentPolicy.ADVERSARIAL.value,
                                                        OpponentPolicy.RANDOM_SEARCH.value])

    return parser


def _required(path: Path | None, flag: str) -> Path:
    if path is None:
        raise ConfigurationError(f"--{flag} is required")
    return path


@inject
def _synthesize(arguments: CommandLineArguments, run: RunConfig,
                repository: ScenarioRepository = Provide[Container.scenario_repository]):
    for scenario in fixture_corpus(arguments.count, run.seed):
        repository.save_scenario(scenario, run.out / f"{scenario.scenario_id}.json")


@inject
def _label(run: RunConfig, repository: ScenarioRepository = Provide[Container.scenario_repository],
           writer: FileResultWriter = Provide[Container.result_writer], logger: Logger = Provide[Container.logger]):
    corpus = repository.load_corpus(_required(run.corpus, 'corpus'))
    labels: dict[str, list[InteractionLabel]] = {}
    failures: dict[str, str] = {}

    for scenario in corpus:
        try:
            labels[scenario.scenario_id] = generate_labels(scenario)
        except AdvSimError as e:
            logger.warning(f"scenario {scenario.scenario_id} could not be labelled: {e}")
            failures[scenario.scenario_id] = str(e)

    writer.write_labels(labels, failures, run.out)


def _train(corpus: list[Scenario], labels: dict[str, list[InteractionLabel]], run: RunConfig, logger: Logger):
    examples = []
    for scenario in corpus:
        examples.extend(training_examples(scenario, labels.get(scenario.scenario_id, [])))

    model, metrics = fit_scorer(examples, run.scorer, run.seed)
    logger.info(f"scorer trained on {len(examples)} examples: loss {metrics.initial_loss:.4f} -> "
                f"{metrics.final_loss:.4f}, accuracy {metrics.accuracy:.3f}")

    return model, metrics


@inject
def _train_command(run: RunConfig, repository: ScenarioRepository = Provide[Container.scenario_repository],
                   models: ScorerModelRepository = Provide[Container.scorer_model_repository],
                   writer: FileResultWriter = Provide[Container.result_writer],
                   logger: Logger = Provide[Container.logger]):
    corpus = repository.load_corpus(_required(run.corpus, 'corpus'))
    labels = writer.read_labels(_required(run.labels, 'labels'))

    model, metrics = _train(corpus, labels, run, logger)

    models.save_model(model, run.out)
    writer.write_training_metrics(metrics, run.out.with_name(run.out.stem + '.metrics.json'))


@inject
def _generate(run: RunConfig, repository: ScenarioRepository = Provide[Container.scenario_repository],
              models: ScorerModelRepository = Provide[Container.scorer_model_repository],
              writer: FileResultWriter = Provide[Container.result_writer],
              plotter: SvgPlotter = Provide[Container.plotter],
              application_factory=Provide[Container.simulation_application.provider],
              logger: Logger = Provide[Container.logger]):
    corpus = repository.load_corpus(_required(run.corpus, 'corpus'))

    if run.scorer_model is not None:
        model: ScorerModel = models.load_model(run.scorer_model)
    else:
        logger.info("no scorer model given, training one on the corpus pseudo-labels")
        labels = {scenario.scenario_id: generate_labels(scenario) for scenario in corpus}
        model, _ = _train(corpus, labels, run, logger)

    application: AdversarialSimulationApplication = application_factory(scorer_model=model)
    results = application.run_batch(corpus, run.sim, run.jobs)

    writer.write_run_config(run.out)
    writer.write_episodes(results, run.out)

    by_id = {scenario.scenario_id: scenario for scenario in corpus}
    for result in results:
        if result.ego_track is not None:
            plotter.plot_episode(result, by_id[result.scenario_id], run.out / 'plots' / f"{result.scenario_id}.svg")


@inject
def _evaluate(run: RunConfig, repository: ScenarioRepository = Provide[Container.scenario_repository],
              writer: FileResultWriter = Provide[Container.result_writer]):
    corpus = repository.load_corpus(_required(run.corpus, 'corpus'))
    results = writer.read_episodes(_required(run.results, 'results'))
    if not results:
        raise EmptyCorpusError(f"no episode results found in {run.results}")

    efficiency, naturalness = evaluate_batch(results, corpus, run.histogram)

    writer.write_run_config(run.out)
    writer.write_reports(efficiency, naturalness, run.out)


def main(argv: list[str] | None = None) -> int:
    namespace = _parser().parse_args(argv)
    container = Container()
    container.config.log_level.from_value(log_level())
    logger = container.logger()

    try:
        arguments = CommandLineArguments.model_validate({key: value for key, value in vars(namespace).items()
                                                         if value is not None})
        run = arguments.to_run_config()

        container.config.run.from_value(run.model_dump(mode='json'))
        container.wire(modules=[__name__])

        match arguments.command:
            case Command.SYNTHESIZE:
                _synthesize(arguments, run)
            case Command.LABEL:
                _label(run)
            case Command.TRAIN:
                _train_command(run)
            case Command.GENERATE | Command.REPLAY:
                _generate(run)
            case Command.EVALUATE:
                _evaluate(run)
            case _:
                raise ConfigurationError(f"Invalid command: {arguments.command}")
    except ValidationError as e:
        logger.error(f"invalid arguments: {e}")
        print(f"advsim: invalid arguments: {e.errors()[0]['msg']}", file=sys.stderr)
        return ConfigurationError.exit_code
    except AdvSimError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"advsim: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        container.unwire()

    return 0


if __name__ == '__main__':
    sys.exit(main())
