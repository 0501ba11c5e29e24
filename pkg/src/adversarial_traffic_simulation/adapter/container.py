import sys

from aws_lambda_powertools import Logger
from dependency_injector import containers, providers

from adversarial_traffic_simulation.adapter.file_result_writer import FileResultWriter
from adversarial_traffic_simulation.adapter.json_scenario_repository import JsonScenarioRepository
from adversarial_traffic_simulation.adapter.json_scorer_model_repository import JsonScorerModelRepository
from adversarial_traffic_simulation.adapter.svg_plotter import SvgPlotter
from adversarial_traffic_simulation.prediction import TargetDrivenPredictor
from adversarial_traffic_simulation.simulation_application import AdversarialSimulationApplication


class Container(containers.DeclarativeContainer):
    config = providers.Configuration()
    """the resolved RunConfig as a dict, plus log_level"""

    logger = providers.Singleton(
        Logger,
        service='advsim',
        level=config.log_level,
        stream=sys.stderr,
    )

    scenario_repository = providers.Singleton(
        JsonScenarioRepository,
        logger=logger,
    )

    scorer_model_repository = providers.Singleton(
        JsonScorerModelRepository,
        logger=logger,
    )

    result_writer = providers.Singleton(
        FileResultWriter,
        run_config=config.run,
        logger=logger,
    )

    plotter = providers.Singleton(
        SvgPlotter,
        logger=logger,
    )

    predictor = providers.Singleton(
        TargetDrivenPredictor,
        logger=logger,
    )

    # the scorer model is only known after loading or training, it is passed when the application is requested
    simulation_application = providers.Factory(
        AdversarialSimulationApplication,
        predictor=predictor,
        logger=logger,
    )
