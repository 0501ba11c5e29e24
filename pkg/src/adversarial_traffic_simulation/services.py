from abc import ABC, abstractmethod
from pathlib import Path

from adversarial_traffic_simulation.configuration import PredictorConfig
from adversarial_traffic_simulation.model import Scenario, HypothesisSet, TrajectoryHypothesis, Pose, ScorerModel, \
    EpisodeResult


class ScenarioRepository(ABC):
    @abstractmethod
    def load_scenario(self, path: Path) -> Scenario:
        pass

    @abstractmethod
    def save_scenario(self, scenario: Scenario, path: Path):
        pass

    @abstractmethod
    def load_corpus(self, path: Path) -> list[Scenario]:
        pass


class ScorerModelRepository(ABC):
    @abstractmethod
    def load_model(self, path: Path) -> ScorerModel:
        pass

    @abstractmethod
    def save_model(self, model: ScorerModel, path: Path):
        pass


class TrajectoryPredictor(ABC):
    """Observation in, HypothesisSet out. Learned predictors can replace the sampler behind this interface."""

    @abstractmethod
    def predict_marginal(self, observation: Scenario, agent_id: str, config: PredictorConfig) -> HypothesisSet:
        pass

    @abstractmethod
    def predict_conditional(self, observation: Scenario, ego_id: str, opponent_trajectory: TrajectoryHypothesis,
                            config: PredictorConfig) -> HypothesisSet:
        pass


class EgoPlanner(ABC):
    @abstractmethod
    def step(self, state: Scenario, t_now: float) -> Pose:
        """
        :param state: simulated world up to t_now; the last state of every track is its current state
        :param t_now: current simulation time
        :return: the ego pose at t_now + dt
        """
        pass


class EpisodeResultWriter(ABC):
    @abstractmethod
    def write_episodes(self, results: list[EpisodeResult], out: Path):
        pass

    @abstractmethod
    def read_episodes(self, path: Path) -> list[EpisodeResult]:
        pass
